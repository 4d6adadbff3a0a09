#pragma once

// Umbrella header for the event-based visual place recognition library.

#include "evpr/config.hpp"
#include "evpr/core/autograd.hpp"
#include "evpr/core/random.hpp"
#include "evpr/core/tensor.hpp"
#include "evpr/errors.hpp"
#include "evpr/eval/ablate.hpp"
#include "evpr/eval/recall.hpp"
#include "evpr/events/event.hpp"
#include "evpr/events/io.hpp"
#include "evpr/events/simulate.hpp"
#include "evpr/events/split.hpp"
#include "evpr/mining/database.hpp"
#include "evpr/mining/triplets.hpp"
#include "evpr/net/backbone.hpp"
#include "evpr/net/model.hpp"
#include "evpr/net/vlad.hpp"
#include "evpr/repr/grids.hpp"
#include "evpr/repr/kernel.hpp"
#include "evpr/toy/world.hpp"
#include "evpr/train/batch.hpp"
#include "evpr/train/loss.hpp"
#include "evpr/train/optimizer.hpp"
#include "evpr/train/trainer.hpp"
