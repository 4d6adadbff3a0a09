#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "evpr/core/random.hpp"
#include "evpr/events/event.hpp"

namespace evpr::events {

/// One grayscale frame with a timestamp. Intensities are linear (not log)
/// and must be strictly positive.
struct Frame {
  std::int64_t t = 0;  // microseconds
  Geometry geometry;
  std::vector<double> intensity;  // row-major, height x width

  double at(int x, int y) const {
    return intensity[static_cast<std::size_t>(y) * geometry.width + x];
  }
};

/// Converts an intensity-frame sequence into an event bin.
///
/// Per pixel the simulator tracks a reference log intensity. For each frame
/// transition it accumulates the log-brightness change against the reference,
/// emits floor(|change| / threshold) events whose polarity is the sign of the
/// change, and advances the reference by the emitted amount so the residual
/// carries into the next transition. Events inside one transition are spread
/// uniformly over the open interval between the two frame timestamps
/// (rounded half-up to integer microseconds); there is no intra-frame
/// brightness model that would justify anything finer. The reference is
/// initialized from frame 0, so no events precede frame 1.
inline EventBin simulate_events(const std::vector<Frame>& frames, const CameraModel& model,
                                std::string bin_id = "simulated") {
  model.validate();
  if (frames.size() < 2) throw DataError("simulate_events: need at least 2 frames");
  const Geometry geom = frames.front().geometry;
  const std::size_t n_px = static_cast<std::size_t>(geom.width) * geom.height;
  std::int64_t prev_t = frames.front().t;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    if (frames[f].geometry != geom)
      throw ShapeError("simulate_events: frame " + std::to_string(f) + " geometry differs");
    if (frames[f].intensity.size() != n_px)
      throw ShapeError("simulate_events: frame " + std::to_string(f) + " pixel count differs");
    if (f > 0 && frames[f].t <= prev_t)
      throw DataError("simulate_events: timestamps must strictly increase at frame " +
                      std::to_string(f));
    prev_t = frames[f].t;
    for (double v : frames[f].intensity)
      if (!(v > 0.0))
        throw DataError("simulate_events: non-positive intensity in frame " + std::to_string(f));
  }

  // Per-pixel thresholds (constant unless jitter is enabled).
  std::vector<double> threshold(n_px, model.contrast_threshold);
  if (model.threshold_jitter > 0.0) {
    rng::Engine jitter(rng::derive_seed(model.jitter_seed, "threshold-jitter"));
    for (auto& th : threshold) {
      th = model.contrast_threshold * (1.0 + model.threshold_jitter * jitter.normal());
      th = std::max(th, 1e-6);
    }
  }

  std::vector<double> ref(n_px);
  for (std::size_t i = 0; i < n_px; ++i) ref[i] = std::log(frames[0].intensity[i]);

  std::vector<Event> out;
  for (std::size_t f = 1; f < frames.size(); ++f) {
    const std::int64_t t_a = frames[f - 1].t;
    const std::int64_t t_b = frames[f].t;
    const double span = static_cast<double>(t_b - t_a);
    for (int y = 0; y < geom.height; ++y) {
      for (int x = 0; x < geom.width; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * geom.width + x;
        const double level = std::log(frames[f].at(x, y));
        const double delta = level - ref[i];
        if (delta == 0.0) continue;
        const double th = threshold[i];
        const auto count = static_cast<std::int64_t>(std::floor(std::fabs(delta) / th));
        if (count <= 0) continue;
        const int polarity = delta > 0.0 ? 1 : -1;
        for (std::int64_t k = 1; k <= count; ++k) {
          const double frac = static_cast<double>(k) / static_cast<double>(count + 1);
          const auto dt = static_cast<std::int64_t>(std::floor(span * frac + 0.5));
          out.push_back(Event{x, y, t_a + dt, polarity});
        }
        ref[i] += polarity * static_cast<double>(count) * th;
      }
    }
  }

  std::stable_sort(out.begin(), out.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
  return EventBin(std::move(out), geom, std::move(bin_id));
}

}  // namespace evpr::events
