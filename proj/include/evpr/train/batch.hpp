#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evpr/events/event.hpp"
#include "evpr/mining/database.hpp"
#include "evpr/mining/triplets.hpp"

namespace evpr::train {

/// Sparse bins have no fixed sample size, so a batch is the concatenation of
/// all member bins' events plus a per-event index column naming the source
/// sub-bin. Descriptors computed from the batch are split back by that index.
struct AssembledBatch {
  struct SubBin {
    std::size_t first_event = 0;  // offset into events/bin_index
    std::size_t event_count = 0;
    events::Geometry geometry;
    std::string id;
    int db_index = -1;
  };
  struct TripletSpan {
    int query_sub = -1;
    int positive_sub = -1;
    std::vector<int> negative_subs;
    int db_query = -1;  // original database index, for diagnostics
  };

  std::vector<events::Event> events;  // query, best positive, negatives, in turn
  std::vector<int> bin_index;         // per-event source sub-bin
  std::vector<SubBin> sub_bins;
  std::vector<TripletSpan> triplets;
  int skipped = 0;  // triplets dropped for having no negatives

  /// Reconstructs the member bins from the flat arrays.
  std::vector<events::EventBin> split() const {
    std::vector<events::EventBin> out;
    out.reserve(sub_bins.size());
    for (const SubBin& sb : sub_bins) {
      std::vector<events::Event> ev(events.begin() + static_cast<std::ptrdiff_t>(sb.first_event),
                                    events.begin() + static_cast<std::ptrdiff_t>(sb.first_event +
                                                                                 sb.event_count));
      out.emplace_back(std::move(ev), sb.geometry, sb.id);
    }
    return out;
  }
};

/// Flattens mined triplets into one batch. For each triplet the query, the
/// best positive and the hard negatives are appended in that order; each
/// event carries the index of its sub-bin. Triplets without hard negatives
/// are skipped (counted in `skipped`) and do not consume a sub-bin index.
inline AssembledBatch assemble_batch(const mining::GeoTaggedDatabase& db,
                                     const std::vector<mining::TrainingTriplet>& triplets) {
  AssembledBatch batch;
  auto append = [&batch, &db](int db_index) {
    const auto& entry = db.entry(db_index);
    AssembledBatch::SubBin sb;
    sb.first_event = batch.events.size();
    sb.event_count = entry.bin.size();
    sb.geometry = entry.bin.geometry();
    sb.id = entry.bin.id();
    sb.db_index = db_index;
    const int sub = static_cast<int>(batch.sub_bins.size());
    for (const events::Event& e : entry.bin.events()) {
      batch.events.push_back(e);
      batch.bin_index.push_back(sub);
    }
    batch.sub_bins.push_back(std::move(sb));
    return sub;
  };

  for (const mining::TrainingTriplet& t : triplets) {
    if (t.hard_negatives.empty()) {
      ++batch.skipped;
      continue;
    }
    AssembledBatch::TripletSpan span;
    span.db_query = t.query;
    span.query_sub = append(t.query);
    span.positive_sub = append(t.best_positive);
    for (int n : t.hard_negatives) span.negative_subs.push_back(append(n));
    batch.triplets.push_back(std::move(span));
  }
  return batch;
}

}  // namespace evpr::train
