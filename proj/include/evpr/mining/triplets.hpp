#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

#include "evpr/config.hpp"
#include "evpr/core/random.hpp"
#include "evpr/mining/database.hpp"

namespace evpr::mining {

/// A mined training triplet, as indices into the database.
struct TrainingTriplet {
  int query = -1;
  int best_positive = -1;
  std::vector<int> hard_negatives;  // ascending cached-descriptor distance
};

/// All entries within the positive radius of the query (inclusive boundary),
/// excluding the query itself. Ascending index order.
inline std::vector<int> potential_positives(const GeoTaggedDatabase& db, int query_index,
                                            double radius_m) {
  if (!(radius_m > 0.0)) throw ParamError("potential_positives: radius must be > 0");
  const double r2 = radius_m * radius_m;
  std::vector<int> out;
  for (int i = 0; i < db.size(); ++i) {
    if (i == query_index) continue;
    if (db.geo_distance2(query_index, i) <= r2) out.push_back(i);
  }
  return out;
}

/// Restriction of potential_positives to a candidate pool (used when mining
/// runs inside one side of a dataset split).
inline std::vector<int> potential_positives(const GeoTaggedDatabase& db, int query_index,
                                            double radius_m, const std::vector<int>& pool) {
  if (!(radius_m > 0.0)) throw ParamError("potential_positives: radius must be > 0");
  const double r2 = radius_m * radius_m;
  std::vector<int> out;
  for (int i : pool) {
    if (i == query_index) continue;
    if (db.geo_distance2(query_index, i) <= r2) out.push_back(i);
  }
  return out;
}

/// The candidate with the smallest cached-descriptor distance to the query;
/// ties break to the lowest index. Throws when the candidate set is empty
/// (such queries are dropped by the caller).
inline int best_positive(const GeoTaggedDatabase& db, int query_index,
                         const std::vector<int>& candidates) {
  if (candidates.empty()) throw DataError("best_positive: empty candidate set");
  int best = candidates.front();
  double best_d2 = db.cached_distance2(query_index, best);
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const int c = candidates[static_cast<std::size_t>(i)];
    const double d2 = db.cached_distance2(query_index, c);
    if (d2 < best_d2 || (d2 == best_d2 && c < best)) {
      best = c;
      best_d2 = d2;
    }
  }
  return best;
}

/// Entries at geo distance >= radius from the query (the negative pool).
inline std::vector<int> negative_pool(const GeoTaggedDatabase& db, int query_index,
                                      double radius_m, const std::vector<int>& pool) {
  const double r2 = radius_m * radius_m;
  std::vector<int> out;
  for (int i : pool) {
    if (i == query_index) continue;
    if (db.geo_distance2(query_index, i) >= r2) out.push_back(i);
  }
  return out;
}

/// Uniform sample (without replacement) of n_sample entries from the
/// negative pool. When fewer are eligible, all of them come back. Output in
/// draw order; reproducible for a fixed engine state.
inline std::vector<int> sample_negatives(const GeoTaggedDatabase& db, int query_index,
                                         double radius_m, int n_sample,
                                         const std::vector<int>& pool, rng::Engine& engine) {
  if (n_sample < 1) throw ParamError("sample_negatives: n_sample must be >= 1");
  const std::vector<int> eligible = negative_pool(db, query_index, radius_m, pool);
  if (static_cast<int>(eligible.size()) <= n_sample) return eligible;
  const std::vector<int> picks =
      engine.sample_without_replacement(static_cast<int>(eligible.size()), n_sample);
  std::vector<int> out;
  out.reserve(picks.size());
  for (int p : picks) out.push_back(eligible[static_cast<std::size_t>(p)]);
  return out;
}

/// Whole-database overload.
inline std::vector<int> sample_negatives(const GeoTaggedDatabase& db, int query_index,
                                         double radius_m, int n_sample, rng::Engine& engine) {
  std::vector<int> pool(static_cast<std::size_t>(db.size()));
  for (int i = 0; i < db.size(); ++i) pool[static_cast<std::size_t>(i)] = i;
  return sample_negatives(db, query_index, radius_m, n_sample, pool, engine);
}

/// Filters sampled negatives to margin violators — cached squared descriptor
/// distance within margin of the best positive's (inclusive boundary) — and
/// keeps the n_neg closest, ascending, ties by index. An empty result means
/// the query currently contributes zero loss.
inline std::vector<int> hard_negatives(const GeoTaggedDatabase& db, int query_index,
                                       int best_positive_index, const std::vector<int>& sampled,
                                       double margin, int n_neg) {
  const double d2_pos = db.cached_distance2(query_index, best_positive_index);
  std::vector<std::pair<double, int>> violators;
  for (int s : sampled) {
    const double d2 = db.cached_distance2(query_index, s);
    if (d2 <= d2_pos + margin) violators.emplace_back(d2, s);
  }
  std::sort(violators.begin(), violators.end());
  if (static_cast<int>(violators.size()) > n_neg) violators.resize(static_cast<std::size_t>(n_neg));
  std::vector<int> out;
  out.reserve(violators.size());
  for (const auto& [d2, idx] : violators) out.push_back(idx);
  return out;
}

/// One-stop triplet construction against the cache. Returns nothing when the
/// query has no positives or no surviving hard negative.
inline std::optional<TrainingTriplet> mine_triplet(const GeoTaggedDatabase& db, int query_index,
                                                   const std::vector<int>& pool,
                                                   const MiningConfig& config, double margin,
                                                   rng::Engine& engine) {
  const auto positives = potential_positives(db, query_index, config.positive_radius_m, pool);
  if (positives.empty()) return std::nullopt;
  const int pos = best_positive(db, query_index, positives);
  const auto sampled = sample_negatives(db, query_index, config.negative_radius_m,
                                        config.num_sampled_negatives, pool, engine);
  auto hard = hard_negatives(db, query_index, pos, sampled, margin, config.num_hard_negatives);
  if (hard.empty()) return std::nullopt;
  TrainingTriplet t;
  t.query = query_index;
  t.best_positive = pos;
  t.hard_negatives = std::move(hard);
  return t;
}

}  // namespace evpr::mining
