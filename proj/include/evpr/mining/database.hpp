#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "evpr/core/random.hpp"
#include "evpr/core/tensor.hpp"
#include "evpr/errors.hpp"
#include "evpr/events/event.hpp"
#include "evpr/events/io.hpp"
#include "evpr/net/model.hpp"

namespace evpr::mining {

/// One geo-tagged observation: an event bin plus planar coordinates in
/// meters (pre-projected; projecting raw GPS is the dataset's job).
struct DbEntry {
  std::string id;
  std::string place_id;
  double x = 0.0;
  double y = 0.0;
  events::EventBin bin;
};

/// In-memory geo-tagged event database with a per-entry descriptor cache.
/// The cache carries the version stamp (model step) of the network that
/// produced it; mining reads the cache, refresh_cache rewrites it wholesale.
///
/// Reads are const and may run concurrently; refresh_cache is a writer and
/// requires external synchronization against readers.
class GeoTaggedDatabase {
 public:
  GeoTaggedDatabase() = default;
  explicit GeoTaggedDatabase(std::vector<DbEntry> entries) : entries_(std::move(entries)) {
    for (const DbEntry& e : entries_)
      if (!std::isfinite(e.x) || !std::isfinite(e.y))
        throw DataError("database entry '" + e.id + "': non-finite coordinates");
  }

  static GeoTaggedDatabase load(const std::filesystem::path& manifest_path) {
    const auto records = events::read_manifest(manifest_path);
    const auto base = manifest_path.parent_path();
    std::vector<DbEntry> entries;
    entries.reserve(records.size());
    for (const auto& r : records) {
      DbEntry e;
      e.bin = events::read_events(base / r.path);
      e.id = e.bin.id();
      e.place_id = r.place_id;
      e.x = r.x;
      e.y = r.y;
      entries.push_back(std::move(e));
    }
    return GeoTaggedDatabase(std::move(entries));
  }

  int size() const { return static_cast<int>(entries_.size()); }
  const DbEntry& entry(int i) const { return entries_[static_cast<std::size_t>(i)]; }
  const std::vector<DbEntry>& entries() const { return entries_; }

  double geo_distance2(int a, int b) const {
    const DbEntry& ea = entries_[static_cast<std::size_t>(a)];
    const DbEntry& eb = entries_[static_cast<std::size_t>(b)];
    const double dx = ea.x - eb.x, dy = ea.y - eb.y;
    return dx * dx + dy * dy;
  }

  // -- descriptor cache -----------------------------------------------------

  bool cache_valid() const { return cache_.size() == entries_.size() && !entries_.empty(); }
  std::int64_t cache_version() const { return cache_version_; }

  const ag::Tensor& cached_descriptor(int i) const {
    if (!cache_valid()) throw DataError("descriptor cache not populated");
    return cache_[static_cast<std::size_t>(i)];
  }

  double cached_distance2(int a, int b) const {
    return ag::squared_l2_distance(cached_descriptor(a), cached_descriptor(b));
  }

  /// Recomputes every cached descriptor with the current model and stamps
  /// the cache with the model's step counter.
  void refresh_cache(const net::Model& model) {
    cache_.clear();
    cache_.reserve(entries_.size());
    for (const DbEntry& e : entries_) cache_.push_back(model.describe(e.bin));
    cache_version_ = model.step;
  }

  /// Direct cache injection for tests and tools that bring their own
  /// descriptors (dimension-checked against entry count only).
  void set_cache(std::vector<ag::Tensor> descriptors, std::int64_t version) {
    if (descriptors.size() != entries_.size())
      throw ShapeError("set_cache: descriptor count does not match database size");
    cache_ = std::move(descriptors);
    cache_version_ = version;
  }

 private:
  std::vector<DbEntry> entries_;
  std::vector<ag::Tensor> cache_;
  std::int64_t cache_version_ = -1;
};

/// Deterministic split of a database into geographically non-overlapping
/// train and test sides, by place. Within the test side, each place's bins
/// are divided into database entries and queries; places with a single bin
/// contribute to the database only. Training queries are the train-side
/// entries that have at least one potential positive; entries without one
/// are excluded here, at split time, so epochs have a fixed length.
struct DatasetSplit {
  std::vector<int> train;          // train-side entries (database and query pool)
  std::vector<int> train_queries;  // train entries usable as queries
  std::vector<int> test_db;
  std::vector<int> test_queries;
};

inline DatasetSplit split_database(const GeoTaggedDatabase& db, double test_place_fraction,
                                   double query_fraction, double positive_radius_m,
                                   std::uint64_t seed) {
  std::map<std::string, std::vector<int>> by_place;
  for (int i = 0; i < db.size(); ++i) by_place[db.entry(i).place_id].push_back(i);

  std::vector<std::string> places;
  places.reserve(by_place.size());
  for (const auto& [place, idx] : by_place) places.push_back(place);
  rng::Engine engine(rng::derive_seed(seed, "dataset-split"));
  engine.shuffle(places);

  const int n_test = std::max(1, static_cast<int>(std::floor(
                                     static_cast<double>(places.size()) * test_place_fraction)));
  DatasetSplit split;
  for (std::size_t pi = 0; pi < places.size(); ++pi) {
    const auto& members = by_place[places[pi]];
    const bool is_test = pi < static_cast<std::size_t>(n_test);
    if (!is_test) {
      split.train.insert(split.train.end(), members.begin(), members.end());
      continue;
    }
    if (members.size() == 1) {
      split.test_db.push_back(members[0]);
      continue;
    }
    const int n_query = std::max(
        1, static_cast<int>(std::floor(static_cast<double>(members.size()) * query_fraction)));
    const int n_db = static_cast<int>(members.size()) - n_query;
    for (std::size_t j = 0; j < members.size(); ++j) {
      if (j < static_cast<std::size_t>(n_db))
        split.test_db.push_back(members[j]);
      else
        split.test_queries.push_back(members[j]);
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test_db.begin(), split.test_db.end());
  std::sort(split.test_queries.begin(), split.test_queries.end());

  const double r2 = positive_radius_m * positive_radius_m;
  for (int q : split.train) {
    bool has_positive = false;
    for (int other : split.train) {
      if (other != q && db.geo_distance2(q, other) <= r2) {
        has_positive = true;
        break;
      }
    }
    if (has_positive) split.train_queries.push_back(q);
  }
  return split;
}

}  // namespace evpr::mining
