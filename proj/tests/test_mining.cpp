#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "evpr/mining/database.hpp"
#include "evpr/mining/triplets.hpp"
#include "support/oracles.hpp"

using namespace evpr;
using mining::GeoTaggedDatabase;

namespace {

/// Synthetic database: random planar coordinates in a box, random unit-ish
/// descriptors injected straight into the cache. Bins are tiny placeholders
/// (mining never looks at the events themselves).
GeoTaggedDatabase synthetic_db(int n, rng::Engine& engine, double box = 200.0, int dim = 8) {
  std::vector<mining::DbEntry> entries;
  for (int i = 0; i < n; ++i) {
    mining::DbEntry e;
    e.id = "e" + std::to_string(i);
    e.place_id = "p" + std::to_string(i / 4);
    e.x = engine.uniform(-box, box);
    e.y = engine.uniform(-box, box);
    e.bin = events::EventBin({}, {4, 4}, e.id);
    entries.push_back(std::move(e));
  }
  GeoTaggedDatabase db(std::move(entries));
  std::vector<ag::Tensor> cache;
  for (int i = 0; i < n; ++i) {
    ag::Tensor t{ag::Shape{dim}};
    for (auto& v : t.vec()) v = engine.normal();
    cache.push_back(std::move(t));
  }
  db.set_cache(std::move(cache), 0);
  return db;
}

}  // namespace

TEST(Mining, BoundaryAtExactlyPositiveRadiusIsIncluded) {
  std::vector<mining::DbEntry> entries(3);
  entries[0] = {"q", "p0", 0.0, 0.0, events::EventBin({}, {4, 4}, "q")};
  entries[1] = {"on_boundary", "p1", 6.0, 8.0, events::EventBin({}, {4, 4}, "b")};  // exactly 10 m
  entries[2] = {"outside", "p2", 6.0, 8.001, events::EventBin({}, {4, 4}, "o")};
  GeoTaggedDatabase db(std::move(entries));
  const auto positives = mining::potential_positives(db, 0, 10.0);
  EXPECT_EQ(positives, (std::vector<int>{1}));
}

TEST(Mining, QueryItselfExcludedFromPositives) {
  rng::Engine engine(1);
  auto db = synthetic_db(50, engine);
  for (int q = 0; q < db.size(); ++q) {
    const auto positives = mining::potential_positives(db, q, 100.0);
    EXPECT_TRUE(std::find(positives.begin(), positives.end(), q) == positives.end());
  }
}

TEST(Mining, PositivesMatchExhaustiveScan) {
  rng::Engine engine(2);
  auto db = synthetic_db(100, engine);
  for (int q = 0; q < db.size(); q += 7) {
    for (double radius : {10.0, 60.0, 150.0}) {
      EXPECT_EQ(mining::potential_positives(db, q, radius),
                oracle::positives_reference(db, q, radius));
    }
  }
}

TEST(Mining, BestPositiveSingleCandidate) {
  rng::Engine engine(3);
  auto db = synthetic_db(10, engine);
  EXPECT_EQ(mining::best_positive(db, 0, {7}), 7);
}

TEST(Mining, BestPositivePrefersIdenticalDescriptor) {
  rng::Engine engine(4);
  auto db = synthetic_db(10, engine);
  std::vector<ag::Tensor> cache;
  for (int i = 0; i < 10; ++i) cache.push_back(db.cached_descriptor(i));
  cache[6] = cache[0];  // entry 6 now matches the query exactly
  db.set_cache(std::move(cache), 1);
  EXPECT_EQ(mining::best_positive(db, 0, {3, 6, 9}), 6);
}

TEST(Mining, BestPositiveMatchesExhaustiveArgmin) {
  rng::Engine engine(5);
  auto db = synthetic_db(60, engine);
  std::vector<int> candidates;
  for (int i = 1; i <= 20; ++i) candidates.push_back(i);
  EXPECT_EQ(mining::best_positive(db, 0, candidates),
            oracle::best_positive_reference(db, 0, candidates));
}

TEST(Mining, BestPositiveEmptyCandidatesThrows) {
  rng::Engine engine(6);
  auto db = synthetic_db(5, engine);
  EXPECT_THROW(mining::best_positive(db, 0, {}), DataError);
}

TEST(Mining, SampledNegativesRespectRadiusAndCount) {
  rng::Engine engine(7);
  auto db = synthetic_db(200, engine);
  rng::Engine sampler(99);
  const auto sampled = mining::sample_negatives(db, 0, 25.0, 40, sampler);
  EXPECT_EQ(sampled.size(), std::min<std::size_t>(
                                40, oracle::negative_pool_reference(db, 0, 25.0).size()));
  const auto pool = oracle::negative_pool_reference(db, 0, 25.0);
  const std::set<int> pool_set(pool.begin(), pool.end());
  std::set<int> seen;
  for (int s : sampled) {
    EXPECT_TRUE(pool_set.count(s)) << s;
    EXPECT_TRUE(seen.insert(s).second) << "duplicate " << s;
  }
}

TEST(Mining, SampledNegativesShortfallReturnsAllEligible) {
  std::vector<mining::DbEntry> entries(4);
  entries[0] = {"q", "p0", 0.0, 0.0, events::EventBin({}, {4, 4}, "q")};
  entries[1] = {"near", "p0", 1.0, 0.0, events::EventBin({}, {4, 4}, "n")};
  entries[2] = {"far1", "p1", 100.0, 0.0, events::EventBin({}, {4, 4}, "f1")};
  entries[3] = {"far2", "p2", 0.0, 120.0, events::EventBin({}, {4, 4}, "f2")};
  GeoTaggedDatabase db(std::move(entries));
  rng::Engine sampler(1);
  const auto sampled = mining::sample_negatives(db, 0, 25.0, 10, sampler);
  EXPECT_EQ(std::set<int>(sampled.begin(), sampled.end()), (std::set<int>{2, 3}));

  // all entries within the radius: nothing eligible
  rng::Engine sampler2(1);
  const auto none = mining::sample_negatives(db, 0, 500.0, 10, sampler2);
  EXPECT_TRUE(none.empty());
}

TEST(Mining, SamplingIsSeedReproducible) {
  rng::Engine engine(8);
  auto db = synthetic_db(150, engine);
  rng::Engine a(42), b(42), c(43);
  const auto sa = mining::sample_negatives(db, 3, 25.0, 30, a);
  const auto sb = mining::sample_negatives(db, 3, 25.0, 30, b);
  const auto sc = mining::sample_negatives(db, 3, 25.0, 30, c);
  EXPECT_EQ(sa, sb);
  EXPECT_NE(sa, sc);
}

TEST(Mining, HardNegativeBoundaryIncluded) {
  // d2(neg) == d2(pos) + margin exactly -> included.
  std::vector<mining::DbEntry> entries(3);
  for (int i = 0; i < 3; ++i)
    entries[static_cast<std::size_t>(i)] = {"e" + std::to_string(i), "p" + std::to_string(i),
                                            i * 100.0, 0.0,
                                            events::EventBin({}, {4, 4}, "e")};
  GeoTaggedDatabase db(std::move(entries));
  // exact dyadic arithmetic: d2_pos = 1, d2_neg = 1 + 0.25 + 0.25 = 1.5
  ag::Tensor q{ag::Shape{3}}, pos{ag::Shape{3}}, neg{ag::Shape{3}};
  pos[0] = 1.0;
  neg[0] = 1.0;
  neg[1] = 0.5;
  neg[2] = 0.5;
  db.set_cache({q, pos, neg}, 0);
  const auto hard = mining::hard_negatives(db, 0, 1, {2}, 0.5, 10);
  EXPECT_EQ(hard, (std::vector<int>{2}));
  const auto none = mining::hard_negatives(db, 0, 1, {2}, 0.4999, 10);
  EXPECT_TRUE(none.empty());
}

TEST(Mining, HardNegativesMatchBruteForceFilterAndSort) {
  rng::Engine engine(9);
  auto db = synthetic_db(400, engine);
  rng::Engine sampler(7);
  const auto sampled = mining::sample_negatives(db, 5, 25.0, 300, sampler);
  const auto positives = mining::potential_positives(db, 5, 60.0);
  if (positives.empty()) GTEST_SKIP() << "no geo positives under this seed";
  const int best = mining::best_positive(db, 5, positives);
  for (double margin : {0.1, 0.5, 2.0}) {
    const auto ours = mining::hard_negatives(db, 5, best, sampled, margin, 10);
    const auto reference = oracle::hard_negatives_reference(db, 5, best, sampled, margin, 10);
    EXPECT_EQ(ours, reference) << "margin " << margin;
  }
}

TEST(Mining, GeoSetsDisjointWhenRadiiOrdered) {
  rng::Engine engine(10);
  auto db = synthetic_db(120, engine);
  rng::Engine sampler(11);
  for (int q = 0; q < db.size(); q += 13) {
    const auto positives = mining::potential_positives(db, q, 10.0);
    const auto negatives = mining::sample_negatives(db, q, 25.0, 1000, sampler);
    std::set<int> pos_set(positives.begin(), positives.end());
    for (int n : negatives) EXPECT_FALSE(pos_set.count(n));
  }
}

TEST(Mining, CacheVersionStamping) {
  rng::Engine engine(11);
  auto db = synthetic_db(10, engine);
  EXPECT_EQ(db.cache_version(), 0);
  std::vector<ag::Tensor> cache;
  for (int i = 0; i < 10; ++i) cache.push_back(db.cached_descriptor(i));
  db.set_cache(std::move(cache), 1234);
  EXPECT_EQ(db.cache_version(), 1234);
}

TEST(Mining, SplitIsGeographicallyDisjointAndSeeded) {
  rng::Engine engine(12);
  auto db = synthetic_db(80, engine);  // 20 places, 4 bins each
  const auto split = mining::split_database(db, 0.25, 0.25, 10.0, 5);
  std::set<std::string> train_places, test_places;
  for (int i : split.train) train_places.insert(db.entry(i).place_id);
  for (int i : split.test_db) test_places.insert(db.entry(i).place_id);
  for (int i : split.test_queries) test_places.insert(db.entry(i).place_id);
  for (const auto& p : test_places) EXPECT_FALSE(train_places.count(p)) << p;
  EXPECT_EQ(train_places.size() + test_places.size(), 20u);

  const auto again = mining::split_database(db, 0.25, 0.25, 10.0, 5);
  EXPECT_EQ(split.train, again.train);
  EXPECT_EQ(split.test_db, again.test_db);
  EXPECT_EQ(split.test_queries, again.test_queries);

  const auto different = mining::split_database(db, 0.25, 0.25, 10.0, 6);
  EXPECT_NE(split.test_db, different.test_db);
}

TEST(Mining, TrainQueriesAllHavePositives) {
  rng::Engine engine(13);
  auto db = synthetic_db(80, engine, 30.0);  // dense box so positives exist
  const auto split = mining::split_database(db, 0.25, 0.25, 10.0, 5);
  const double r2 = 10.0 * 10.0;
  for (int q : split.train_queries) {
    bool found = false;
    for (int other : split.train)
      if (other != q && oracle::geo_dist2(db, q, other) <= r2) found = true;
    EXPECT_TRUE(found) << q;
  }
}
