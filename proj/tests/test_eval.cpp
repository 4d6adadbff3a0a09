#include <gtest/gtest.h>

#include "evpr/eval/recall.hpp"
#include "support/oracles.hpp"

using namespace evpr;
using eval::GeoPoint;

namespace {

struct RetrievalFixture {
  std::vector<ag::Tensor> query_desc, db_desc;
  std::vector<GeoPoint> query_xy, db_xy;
  std::vector<std::pair<double, double>> query_xy_pairs, db_xy_pairs;
};

RetrievalFixture random_fixture(int queries, int db, int dim, std::uint64_t seed) {
  rng::Engine engine(seed);
  RetrievalFixture f;
  for (int i = 0; i < queries; ++i) {
    ag::Tensor t{ag::Shape{dim}};
    for (auto& v : t.vec()) v = engine.normal();
    f.query_desc.push_back(std::move(t));
    const double x = engine.uniform(-300, 300), y = engine.uniform(-300, 300);
    f.query_xy.push_back({x, y});
    f.query_xy_pairs.emplace_back(x, y);
  }
  for (int i = 0; i < db; ++i) {
    ag::Tensor t{ag::Shape{dim}};
    for (auto& v : t.vec()) v = engine.normal();
    f.db_desc.push_back(std::move(t));
    const double x = engine.uniform(-300, 300), y = engine.uniform(-300, 300);
    f.db_xy.push_back({x, y});
    f.db_xy_pairs.emplace_back(x, y);
  }
  return f;
}

}  // namespace

TEST(Recall, ColocatedNearestNeighborRecognizedAtOne) {
  ag::Tensor q{ag::Shape{2}};
  q[0] = 1.0;
  ag::Tensor same = q, other{ag::Shape{2}};
  other[1] = 5.0;
  const auto report = eval::recall_at_n({q}, {GeoPoint{0.0, 0.0}}, {other, same},
                                        {GeoPoint{500.0, 0.0}, GeoPoint{0.0, 0.0}}, {1}, 20.0);
  EXPECT_DOUBLE_EQ(report.at(1), 1.0);
}

TEST(Recall, MatchesDoubleLoopOracleExactly) {
  const auto f = random_fixture(50, 200, 6, 17);
  const std::vector<int> n_values{1, 5, 10, 20};
  for (double phi : {20.0, 60.0, 150.0}) {
    const auto report =
        eval::recall_at_n(f.query_desc, f.query_xy, f.db_desc, f.db_xy, n_values, phi);
    const auto reference = oracle::recall_reference(f.query_desc, f.query_xy_pairs, f.db_desc,
                                                    f.db_xy_pairs, n_values, phi);
    for (std::size_t i = 0; i < n_values.size(); ++i)
      EXPECT_DOUBLE_EQ(report.recall[i], reference[i]) << "phi " << phi << " N " << n_values[i];
  }
}

TEST(Recall, MonotoneInN) {
  const auto f = random_fixture(40, 120, 4, 23);
  const auto report =
      eval::recall_at_n(f.query_desc, f.query_xy, f.db_desc, f.db_xy, {1, 5, 10, 20}, 60.0);
  for (std::size_t i = 1; i < report.recall.size(); ++i)
    EXPECT_GE(report.recall[i], report.recall[i - 1]);
}

TEST(Recall, InfiniteRadiusIsOneZeroRadiusIsZero) {
  const auto f = random_fixture(30, 100, 4, 29);
  const auto wide = eval::recall_at_n(f.query_desc, f.query_xy, f.db_desc, f.db_xy, {1, 5}, 1e18);
  EXPECT_DOUBLE_EQ(wide.at(1), 1.0);
  EXPECT_DOUBLE_EQ(wide.at(5), 1.0);
  const auto zero = eval::recall_at_n(f.query_desc, f.query_xy, f.db_desc, f.db_xy, {1, 5}, 0.0);
  EXPECT_DOUBLE_EQ(zero.at(1), 0.0);
  EXPECT_DOUBLE_EQ(zero.at(5), 0.0);
}

TEST(Recall, BoundaryIsStrictlyLess) {
  // database entry at exactly the radius: not recognized; just inside: is.
  ag::Tensor q{ag::Shape{2}}, d{ag::Shape{2}};
  const auto exact = eval::recall_at_n({q}, {GeoPoint{0.0, 0.0}}, {d}, {GeoPoint{20.0, 0.0}},
                                       {1}, 20.0);
  EXPECT_DOUBLE_EQ(exact.at(1), 0.0);
  const auto inside = eval::recall_at_n({q}, {GeoPoint{0.0, 0.0}}, {d},
                                        {GeoPoint{19.9999, 0.0}}, {1}, 20.0);
  EXPECT_DOUBLE_EQ(inside.at(1), 1.0);
}

TEST(Recall, DeterministicOnFixedDescriptors) {
  const auto f = random_fixture(25, 80, 5, 31);
  const auto a = eval::recall_at_n(f.query_desc, f.query_xy, f.db_desc, f.db_xy, {1, 5, 10}, 40.0);
  const auto b = eval::recall_at_n(f.query_desc, f.query_xy, f.db_desc, f.db_xy, {1, 5, 10}, 40.0);
  EXPECT_EQ(a.recall, b.recall);
}

TEST(Recall, EmptyDatabaseIsError) {
  ag::Tensor q{ag::Shape{2}};
  EXPECT_THROW(
      eval::recall_at_n({q}, {GeoPoint{0, 0}}, {}, {}, {1}, 20.0),
      DataError);
}

TEST(Recall, TiesBreakByDatabaseIndex) {
  // two identical descriptors at different places: the lower index wins the
  // N=1 slot, and only its location decides recognition
  ag::Tensor q{ag::Shape{2}}, a{ag::Shape{2}}, b{ag::Shape{2}};
  // a (index 0) is far away, b (index 1) is co-located with the query
  const auto report = eval::recall_at_n({q}, {GeoPoint{0.0, 0.0}}, {a, b},
                                        {GeoPoint{900.0, 0.0}, GeoPoint{1.0, 0.0}}, {1}, 20.0);
  EXPECT_DOUBLE_EQ(report.at(1), 0.0);
}

TEST(Recall, ReportCsvSchema) {
  const auto f = random_fixture(10, 30, 3, 37);
  const auto report =
      eval::recall_at_n(f.query_desc, f.query_xy, f.db_desc, f.db_xy, {1, 5}, 20.0, 77);
  const auto path = std::filesystem::temp_directory_path() / "evpr_recall_report.csv";
  eval::write_report_csv(report, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "schema_version,model_version,queries,recognition_radius_m,n,recall");
  int rows = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  EXPECT_EQ(rows, 2);
}
