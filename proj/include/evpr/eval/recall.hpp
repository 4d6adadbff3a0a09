#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "evpr/core/tensor.hpp"
#include "evpr/errors.hpp"

namespace evpr::eval {

/// Planar position of one descriptor.
struct GeoPoint {
  double x = 0.0;
  double y = 0.0;
};

/// Recall at the requested cutoffs. Monotone non-decreasing in N by
/// construction (a query recognized at N stays recognized at any larger N).
struct RecallReport {
  static constexpr int kSchemaVersion = 1;

  std::vector<int> n_values;
  std::vector<double> recall;  // aligned with n_values
  int query_count = 0;
  double recognition_radius_m = 0.0;
  std::int64_t model_version = 0;

  double at(int n) const {
    for (std::size_t i = 0; i < n_values.size(); ++i)
      if (n_values[i] == n) return recall[i];
    throw ParamError("recall report has no entry for N=" + std::to_string(n));
  }
};

/// Recall at N over frozen descriptors: for each query take the N nearest
/// database descriptors (Euclidean, ties by database index) and count the
/// query as recognized when any of them lies strictly within the recognition
/// radius of the query's position. Exhaustive search; no approximation.
inline RecallReport recall_at_n(const std::vector<ag::Tensor>& query_descriptors,
                                const std::vector<GeoPoint>& query_coords,
                                const std::vector<ag::Tensor>& db_descriptors,
                                const std::vector<GeoPoint>& db_coords,
                                const std::vector<int>& n_values, double recognition_radius_m,
                                std::int64_t model_version = 0) {
  if (db_descriptors.empty()) throw DataError("recall_at_n: empty database");
  if (query_descriptors.size() != query_coords.size() ||
      db_descriptors.size() != db_coords.size())
    throw ShapeError("recall_at_n: descriptor/coordinate count mismatch");
  if (n_values.empty()) throw ParamError("recall_at_n: no N values requested");

  const double radius2 = recognition_radius_m * recognition_radius_m;
  const int max_n = *std::max_element(n_values.begin(), n_values.end());
  const int depth = std::min<int>(max_n, static_cast<int>(db_descriptors.size()));

  std::vector<int> recognized(n_values.size(), 0);
  std::vector<std::pair<double, int>> order(db_descriptors.size());
  for (std::size_t q = 0; q < query_descriptors.size(); ++q) {
    for (std::size_t i = 0; i < db_descriptors.size(); ++i)
      order[i] = {ag::squared_l2_distance(query_descriptors[q], db_descriptors[i]),
                  static_cast<int>(i)};
    std::partial_sort(order.begin(), order.begin() + depth, order.end());
    int first_hit_rank = -1;  // 1-based rank of the first geo-correct retrieval
    for (int r = 0; r < depth; ++r) {
      const GeoPoint& p = db_coords[static_cast<std::size_t>(order[static_cast<std::size_t>(r)].second)];
      const double dx = p.x - query_coords[q].x, dy = p.y - query_coords[q].y;
      if (dx * dx + dy * dy < radius2) {
        first_hit_rank = r + 1;
        break;
      }
    }
    if (first_hit_rank > 0)
      for (std::size_t ni = 0; ni < n_values.size(); ++ni)
        if (first_hit_rank <= n_values[ni]) ++recognized[ni];
  }

  RecallReport report;
  report.n_values = n_values;
  report.query_count = static_cast<int>(query_descriptors.size());
  report.recognition_radius_m = recognition_radius_m;
  report.model_version = model_version;
  for (std::size_t ni = 0; ni < n_values.size(); ++ni)
    report.recall.push_back(report.query_count == 0
                                ? 0.0
                                : static_cast<double>(recognized[ni]) / report.query_count);
  return report;
}

inline std::string format_table(const RecallReport& r) {
  std::ostringstream out;
  out << "queries: " << r.query_count << "   recognition radius: " << r.recognition_radius_m
      << " m   model version: " << r.model_version << "\n";
  out << "   N   recall\n";
  for (std::size_t i = 0; i < r.n_values.size(); ++i)
    out << std::setw(4) << r.n_values[i] << "   " << std::fixed << std::setprecision(4)
        << r.recall[i] << "\n";
  return out.str();
}

/// Delimited report for external plotting: one row per N.
inline void write_report_csv(const RecallReport& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << "schema_version,model_version,queries,recognition_radius_m,n,recall\n";
  for (std::size_t i = 0; i < r.n_values.size(); ++i) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), r.recall[i]);
    out << RecallReport::kSchemaVersion << ',' << r.model_version << ',' << r.query_count << ','
        << r.recognition_radius_m << ',' << r.n_values[i] << ',' << std::string(buf, res.ptr)
        << "\n";
  }
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

}  // namespace evpr::eval
