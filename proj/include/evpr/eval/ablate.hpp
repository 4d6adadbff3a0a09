#pragma once

#include <charconv>
#include <exception>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "evpr/config.hpp"
#include "evpr/eval/recall.hpp"
#include "evpr/mining/database.hpp"
#include "evpr/net/model.hpp"
#include "evpr/train/trainer.hpp"

namespace evpr::eval {

/// One ablation result. Failed variants carry the error text and keep the
/// sweep going.
struct AblationRow {
  std::string variant;
  std::string backbone;
  std::string status;  // "ok" | "failed"
  std::string error;
  RecallReport report;
};

/// Trains and evaluates every (representation variant x backbone) pair under
/// the same split and seed, each from a fresh model.
inline std::vector<AblationRow> run_ablation(const RunConfig& base,
                                             mining::GeoTaggedDatabase& db,
                                             const std::filesystem::path& out_dir,
                                             bool deterministic) {
  std::vector<AblationRow> rows;
  const int epochs = base.ablate.epochs >= 0 ? base.ablate.epochs : base.training.epochs;
  for (const std::string& backbone : base.ablate.backbones) {
    for (const std::string& variant : base.ablate.variants) {
      AblationRow row;
      row.variant = variant;
      row.backbone = backbone;
      try {
        RunConfig config = base;
        apply_variant(config, variant);
        config.backbone.architecture = backbone;
        config.backbone.descriptor_depth = 0;
        config.validate_cross();

        train::MetricsLog log(
            out_dir.empty() ? std::filesystem::path{}
                            : out_dir / (variant + "-" + backbone + ".metrics.ndjson"),
            deterministic);
        net::Model model(config.representation, config.backbone, config.vlad,
                         config.training.seed);
        train::Trainer trainer(model, db, config, log);
        trainer.prepare();
        trainer.run(epochs);
        row.report = trainer.validate();
        row.status = "ok";
      } catch (const std::exception& e) {
        row.status = "failed";
        row.error = e.what();
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

inline constexpr int kAblationSchemaVersion = 1;

namespace detail {
inline std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}
}  // namespace detail

/// Wide table: one row per variant x backbone, one recall column per N.
inline void write_ablation_csv(const std::vector<AblationRow>& rows,
                               const std::vector<int>& n_values,
                               const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << "schema_version,variant,backbone,status,queries,recognition_radius_m";
  for (int n : n_values) out << ",recall@" << n;
  out << "\n";
  for (const AblationRow& r : rows) {
    out << kAblationSchemaVersion << ',' << r.variant << ',' << r.backbone << ',' << r.status
        << ',' << r.report.query_count << ','
        << detail::fmt_double(r.report.recognition_radius_m);
    for (std::size_t i = 0; i < n_values.size(); ++i)
      out << ',' << (r.status == "ok" ? detail::fmt_double(r.report.recall[i]) : std::string());
    out << "\n";
  }
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

/// Long-form points file for external plotting: one row per (variant, N).
inline void write_ablation_points(const std::vector<AblationRow>& rows,
                                  const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << "schema_version,variant,backbone,n,recall\n";
  for (const AblationRow& r : rows) {
    if (r.status != "ok") continue;
    for (std::size_t i = 0; i < r.report.n_values.size(); ++i)
      out << kAblationSchemaVersion << ',' << r.variant << ',' << r.backbone << ','
          << r.report.n_values[i] << ',' << detail::fmt_double(r.report.recall[i]) << "\n";
  }
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

}  // namespace evpr::eval
