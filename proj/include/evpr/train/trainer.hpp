#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "evpr/config.hpp"
#include "evpr/core/autograd.hpp"
#include "evpr/core/random.hpp"
#include "evpr/eval/recall.hpp"
#include "evpr/mining/database.hpp"
#include "evpr/mining/triplets.hpp"
#include "evpr/net/model.hpp"
#include "evpr/train/batch.hpp"
#include "evpr/train/loss.hpp"
#include "evpr/train/optimizer.hpp"

namespace evpr::train {

/// Append-only newline-delimited metrics log. The first record is the run
/// header; later records carry (step, loss) per optimizer step, cache-refresh
/// events and periodic validation recalls. In deterministic mode wall times
/// are written as 0 so logs from equal-seed runs are byte-identical.
class MetricsLog {
 public:
  MetricsLog() = default;
  MetricsLog(const std::filesystem::path& path, bool deterministic)
      : deterministic_(deterministic), start_(std::chrono::steady_clock::now()) {
    if (!path.empty()) {
      out_.emplace(path);
      if (!*out_) throw DataError("cannot open metrics log '" + path.string() + "'");
    }
  }

  bool active() const { return out_.has_value(); }

  void record(Json j) {
    if (!out_) return;
    j["wall_s"] = wall();
    *out_ << j.dump() << '\n';
    out_->flush();
  }

 private:
  double wall() const {
    if (deterministic_) return 0.0;
    const auto now = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(now - start_).count();
  }

  std::optional<std::ofstream> out_;
  bool deterministic_ = false;
  std::chrono::steady_clock::time_point start_;
};

/// Counts training queries and decides when the descriptor cache must be
/// rebuilt: exactly every `interval` queries, plus a forced refresh at each
/// epoch start.
class CacheScheduler {
 public:
  explicit CacheScheduler(int interval) : interval_(interval) {
    if (interval < 1) throw ParamError("cache interval must be >= 1");
  }

  /// Call once per consumed query; true when a refresh is due now.
  bool on_query() {
    ++since_refresh_;
    if (since_refresh_ >= interval_) {
      since_refresh_ = 0;
      return true;
    }
    return false;
  }

  void on_epoch_start() { since_refresh_ = 0; }

 private:
  int interval_;
  int since_refresh_ = 0;
};

struct TrainOutcome {
  net::Checkpoint final_checkpoint;
  std::vector<eval::RecallReport> validation;  // one per epoch, possibly empty
  std::int64_t queries_processed = 0;
  std::int64_t triplets_trained = 0;
};

/// Weakly supervised trainer. Mining runs against the (possibly stale)
/// descriptor cache; the loss recomputes fresh descriptors for the selected
/// triplets. Deterministic under a fixed seed: every random draw comes from
/// a stream derived from (seed, purpose, epoch).
class Trainer {
 public:
  Trainer(net::Model& model, mining::GeoTaggedDatabase& db, const RunConfig& config,
          MetricsLog& log)
      : model_(model),
        db_(db),
        config_(config),
        log_(log),
        optimizer_(config.training.optimizer, config.training.learning_rate,
                   config.training.momentum, model.params()),
        scheduler_(config.training.cache_refresh_interval) {}

  Optimizer& optimizer() { return optimizer_; }
  const mining::DatasetSplit& split() const { return split_; }

  /// Splits the database, initializes the aggregation layer when the model is
  /// fresh, and seeds the descriptor cache.
  void prepare() {
    split_ = mining::split_database(db_, config_.training.test_place_fraction,
                                    config_.training.query_fraction,
                                    config_.mining.positive_radius_m, config_.training.seed);
    if (split_.train_queries.empty())
      throw DataError("training query set is empty; check the dataset and split fractions");
    if (!model_.vlad_initialized()) {
      rng::Engine picker(rng::derive_seed(config_.training.seed, "vlad-sample"));
      const int want = std::min<int>(config_.vlad.init_sample_bins,
                                     static_cast<int>(split_.train.size()));
      const auto picks =
          picker.sample_without_replacement(static_cast<int>(split_.train.size()), want);
      std::vector<const events::EventBin*> bins;
      bins.reserve(picks.size());
      for (int p : picks)
        bins.push_back(&db_.entry(split_.train[static_cast<std::size_t>(p)]).bin);
      model_.init_vlad_from_bins(bins, config_.training.seed);
    }
    prepared_ = true;
  }

  /// Runs `epochs` additional epochs (resuming from model.epoch) and returns
  /// the final checkpoint. Writes periodic checkpoints into out_dir when it
  /// is non-empty.
  TrainOutcome run(int epochs, const std::filesystem::path& out_dir = {}) {
    if (!prepared_) prepare();
    TrainOutcome outcome;

    for (int e = 0; e < epochs; ++e) {
      const std::int64_t epoch_index = model_.epoch;
      scheduler_.on_epoch_start();
      refresh_cache("epoch_start");

      std::vector<int> queries = split_.train_queries;
      rng::Engine shuffler(rng::derive_seed(config_.training.seed, "epoch-shuffle",
                                            static_cast<std::uint64_t>(epoch_index)));
      shuffler.shuffle(queries);
      rng::Engine negative_rng(rng::derive_seed(config_.training.seed, "negative-sample",
                                                static_cast<std::uint64_t>(epoch_index)));

      double epoch_loss = 0.0;
      std::int64_t epoch_steps = 0;
      std::vector<mining::TrainingTriplet> pending;
      for (std::size_t qi = 0; qi < queries.size(); ++qi) {
        const int query = queries[qi];
        auto triplet = mining::mine_triplet(db_, query, split_.train, config_.mining,
                                            config_.training.margin, negative_rng);
        ++outcome.queries_processed;
        if (triplet) {
          pending.push_back(std::move(*triplet));
        } else {
          log_.record(Json{{"event", "query_skipped"}, {"query", db_.entry(query).id}});
        }
        const bool flush = static_cast<int>(pending.size()) >= config_.training.batch_size ||
                           (qi + 1 == queries.size() && !pending.empty());
        if (flush) {
          const double loss = train_step(pending);
          epoch_loss += loss;
          ++epoch_steps;
          outcome.triplets_trained += static_cast<std::int64_t>(pending.size());
          pending.clear();
        }
        if (scheduler_.on_query()) refresh_cache("interval");
      }

      model_.epoch += 1;
      const double mean_loss = epoch_steps > 0 ? epoch_loss / static_cast<double>(epoch_steps) : 0.0;
      Json epoch_record{{"event", "epoch"},
                        {"epoch", model_.epoch},
                        {"step", model_.step},
                        {"mean_loss", mean_loss}};
      if (!split_.test_queries.empty() && !split_.test_db.empty()) {
        const eval::RecallReport report = validate();
        outcome.validation.push_back(report);
        for (std::size_t i = 0; i < report.n_values.size(); ++i)
          epoch_record["recall@" + std::to_string(report.n_values[i])] = report.recall[i];
      }
      log_.record(std::move(epoch_record));

      if (!out_dir.empty() &&
          (model_.epoch % config_.training.checkpoint_every_epochs == 0 || e + 1 == epochs)) {
        const auto cp = net::Checkpoint::capture(model_, config_.to_json(),
                                                 optimizer_.state_to_json());
        net::save_checkpoint(cp, (out_dir / ("checkpoint-epoch" +
                                             std::to_string(model_.epoch) + ".json")).string());
      }
    }

    outcome.final_checkpoint =
        net::Checkpoint::capture(model_, config_.to_json(), optimizer_.state_to_json());
    return outcome;
  }

  /// Recall over the held-out side with fresh descriptors.
  eval::RecallReport validate() const {
    std::vector<ag::Tensor> qd, dd;
    std::vector<eval::GeoPoint> qc, dc;
    for (int i : split_.test_db) {
      dd.push_back(model_.describe(db_.entry(i).bin));
      dc.push_back({db_.entry(i).x, db_.entry(i).y});
    }
    for (int i : split_.test_queries) {
      qd.push_back(model_.describe(db_.entry(i).bin));
      qc.push_back({db_.entry(i).x, db_.entry(i).y});
    }
    return eval::recall_at_n(qd, qc, dd, dc, config_.eval.n_values,
                             config_.eval.recognition_radius_m, model_.step);
  }

  /// Forward + backward + optimizer step over a small group of triplets.
  /// Loss is the mean of the per-triplet ranking losses. Aborts with
  /// NumericError on a non-finite loss, after dumping the offending triplets
  /// to the metrics log.
  double train_step(const std::vector<mining::TrainingTriplet>& triplets) {
    const AssembledBatch batch = assemble_batch(db_, triplets);
    if (batch.triplets.empty()) return 0.0;
    const std::vector<events::EventBin> bins = batch.split();
    std::vector<ag::Var> descriptors;
    descriptors.reserve(bins.size());
    for (const auto& bin : bins) descriptors.push_back(model_.descriptor_var(bin));

    ag::Var total;
    for (const auto& span : batch.triplets) {
      std::vector<ag::Var> negs;
      for (int n : span.negative_subs) negs.push_back(descriptors[static_cast<std::size_t>(n)]);
      ag::Var loss = triplet_loss_from_descriptors(
          descriptors[static_cast<std::size_t>(span.query_sub)],
          descriptors[static_cast<std::size_t>(span.positive_sub)], negs,
          config_.training.margin);
      total = total ? ag::add(total, loss) : loss;
    }
    total = ag::scale(total, 1.0 / static_cast<double>(batch.triplets.size()));

    const double loss_value = total->value[0];
    if (!std::isfinite(loss_value)) {
      Json dump{{"event", "non_finite_loss"}, {"step", model_.step}, {"loss", "nan"}};
      Json members = Json::array();
      for (const auto& span : batch.triplets) {
        Json t{{"query", db_.entry(span.db_query).id}};
        members.push_back(std::move(t));
      }
      dump["triplets"] = members;
      log_.record(dump);
      throw NumericError("non-finite loss at step " + std::to_string(model_.step) +
                         "; offending triplets dumped to the metrics log");
    }

    ag::backward(total);
    optimizer_.step();
    model_.step += 1;
    log_.record(Json{{"event", "step"}, {"step", model_.step}, {"loss", loss_value}});
    return loss_value;
  }

 private:
  void refresh_cache(const char* reason) {
    db_.refresh_cache(model_);
    log_.record(Json{{"event", "cache_refresh"},
                     {"reason", reason},
                     {"step", model_.step},
                     {"cache_version", db_.cache_version()}});
  }

  net::Model& model_;
  mining::GeoTaggedDatabase& db_;
  RunConfig config_;
  MetricsLog& log_;
  Optimizer optimizer_;
  CacheScheduler scheduler_;
  mining::DatasetSplit split_;
  bool prepared_ = false;
};

}  // namespace evpr::train
