// Command-line entry points for the event-based place recognition pipeline:
// simulate events from frames, split streams into bins, generate the demo
// world, train, evaluate and run representation sweeps.

#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "evpr/evpr.hpp"

namespace fs = std::filesystem;
using evpr::Json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

void fail(const std::string& kind, const std::string& message, int code) {
  std::cerr << Json{{"error", kind}, {"message", message}}.dump() << std::endl;
  std::exit(code);
}

evpr::RunConfig load_config(const std::string& path, std::optional<std::uint64_t> seed_override) {
  std::ifstream in(path);
  if (!in) throw evpr::ConfigError("cannot open config '" + path + "'");
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw evpr::ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  evpr::RunConfig config = evpr::RunConfig::from_json(j);
  if (seed_override) config.training.seed = *seed_override;
  return config;
}

void write_resolved_config(const evpr::RunConfig& config, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream out(out_dir / "resolved_config.json");
  if (!out) throw evpr::DataError("cannot write resolved config");
  out << config.to_json().dump(2) << '\n';
}

// -- PGM frame loading (P2/P5, 8- or 16-bit) --------------------------------

std::vector<double> read_pgm(const fs::path& path, evpr::events::Geometry& geom) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw evpr::DataError("cannot open frame '" + path.string() + "'");
  std::string magic;
  in >> magic;
  if (magic != "P2" && magic != "P5")
    throw evpr::DataError("'" + path.string() + "': only P2/P5 PGM frames are supported");
  auto next_int = [&in, &path]() {
    // Skips whitespace and '#' comments.
    while (true) {
      int c = in.peek();
      if (c == '#') {
        std::string dummy;
        std::getline(in, dummy);
      } else if (std::isspace(c)) {
        in.get();
      } else {
        break;
      }
    }
    long v = -1;
    in >> v;
    if (!in || v < 0) throw evpr::DataError("'" + path.string() + "': malformed PGM header");
    return v;
  };
  const long w = next_int(), h = next_int(), maxval = next_int();
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535)
    throw evpr::DataError("'" + path.string() + "': bad PGM dimensions");
  geom = {static_cast<int>(w), static_cast<int>(h)};
  std::vector<double> px(static_cast<std::size_t>(w) * h);
  if (magic == "P2") {
    for (auto& v : px) {
      long raw = -1;
      in >> raw;
      if (!in || raw < 0 || raw > maxval)
        throw evpr::DataError("'" + path.string() + "': malformed P2 payload");
      v = static_cast<double>(raw);
    }
  } else {
    in.get();  // single whitespace after maxval
    const int bytes = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> raw(px.size() * static_cast<std::size_t>(bytes));
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size())
      throw evpr::DataError("'" + path.string() + "': truncated P5 payload");
    for (std::size_t i = 0; i < px.size(); ++i)
      px[i] = bytes == 1 ? raw[i] : raw[2 * i] * 256.0 + raw[2 * i + 1];
  }
  return px;
}

std::vector<evpr::events::Frame> load_frames(const fs::path& dir, double intensity_offset) {
  const fs::path listing = dir / "frames.txt";
  std::ifstream in(listing);
  if (!in)
    throw evpr::DataError("cannot open '" + listing.string() +
                          "' (expected lines: <timestamp_us> <pgm-file>)");
  std::vector<evpr::events::Frame> frames;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::int64_t t = 0;
    std::string name;
    if (!(ls >> t >> name))
      throw evpr::DataError("frames.txt line " + std::to_string(line_no) +
                            ": expected '<timestamp_us> <file>'");
    evpr::events::Frame frame;
    frame.t = t;
    frame.intensity = read_pgm(dir / name, frame.geometry);
    for (auto& v : frame.intensity) v += intensity_offset;
    frames.push_back(std::move(frame));
  }
  return frames;
}

evpr::net::Model model_from_checkpoint(const evpr::net::Checkpoint& ckpt) {
  const evpr::RunConfig snapshot = evpr::RunConfig::from_json(ckpt.config);
  evpr::net::Model model(snapshot.representation, snapshot.backbone, snapshot.vlad,
                         snapshot.training.seed);
  ckpt.restore(model);
  return model;
}

int run(int argc, char** argv) {
  CLI::App app{"event-based visual place recognition pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint_path;
  std::optional<std::uint64_t> seed_override;
  bool deterministic = false;

  auto add_common = [&](CLI::App* cmd, bool with_checkpoint) {
    cmd->add_option("--config", config_path, "run configuration (JSON)")->required();
    cmd->add_option("--out", out_dir, "output directory")->required();
    cmd->add_option("--seed", seed_override, "override training.seed");
    cmd->add_flag("--deterministic", deterministic,
                  "single-threaded, zeroed wall times; byte-stable outputs");
    if (with_checkpoint) cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file");
  };

  // simulate ----------------------------------------------------------------
  auto* sim = app.add_subcommand("simulate", "convert an intensity-frame sequence into events");
  std::string frames_dir, sim_out;
  double threshold = 0.2, intensity_offset = 1.0, jitter = 0.0;
  std::uint64_t jitter_seed = 0;
  sim->add_option("--frames", frames_dir, "directory with frames.txt and PGM files")->required();
  sim->add_option("--out", sim_out, "output event file")->required();
  sim->add_option("--threshold", threshold, "contrast threshold (log-intensity units)");
  sim->add_option("--intensity-offset", intensity_offset,
                  "added to raw pixel values before the log (keeps intensities positive)");
  sim->add_option("--threshold-jitter", jitter, "relative per-pixel threshold jitter");
  sim->add_option("--jitter-seed", jitter_seed, "seed for the jitter pattern");
  sim->callback([&] {
    const auto frames = load_frames(frames_dir, intensity_offset);
    evpr::events::CameraModel model{threshold, jitter, jitter_seed};
    const auto bin = evpr::events::simulate_events(frames, model, fs::path(sim_out).stem().string());
    if (!fs::path(sim_out).parent_path().empty())
      fs::create_directories(fs::path(sim_out).parent_path());
    evpr::events::write_events(bin, sim_out);
    std::cout << "wrote " << bin.size() << " events to " << sim_out << std::endl;
  });

  // split ---------------------------------------------------------------------
  auto* split = app.add_subcommand("split", "cut an event stream into bins");
  std::string split_in, split_out, policy = "count";
  std::int64_t split_count = 0, split_duration = 0;
  split->add_option("--events", split_in, "input event file")->required();
  split->add_option("--out", split_out, "output directory")->required();
  split->add_option("--policy", policy, "count | duration")
      ->check(CLI::IsMember({"count", "duration"}));
  split->add_option("--count", split_count, "events per bin (count policy)");
  split->add_option("--duration-us", split_duration, "window length in microseconds");
  split->callback([&] {
    const auto bin = evpr::events::read_events(split_in);
    const auto pol = policy == "count"
                         ? evpr::events::SplitPolicy::fixed_count(split_count)
                         : evpr::events::SplitPolicy::fixed_duration(split_duration);
    const auto bins = evpr::events::split_stream(bin, pol);
    fs::create_directories(split_out);
    for (std::size_t i = 0; i < bins.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "bin%05zu.events", i);
      evpr::events::write_events(bins[i], fs::path(split_out) / name);
    }
    std::cout << "wrote " << bins.size() << " bins to " << split_out << std::endl;
  });

  // make-toy ------------------------------------------------------------------
  auto* mk = app.add_subcommand("make-toy", "generate the synthetic demo world");
  std::string toy_out;
  evpr::toy::ToyWorldConfig toy_cfg;
  mk->add_option("--out", toy_out, "output directory")->required();
  mk->add_option("--places", toy_cfg.places, "places on the loop");
  mk->add_option("--bins-per-place", toy_cfg.bins_per_place, "observations per place");
  mk->add_option("--seed", toy_cfg.seed, "world seed");
  mk->add_option("--width", toy_cfg.width, "frame width");
  mk->add_option("--height", toy_cfg.height, "frame height");
  mk->callback([&] {
    const auto db = evpr::toy::generate_toy_world(toy_cfg);
    const auto manifest = evpr::toy::write_toy_world(db, toy_out);
    std::size_t total = 0;
    for (int i = 0; i < db.size(); ++i) total += db.entry(i).bin.size();
    std::cout << "wrote " << db.size() << " bins (" << total << " events) to " << toy_out
              << "; manifest: " << manifest.string() << std::endl;
  });

  // train -----------------------------------------------------------------------
  auto* train = app.add_subcommand("train", "train the descriptor network");
  add_common(train, true);
  train->callback([&] {
    evpr::RunConfig config = load_config(config_path, seed_override);
    if (config.dataset.manifest.empty())
      throw evpr::ConfigError("dataset.manifest is required for training");
    write_resolved_config(config, out_dir);
    auto db = evpr::mining::GeoTaggedDatabase::load(config.dataset.manifest);

    evpr::net::Model model(config.representation, config.backbone, config.vlad,
                           config.training.seed);
    evpr::train::MetricsLog log(fs::path(out_dir) / "metrics.ndjson", deterministic);
    evpr::train::Trainer trainer(model, db, config, log);
    if (!checkpoint_path.empty()) {
      const auto ckpt = evpr::net::load_checkpoint(checkpoint_path);
      ckpt.restore(model);
      trainer.optimizer().state_from_json(ckpt.optimizer_state);
    }
    log.record(Json{{"event", "run_start"},
                    {"command", "train"},
                    {"schema_version", 1},
                    {"seed", config.training.seed},
                    {"deterministic", deterministic},
                    {"config_hash", evpr::config_hash(config)},
                    {"resume_step", model.step}});
    trainer.prepare();
    const auto outcome = trainer.run(config.training.epochs, out_dir);
    evpr::net::save_checkpoint(outcome.final_checkpoint,
                               (fs::path(out_dir) / "checkpoint.json").string());
    std::cout << "trained " << outcome.triplets_trained << " triplets over "
              << config.training.epochs << " epochs; final step " << model.step << std::endl;
    if (!outcome.validation.empty())
      std::cout << evpr::eval::format_table(outcome.validation.back());
  });

  // eval ------------------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "retrieval evaluation of a checkpoint");
  add_common(eval_cmd, true);
  eval_cmd->callback([&] {
    evpr::RunConfig config = load_config(config_path, seed_override);
    if (checkpoint_path.empty()) throw evpr::ConfigError("eval requires --checkpoint");
    if (config.dataset.manifest.empty())
      throw evpr::ConfigError("dataset.manifest is required for evaluation");
    write_resolved_config(config, out_dir);
    auto db = evpr::mining::GeoTaggedDatabase::load(config.dataset.manifest);

    const auto ckpt = evpr::net::load_checkpoint(checkpoint_path);
    evpr::net::Model model = model_from_checkpoint(ckpt);
    // The held-out side is reconstructed from the snapshot's seed and split
    // fractions so evaluation never sees training places.
    const evpr::RunConfig snapshot = evpr::RunConfig::from_json(ckpt.config);
    const auto split = evpr::mining::split_database(
        db, snapshot.training.test_place_fraction, snapshot.training.query_fraction,
        snapshot.mining.positive_radius_m, snapshot.training.seed);

    std::vector<evpr::ag::Tensor> qd, dd;
    std::vector<evpr::eval::GeoPoint> qc, dc;
    for (int i : split.test_db) {
      dd.push_back(model.describe(db.entry(i).bin));
      dc.push_back({db.entry(i).x, db.entry(i).y});
    }
    for (int i : split.test_queries) {
      qd.push_back(model.describe(db.entry(i).bin));
      qc.push_back({db.entry(i).x, db.entry(i).y});
    }
    const auto report =
        evpr::eval::recall_at_n(qd, qc, dd, dc, config.eval.n_values,
                                config.eval.recognition_radius_m, model.step);
    evpr::eval::write_report_csv(report, fs::path(out_dir) / "recall_report.csv");
    std::cout << evpr::eval::format_table(report);
  });

  // ablate ------------------------------------------------------------------------
  auto* ablate = app.add_subcommand("ablate", "representation/backbone sweep");
  add_common(ablate, false);
  ablate->callback([&] {
    evpr::RunConfig config = load_config(config_path, seed_override);
    if (config.dataset.manifest.empty())
      throw evpr::ConfigError("dataset.manifest is required for the sweep");
    write_resolved_config(config, out_dir);
    auto db = evpr::mining::GeoTaggedDatabase::load(config.dataset.manifest);
    const auto rows = evpr::eval::run_ablation(config, db, out_dir, deterministic);
    evpr::eval::write_ablation_csv(rows, config.eval.n_values,
                                   fs::path(out_dir) / "ablation.csv");
    evpr::eval::write_ablation_points(rows, fs::path(out_dir) / "ablation_points.csv");
    for (const auto& r : rows) {
      std::cout << r.variant << " / " << r.backbone << ": " << r.status;
      if (r.status == "ok") {
        for (std::size_t i = 0; i < r.report.n_values.size(); ++i)
          std::cout << "  recall@" << r.report.n_values[i] << "=" << r.report.recall[i];
      } else {
        std::cout << "  (" << r.error << ")";
      }
      std::cout << std::endl;
    }
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const evpr::ConfigError& e) {
    fail("config", e.what(), kExitConfig);
  } catch (const evpr::NumericError& e) {
    fail("numeric", e.what(), kExitNumeric);
  } catch (const evpr::DataError& e) {
    fail("data", e.what(), kExitData);
  } catch (const std::exception& e) {
    fail("data", e.what(), kExitData);
  }
  return kExitData;
}
