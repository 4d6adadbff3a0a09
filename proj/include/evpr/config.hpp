#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "evpr/errors.hpp"

namespace evpr {

using Json = nlohmann::json;

namespace detail {

inline void reject_unknown_keys(const Json& obj, const std::set<std::string>& known,
                                const std::string& section) {
  if (!obj.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!known.count(it.key()))
      throw ConfigError("unknown config key '" + section + "." + it.key() + "'");
  }
}

template <class T>
void read_key(const Json& obj, const char* key, T& out) {
  if (obj.contains(key)) {
    try {
      out = obj.at(key).get<T>();
    } catch (const Json::exception& e) {
      throw ConfigError(std::string("bad value for config key '") + key + "': " + e.what());
    }
  }
}

}  // namespace detail

struct DatasetConfig {
  std::string manifest;

  static DatasetConfig from_json(const Json& j) {
    detail::reject_unknown_keys(j, {"manifest"}, "dataset");
    DatasetConfig c;
    detail::read_key(j, "manifest", c.manifest);
    return c;
  }
  Json to_json() const { return Json{{"manifest", manifest}}; }
};

struct ReprConfig {
  std::string kind = "est";             // est | ef | evg | 4ch
  std::string kernel = "mlp";           // trilinear | mlp   (est only)
  int time_bins = 4;                    // temporal channel count C
  std::string polarity_mode = "split";  // split | signed-single (est only)
  double tau_max = 1.5;                 // evaluation window of the learned kernel
  std::string activation = "tanh";      // hidden activation of the learned kernel

  /// Channel count of the produced tensor (drives the first conv layer).
  int channels() const {
    if (kind == "est") return polarity_mode == "split" ? 2 * time_bins : time_bins;
    if (kind == "evg") return time_bins;
    if (kind == "ef") return 1;
    if (kind == "4ch") return 4;
    throw ConfigError("unknown representation kind '" + kind + "'");
  }

  void validate() const {
    if (kind != "est" && kind != "ef" && kind != "evg" && kind != "4ch")
      throw ConfigError("representation.kind must be one of est|ef|evg|4ch, got '" + kind + "'");
    if (kernel != "trilinear" && kernel != "mlp")
      throw ConfigError("representation.kernel must be trilinear|mlp, got '" + kernel + "'");
    if (polarity_mode != "split" && polarity_mode != "signed-single")
      throw ConfigError("representation.polarity_mode must be split|signed-single");
    if (time_bins < 1) throw ConfigError("representation.time_bins must be >= 1");
    if (!(tau_max > 0.0)) throw ConfigError("representation.tau_max must be > 0");
    if (activation != "tanh") throw ConfigError("representation.activation must be 'tanh'");
  }

  static ReprConfig from_json(const Json& j) {
    detail::reject_unknown_keys(
        j, {"kind", "kernel", "time_bins", "polarity_mode", "tau_max", "activation"},
        "representation");
    ReprConfig c;
    detail::read_key(j, "kind", c.kind);
    detail::read_key(j, "kernel", c.kernel);
    detail::read_key(j, "time_bins", c.time_bins);
    detail::read_key(j, "polarity_mode", c.polarity_mode);
    detail::read_key(j, "tau_max", c.tau_max);
    detail::read_key(j, "activation", c.activation);
    c.validate();
    return c;
  }
  Json to_json() const {
    return Json{{"kind", kind},
                {"kernel", kernel},
                {"time_bins", time_bins},
                {"polarity_mode", polarity_mode},
                {"tau_max", tau_max},
                {"activation", activation}};
  }
};

struct BackboneSection {
  std::string architecture = "desk-small";
  int input_channels = 0;   // 0 = derive from the representation
  int descriptor_depth = 0;  // 0 = architecture default

  static BackboneSection from_json(const Json& j) {
    detail::reject_unknown_keys(j, {"architecture", "input_channels", "descriptor_depth"},
                                "backbone");
    BackboneSection c;
    detail::read_key(j, "architecture", c.architecture);
    detail::read_key(j, "input_channels", c.input_channels);
    detail::read_key(j, "descriptor_depth", c.descriptor_depth);
    return c;
  }
  Json to_json() const {
    return Json{{"architecture", architecture},
                {"input_channels", input_channels},
                {"descriptor_depth", descriptor_depth}};
  }
};

struct VladSection {
  int clusters = 64;
  double alpha = 100.0;
  double epsilon = 1e-12;
  int init_sample_bins = 32;  // bins sampled to seed the clusters

  void validate() const {
    if (clusters < 1) throw ConfigError("vlad.clusters must be >= 1");
    if (!(alpha > 0.0)) throw ConfigError("vlad.alpha must be > 0");
    if (!(epsilon >= 0.0)) throw ConfigError("vlad.epsilon must be >= 0");
    if (init_sample_bins < 1) throw ConfigError("vlad.init_sample_bins must be >= 1");
  }

  static VladSection from_json(const Json& j) {
    detail::reject_unknown_keys(j, {"clusters", "alpha", "epsilon", "init_sample_bins"}, "vlad");
    VladSection c;
    detail::read_key(j, "clusters", c.clusters);
    detail::read_key(j, "alpha", c.alpha);
    detail::read_key(j, "epsilon", c.epsilon);
    detail::read_key(j, "init_sample_bins", c.init_sample_bins);
    c.validate();
    return c;
  }
  Json to_json() const {
    return Json{{"clusters", clusters},
                {"alpha", alpha},
                {"epsilon", epsilon},
                {"init_sample_bins", init_sample_bins}};
  }
};

struct MiningConfig {
  double positive_radius_m = 10.0;   // geo radius for potential positives
  double negative_radius_m = 25.0;   // geo radius beyond which entries are negatives
  int num_sampled_negatives = 100;   // random negatives drawn per query
  int num_hard_negatives = 10;       // hardest survivors kept for the loss

  void validate() const {
    if (!(positive_radius_m > 0.0)) throw ConfigError("mining.positive_radius_m must be > 0");
    if (!(negative_radius_m > positive_radius_m))
      throw ConfigError("mining.negative_radius_m must exceed mining.positive_radius_m");
    if (num_sampled_negatives < 1) throw ConfigError("mining.num_sampled_negatives must be >= 1");
    if (num_hard_negatives < 1) throw ConfigError("mining.num_hard_negatives must be >= 1");
  }

  static MiningConfig from_json(const Json& j) {
    detail::reject_unknown_keys(j,
                                {"positive_radius_m", "negative_radius_m",
                                 "num_sampled_negatives", "num_hard_negatives"},
                                "mining");
    MiningConfig c;
    detail::read_key(j, "positive_radius_m", c.positive_radius_m);
    detail::read_key(j, "negative_radius_m", c.negative_radius_m);
    detail::read_key(j, "num_sampled_negatives", c.num_sampled_negatives);
    detail::read_key(j, "num_hard_negatives", c.num_hard_negatives);
    c.validate();
    return c;
  }
  Json to_json() const {
    return Json{{"positive_radius_m", positive_radius_m},
                {"negative_radius_m", negative_radius_m},
                {"num_sampled_negatives", num_sampled_negatives},
                {"num_hard_negatives", num_hard_negatives}};
  }
};

struct TrainingConfig {
  double margin = 0.1;  // triplet margin on squared descriptor distances
  double learning_rate = 0.05;
  int epochs = 3;
  int batch_size = 2;               // triplets per optimizer step
  int cache_refresh_interval = 1000;  // queries between descriptor-cache refreshes
  std::uint64_t seed = 1;
  std::string optimizer = "sgd";  // sgd | adam
  double momentum = 0.0;
  bool freeze_backbone = false;  // exclude extractor weights from updates
  int checkpoint_every_epochs = 1;
  double test_place_fraction = 0.25;  // places held out for the test side
  double query_fraction = 0.25;       // test-side bins reserved as queries

  void validate() const {
    if (!(margin > 0.0)) throw ConfigError("training.margin must be > 0");
    if (!(learning_rate > 0.0)) throw ConfigError("training.learning_rate must be > 0");
    if (epochs < 0) throw ConfigError("training.epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("training.batch_size must be >= 1");
    if (cache_refresh_interval < 500 || cache_refresh_interval > 1000)
      throw ConfigError("training.cache_refresh_interval must lie in [500, 1000]");
    if (optimizer != "sgd" && optimizer != "adam")
      throw ConfigError("training.optimizer must be sgd|adam");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("training.momentum must be in [0,1)");
    if (checkpoint_every_epochs < 1)
      throw ConfigError("training.checkpoint_every_epochs must be >= 1");
    if (!(test_place_fraction > 0.0) || !(test_place_fraction < 1.0))
      throw ConfigError("training.test_place_fraction must be in (0,1)");
    if (!(query_fraction > 0.0) || !(query_fraction < 1.0))
      throw ConfigError("training.query_fraction must be in (0,1)");
  }

  static TrainingConfig from_json(const Json& j) {
    detail::reject_unknown_keys(
        j,
        {"margin", "learning_rate", "epochs", "batch_size", "cache_refresh_interval", "seed",
         "optimizer", "momentum", "checkpoint_every_epochs", "test_place_fraction",
         "query_fraction"},
        "training");
    TrainingConfig c;
    detail::read_key(j, "margin", c.margin);
    detail::read_key(j, "learning_rate", c.learning_rate);
    detail::read_key(j, "epochs", c.epochs);
    detail::read_key(j, "batch_size", c.batch_size);
    detail::read_key(j, "cache_refresh_interval", c.cache_refresh_interval);
    detail::read_key(j, "seed", c.seed);
    detail::read_key(j, "optimizer", c.optimizer);
    detail::read_key(j, "momentum", c.momentum);
    detail::read_key(j, "checkpoint_every_epochs", c.checkpoint_every_epochs);
    detail::read_key(j, "test_place_fraction", c.test_place_fraction);
    detail::read_key(j, "query_fraction", c.query_fraction);
    c.validate();
    return c;
  }
  Json to_json() const {
    return Json{{"margin", margin},
                {"learning_rate", learning_rate},
                {"epochs", epochs},
                {"batch_size", batch_size},
                {"cache_refresh_interval", cache_refresh_interval},
                {"seed", seed},
                {"optimizer", optimizer},
                {"momentum", momentum},
                {"checkpoint_every_epochs", checkpoint_every_epochs},
                {"test_place_fraction", test_place_fraction},
                {"query_fraction", query_fraction}};
  }
};

struct EvalConfig {
  double recognition_radius_m = 20.0;  // geo radius for a correct retrieval
  std::vector<int> n_values = {1, 5, 10, 20};

  void validate() const {
    if (!(recognition_radius_m >= 0.0))
      throw ConfigError("eval.recognition_radius_m must be >= 0");
    if (n_values.empty()) throw ConfigError("eval.n_values must not be empty");
    for (std::size_t i = 0; i < n_values.size(); ++i) {
      if (n_values[i] < 1) throw ConfigError("eval.n_values entries must be >= 1");
      if (i > 0 && n_values[i] <= n_values[i - 1])
        throw ConfigError("eval.n_values must be strictly increasing");
    }
  }

  static EvalConfig from_json(const Json& j) {
    detail::reject_unknown_keys(j, {"recognition_radius_m", "n_values"}, "eval");
    EvalConfig c;
    detail::read_key(j, "recognition_radius_m", c.recognition_radius_m);
    detail::read_key(j, "n_values", c.n_values);
    c.validate();
    return c;
  }
  Json to_json() const {
    return Json{{"recognition_radius_m", recognition_radius_m}, {"n_values", n_values}};
  }
};

struct AblateSection {
  std::vector<std::string> variants = {"est-mlp", "est-trilinear", "ef", "evg", "4ch"};
  std::vector<std::string> backbones = {"desk-small"};
  int epochs = -1;  // -1 = use training.epochs

  static AblateSection from_json(const Json& j) {
    detail::reject_unknown_keys(j, {"variants", "backbones", "epochs"}, "ablate");
    AblateSection c;
    detail::read_key(j, "variants", c.variants);
    detail::read_key(j, "backbones", c.backbones);
    detail::read_key(j, "epochs", c.epochs);
    if (c.variants.empty()) throw ConfigError("ablate.variants must not be empty");
    if (c.backbones.empty()) throw ConfigError("ablate.backbones must not be empty");
    return c;
  }
  Json to_json() const {
    return Json{{"variants", variants}, {"backbones", backbones}, {"epochs", epochs}};
  }
};

/// The whole declarative run configuration. Every tunable of the pipeline
/// lives here; unknown keys are rejected and each command writes its resolved
/// copy next to its outputs.
struct RunConfig {
  DatasetConfig dataset;
  ReprConfig representation;
  BackboneSection backbone;
  VladSection vlad;
  MiningConfig mining;
  TrainingConfig training;
  EvalConfig eval;
  AblateSection ablate;

  static RunConfig from_json(const Json& j) {
    detail::reject_unknown_keys(
        j, {"dataset", "representation", "backbone", "vlad", "mining", "training", "eval",
            "ablate"},
        "<root>");
    RunConfig c;
    if (j.contains("dataset")) c.dataset = DatasetConfig::from_json(j.at("dataset"));
    if (j.contains("representation"))
      c.representation = ReprConfig::from_json(j.at("representation"));
    if (j.contains("backbone")) c.backbone = BackboneSection::from_json(j.at("backbone"));
    if (j.contains("vlad")) c.vlad = VladSection::from_json(j.at("vlad"));
    if (j.contains("mining")) c.mining = MiningConfig::from_json(j.at("mining"));
    if (j.contains("training")) c.training = TrainingConfig::from_json(j.at("training"));
    if (j.contains("eval")) c.eval = EvalConfig::from_json(j.at("eval"));
    if (j.contains("ablate")) c.ablate = AblateSection::from_json(j.at("ablate"));
    c.validate_cross();
    return c;
  }

  /// Cross-section constraints that single sections cannot check alone.
  void validate_cross() const {
    representation.validate();
    vlad.validate();
    mining.validate();
    training.validate();
    eval.validate();
    if (backbone.input_channels != 0 && backbone.input_channels != representation.channels())
      throw ConfigError("backbone.input_channels (" + std::to_string(backbone.input_channels) +
                        ") does not match the representation's channel count (" +
                        std::to_string(representation.channels()) + ")");
  }

  Json to_json() const {
    return Json{{"dataset", dataset.to_json()},
                {"representation", representation.to_json()},
                {"backbone", backbone.to_json()},
                {"vlad", vlad.to_json()},
                {"mining", mining.to_json()},
                {"training", training.to_json()},
                {"eval", eval.to_json()},
                {"ablate", ablate.to_json()}};
  }
};

/// Stable 64-bit hash of the resolved config (FNV-1a over the canonical dump).
inline std::uint64_t config_hash(const RunConfig& c) {
  const std::string dump = c.to_json().dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char ch : dump) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Applies an ablation variant name to the representation section.
inline void apply_variant(RunConfig& config, const std::string& variant) {
  if (variant == "est-mlp") {
    config.representation.kind = "est";
    config.representation.kernel = "mlp";
  } else if (variant == "est-trilinear") {
    config.representation.kind = "est";
    config.representation.kernel = "trilinear";
  } else if (variant == "ef" || variant == "evg" || variant == "4ch") {
    config.representation.kind = variant;
  } else {
    throw ConfigError("unknown ablation variant '" + variant + "'");
  }
  config.backbone.input_channels = 0;  // re-derive from the representation
}

}  // namespace evpr
