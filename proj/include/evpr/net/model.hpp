#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "evpr/config.hpp"
#include "evpr/core/autograd.hpp"
#include "evpr/events/event.hpp"
#include "evpr/net/backbone.hpp"
#include "evpr/net/vlad.hpp"
#include "evpr/repr/grids.hpp"
#include "evpr/repr/kernel.hpp"

namespace evpr::net {

/// The full descriptor network: representation builder (optionally with the
/// learnable temporal kernel), convolutional extractor, and the aggregation
/// layer. One numeric path serves both training (graph) and plain
/// description, so cached and freshly computed descriptors agree bitwise.
class Model {
 public:
  Model(const ReprConfig& repr, const BackboneSection& backbone_section,
        const VladSection& vlad_section, std::uint64_t seed)
      : repr_(repr), vlad_section_(vlad_section) {
    repr_.validate();
    vlad_section.validate();
    BackboneConfig bc = BackboneConfig::make(backbone_section.architecture, repr_.channels());
    if (backbone_section.descriptor_depth != 0 &&
        backbone_section.descriptor_depth != bc.descriptor_depth)
      throw ConfigError("backbone.descriptor_depth must match the architecture default (" +
                        std::to_string(bc.descriptor_depth) + ")");
    backbone_.emplace(bc, seed);
    if (repr_.kind == "est" && repr_.kernel == "mlp")
      kernel_.emplace(seed, repr::mlp_activation_from_string(repr_.activation));
    // Aggregation params are allocated now (stable identity for the
    // optimizer) and filled by init_vlad_from_bins or a checkpoint load.
    vlad_.clusters = ag::parameter(ag::Tensor{ag::Shape{vlad_section.clusters, bc.descriptor_depth}});
    vlad_.weights = ag::parameter(ag::Tensor{ag::Shape{vlad_section.clusters, bc.descriptor_depth}});
    vlad_.biases = ag::parameter(ag::Tensor{ag::Shape{vlad_section.clusters}});
    vlad_.alpha = vlad_section.alpha;
  }

  const ReprConfig& repr_config() const { return repr_; }
  const Backbone& backbone() const { return *backbone_; }
  const VladParams& vlad() const { return vlad_; }
  const std::optional<repr::MlpKernel>& kernel() const { return kernel_; }
  bool vlad_initialized() const { return vlad_initialized_; }
  int descriptor_dimension() const {
    return vlad_section_.clusters * backbone_->config().descriptor_depth;
  }

  /// Seeds the aggregation layer from backbone responses on sample bins.
  void init_vlad_from_bins(const std::vector<const events::EventBin*>& bins,
                           std::uint64_t seed) {
    std::vector<ag::Tensor> descriptors;
    for (const events::EventBin* bin : bins) {
      const FeatureMap fm = backbone_->extract(representation(*bin));
      const int d = fm.depth(), m = fm.height() * fm.width();
      for (int i = 0; i < m; ++i) {
        ag::Tensor row{ag::Shape{d}};
        for (int p = 0; p < d; ++p) row[static_cast<std::size_t>(p)] = fm.values[static_cast<std::size_t>(p * m + i)];
        descriptors.push_back(std::move(row));
      }
    }
    VladParams init = init_clusters(descriptors, vlad_section_.clusters, vlad_section_.alpha, seed);
    vlad_.clusters->value = init.clusters->value;
    vlad_.weights->value = init.weights->value;
    vlad_.biases->value = init.biases->value;
    vlad_initialized_ = true;
  }

  /// Representation tensor for one bin (plain, no graph).
  ag::Tensor representation(const events::EventBin& bin) const {
    if (repr_.kind == "est") {
      const auto mode = repr::polarity_mode_from_string(repr_.polarity_mode);
      const auto kernel = repr_.kernel == "mlp"
                              ? repr::KernelFunction::learned(*kernel_, repr_.tau_max)
                              : repr::KernelFunction::trilinear();
      return repr::build_est(bin, repr_.time_bins, kernel, mode).values;
    }
    if (repr_.kind == "ef") return repr::build_ef(bin);
    if (repr_.kind == "evg") return repr::build_evg(bin, repr_.time_bins);
    return repr::build_4ch(bin);
  }

  /// Differentiable descriptor graph for one bin.
  ag::Var descriptor_var(const events::EventBin& bin) const {
    ag::Var grid;
    if (repr_.kind == "est" && repr_.kernel == "mlp") {
      grid = repr::build_est_var(bin, repr_.time_bins, *kernel_, repr_.tau_max,
                                 repr::polarity_mode_from_string(repr_.polarity_mode));
    } else {
      grid = ag::constant(representation(bin));
    }
    const ag::Var features = backbone_->forward(grid);
    return aggregate(features, vlad_, vlad_section_.epsilon);
  }

  /// Plain descriptor; same path as descriptor_var.
  ag::Tensor describe(const events::EventBin& bin) const { return descriptor_var(bin)->value; }

  std::vector<std::pair<std::string, ag::Var>> params() const {
    std::vector<std::pair<std::string, ag::Var>> out;
    if (kernel_) {
      auto kp = kernel_->params();
      out.insert(out.end(), kp.begin(), kp.end());
    }
    auto bp = backbone_->params();
    out.insert(out.end(), bp.begin(), bp.end());
    auto vp = vlad_param_list(vlad_);
    out.insert(out.end(), vp.begin(), vp.end());
    return out;
  }

  /// Monotone step counter; stamped onto descriptor caches and reports.
  std::int64_t step = 0;
  std::int64_t epoch = 0;

  void mark_vlad_initialized() { vlad_initialized_ = true; }

 private:
  ReprConfig repr_;
  VladSection vlad_section_;
  std::optional<repr::MlpKernel> kernel_;
  std::optional<Backbone> backbone_;
  VladParams vlad_;
  bool vlad_initialized_ = false;
};

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

inline Json tensor_to_json(const ag::Tensor& t) {
  return Json{{"shape", t.shape()}, {"data", t.vec()}};
}

inline ag::Tensor tensor_from_json(const Json& j) {
  return ag::Tensor{j.at("shape").get<ag::Shape>(), j.at("data").get<std::vector<double>>()};
}

/// Single-file checkpoint: every trainable tensor, the optimizer state, the
/// step/epoch counters and a config snapshot, under a versioned schema.
/// Doubles serialize shortest-round-trip, so a load reproduces forward
/// outputs bit-for-bit.
struct Checkpoint {
  static constexpr int kSchemaVersion = 1;

  std::int64_t step = 0;
  std::int64_t epoch = 0;
  Json config = Json::object();
  std::map<std::string, ag::Tensor> params;
  Json optimizer_state = Json::object();

  static Checkpoint capture(const Model& model, const Json& config_snapshot,
                            Json optimizer_state = Json::object()) {
    Checkpoint c;
    c.step = model.step;
    c.epoch = model.epoch;
    c.config = config_snapshot;
    c.optimizer_state = std::move(optimizer_state);
    for (const auto& [name, var] : model.params()) c.params.emplace(name, var->value);
    return c;
  }

  void restore(Model& model) const {
    auto ps = model.params();
    if (ps.size() != params.size())
      throw DataError("checkpoint: parameter count mismatch (" + std::to_string(params.size()) +
                      " stored, model has " + std::to_string(ps.size()) + ")");
    for (auto& [name, var] : ps) {
      const auto it = params.find(name);
      if (it == params.end()) throw DataError("checkpoint: missing parameter '" + name + "'");
      if (it->second.shape() != var->value.shape())
        throw DataError("checkpoint: shape mismatch for '" + name + "'");
      var->value = it->second;
    }
    model.step = step;
    model.epoch = epoch;
    model.mark_vlad_initialized();
  }

  Json to_json() const {
    Json jp = Json::object();
    for (const auto& [name, t] : params) jp[name] = tensor_to_json(t);
    return Json{{"schema_version", kSchemaVersion}, {"step", step},          {"epoch", epoch},
                {"config", config},                 {"params", jp},          {"optimizer", optimizer_state}};
  }

  static Checkpoint from_json(const Json& j) {
    if (!j.contains("schema_version") || j.at("schema_version").get<int>() != kSchemaVersion)
      throw DataError("checkpoint: unsupported schema version");
    Checkpoint c;
    c.step = j.at("step").get<std::int64_t>();
    c.epoch = j.at("epoch").get<std::int64_t>();
    c.config = j.at("config");
    c.optimizer_state = j.at("optimizer");
    for (auto it = j.at("params").begin(); it != j.at("params").end(); ++it)
      c.params.emplace(it.key(), tensor_from_json(it.value()));
    return c;
  }
};

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << c.to_json().dump() << '\n';
  if (!out) throw DataError("write failed for '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw DataError("malformed checkpoint '" + path + "': " + e.what());
  }
  return Checkpoint::from_json(j);
}

}  // namespace evpr::net
