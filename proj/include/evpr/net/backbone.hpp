#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "evpr/core/autograd.hpp"
#include "evpr/core/random.hpp"
#include "evpr/core/tensor.hpp"
#include "evpr/errors.hpp"

namespace evpr::net {

/// Dense w x h x D feature tensor produced by the feature extractor.
struct FeatureMap {
  ag::Tensor values;  // (D, h, w)
  int depth() const { return values.dim(0); }
  int height() const { return values.dim(1); }
  int width() const { return values.dim(2); }
};

enum class LayerKind { Conv, Norm, Activation, MaxPool, Add };

struct BackboneConfig {
  std::string architecture = "desk-small";  // "desk-small" | "paper-deep"
  int input_channels = 8;
  int descriptor_depth = 128;
  int declared_height = 4;  // feature grid at the nominal input size
  int declared_width = 4;
  int nominal_input = 64;  // nominal square input side in pixels

  /// Fills the architecture-determined fields.
  static BackboneConfig make(const std::string& architecture, int input_channels) {
    BackboneConfig c;
    c.architecture = architecture;
    c.input_channels = input_channels;
    if (architecture == "desk-small") {
      c.descriptor_depth = 128;
      c.declared_height = c.declared_width = 4;
      c.nominal_input = 64;
    } else if (architecture == "paper-deep") {
      c.descriptor_depth = 512;
      c.declared_height = c.declared_width = 7;
      c.nominal_input = 224;
    } else {
      throw ConfigError("unknown backbone architecture '" + architecture + "'");
    }
    if (input_channels < 1) throw ConfigError("backbone: input_channels must be >= 1");
    return c;
  }
};

/// Convolutional feature extractor. Both architectures end at their last
/// convolutional stage: there is no global pooling and no classifier head,
/// so the output keeps its spatial grid.
///
///   desk-small: four stride-2 conv/norm/relu blocks, 64x64 -> (128, 4, 4).
///   paper-deep: a residual stack (7x7 stem, max pool, four basic-block
///               stages), 224x224 -> (512, 7, 7).
///
/// Normalization is per-sample (channel statistics over the spatial extent),
/// so inference is a pure function of the input and batching never couples
/// samples. Forward passes are deterministic given frozen parameters;
/// parameter updates require external synchronization.
class Backbone {
 public:
  Backbone(const BackboneConfig& config, std::uint64_t seed) : config_(config) {
    rng::Engine init(rng::derive_seed(seed, "backbone-init"));
    if (config.architecture == "desk-small") {
      build_desk_small(init);
    } else if (config.architecture == "paper-deep") {
      build_paper_deep(init);
    } else {
      throw ConfigError("unknown backbone architecture '" + config.architecture + "'");
    }
  }

  const BackboneConfig& config() const { return config_; }

  /// Layer kinds in execution order; lets tests verify the cropping rule
  /// (the graph must end at a convolutional stage, not a pool or classifier).
  const std::vector<LayerKind>& structure() const { return structure_; }

  /// Builds the differentiable forward graph for one sample (C, H, W).
  ag::Var forward(const ag::Var& input) const {
    if (input->value.rank() != 3 || input->value.dim(0) != config_.input_channels)
      throw ShapeError("backbone: expected (" + std::to_string(config_.input_channels) +
                       ", H, W) input, got " + ag::shape_str(input->value.shape()));
    ag::Var x = input;
    std::vector<ag::Var> skip_stack;  // skip-connection scratch, local so forward stays reentrant
    std::size_t conv_i = 0, norm_i = 0;
    for (const PlanStep& step : plan_) {
      switch (step.kind) {
        case PlanStep::Kind::Conv: {
          const ConvLayer& c = convs_[conv_i++];
          x = ag::conv2d(x, c.w, c.b, c.stride, c.pad);
          break;
        }
        case PlanStep::Kind::Norm: {
          const NormLayer& nl = norms_[norm_i++];
          x = ag::channel_norm(x, nl.gamma, nl.beta, kNormEps);
          break;
        }
        case PlanStep::Kind::Relu:
          x = ag::relu(x);
          break;
        case PlanStep::Kind::MaxPool:
          x = ag::maxpool2d(x, step.pool_k, step.pool_stride);
          break;
        case PlanStep::Kind::BlockStart:
          skip_stack.push_back(x);
          break;
        case PlanStep::Kind::SkipProject: {
          const ConvLayer& c = convs_[conv_i++];
          const NormLayer& nl = norms_[norm_i++];
          ag::Var skip = ag::conv2d(skip_stack.back(), c.w, c.b, c.stride, c.pad);
          skip = ag::channel_norm(skip, nl.gamma, nl.beta, kNormEps);
          skip_stack.back() = skip;
          break;
        }
        case PlanStep::Kind::AddSkip:
          x = ag::add(x, skip_stack.back());
          skip_stack.pop_back();
          break;
      }
    }
    return x;
  }

  /// Plain (no-graph-needed) feature extraction; same numeric path as the
  /// graph forward.
  FeatureMap extract(const ag::Tensor& grid) const {
    ag::Var out = forward(ag::constant(grid));
    return FeatureMap{out->value};
  }

  std::vector<std::pair<std::string, ag::Var>> params() const {
    std::vector<std::pair<std::string, ag::Var>> out;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      out.emplace_back("backbone.conv" + std::to_string(i) + ".weight", convs_[i].w);
      out.emplace_back("backbone.conv" + std::to_string(i) + ".bias", convs_[i].b);
    }
    for (std::size_t i = 0; i < norms_.size(); ++i) {
      out.emplace_back("backbone.norm" + std::to_string(i) + ".gamma", norms_[i].gamma);
      out.emplace_back("backbone.norm" + std::to_string(i) + ".beta", norms_[i].beta);
    }
    return out;
  }

 private:
  static constexpr double kNormEps = 1e-5;

  struct ConvLayer {
    ag::Var w, b;
    int stride = 1, pad = 1;
  };
  struct NormLayer {
    ag::Var gamma, beta;
  };
  struct PlanStep {
    enum class Kind { Conv, Norm, Relu, MaxPool, BlockStart, SkipProject, AddSkip };
    Kind kind;
    int pool_k = 0, pool_stride = 0;
  };

  void add_conv(rng::Engine& init, int in_ch, int out_ch, int k, int stride, int pad) {
    ag::Tensor w{ag::Shape{out_ch, in_ch, k, k}};
    const double stddev = std::sqrt(2.0 / (in_ch * k * k));
    for (auto& v : w.vec()) v = stddev * init.normal();
    convs_.push_back(ConvLayer{ag::parameter(std::move(w)),
                               ag::parameter(ag::Tensor{ag::Shape{out_ch}}), stride, pad});
    plan_.push_back({PlanStep::Kind::Conv});
    structure_.push_back(LayerKind::Conv);
  }

  void add_norm(int ch) {
    norms_.push_back(NormLayer{ag::parameter(ag::Tensor::full(ag::Shape{ch}, 1.0)),
                               ag::parameter(ag::Tensor{ag::Shape{ch}})});
    plan_.push_back({PlanStep::Kind::Norm});
    structure_.push_back(LayerKind::Norm);
  }

  void add_relu() {
    plan_.push_back({PlanStep::Kind::Relu});
    structure_.push_back(LayerKind::Activation);
  }

  void build_desk_small(rng::Engine& init) {
    int in_ch = config_.input_channels;
    for (int out_ch : {16, 32, 64, 128}) {
      add_conv(init, in_ch, out_ch, 3, 2, 1);
      add_norm(out_ch);
      add_relu();
      in_ch = out_ch;
    }
  }

  void build_paper_deep(rng::Engine& init) {
    add_conv(init, config_.input_channels, 64, 7, 2, 3);
    add_norm(64);
    add_relu();
    plan_.push_back({PlanStep::Kind::MaxPool, 3, 2});
    structure_.push_back(LayerKind::MaxPool);
    int in_ch = 64;
    const int stage_channels[4] = {64, 128, 256, 512};
    const int stage_blocks[4] = {2, 2, 2, 2};
    for (int s = 0; s < 4; ++s) {
      for (int b = 0; b < stage_blocks[s]; ++b) {
        const int out_ch = stage_channels[s];
        const int stride = (b == 0 && s > 0) ? 2 : 1;
        plan_.push_back({PlanStep::Kind::BlockStart});
        add_conv(init, in_ch, out_ch, 3, stride, 1);
        add_norm(out_ch);
        add_relu();
        add_conv(init, out_ch, out_ch, 3, 1, 1);
        add_norm(out_ch);
        if (stride != 1 || in_ch != out_ch) {
          // 1x1 projection on the skip path
          ag::Tensor w{ag::Shape{out_ch, in_ch, 1, 1}};
          const double stddev = std::sqrt(2.0 / in_ch);
          for (auto& v : w.vec()) v = stddev * init.normal();
          convs_.push_back(ConvLayer{ag::parameter(std::move(w)),
                                     ag::parameter(ag::Tensor{ag::Shape{out_ch}}), stride, 0});
          norms_.push_back(NormLayer{ag::parameter(ag::Tensor::full(ag::Shape{out_ch}, 1.0)),
                                     ag::parameter(ag::Tensor{ag::Shape{out_ch}})});
          plan_.push_back({PlanStep::Kind::SkipProject});
          structure_.push_back(LayerKind::Conv);
          structure_.push_back(LayerKind::Norm);
        }
        plan_.push_back({PlanStep::Kind::AddSkip});
        structure_.push_back(LayerKind::Add);
        add_relu();
        in_ch = out_ch;
      }
    }
  }

  BackboneConfig config_;
  std::vector<ConvLayer> convs_;
  std::vector<NormLayer> norms_;
  std::vector<PlanStep> plan_;
  std::vector<LayerKind> structure_;
};

/// Runs the extractor on one representation tensor, checking the channel
/// contract.
inline FeatureMap extract_features(const ag::Tensor& grid, const Backbone& backbone) {
  return backbone.extract(grid);
}

}  // namespace evpr::net
