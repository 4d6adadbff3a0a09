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

namespace evpr::repr {

/// Hand-designed temporal voting kernel: a unit hat with support |tau| < 1.
inline double trilinear_kernel(double tau) { return std::max(0.0, 1.0 - std::fabs(tau)); }

inline constexpr int kMlpHiddenUnits = 30;

/// Smooth bounded hidden activation for the learnable kernel. The choice is
/// a config item and is recorded in run metadata; tanh is the default and
/// currently the only implementation.
enum class MlpActivation { Tanh };

inline std::string to_string(MlpActivation a) {
  switch (a) {
    case MlpActivation::Tanh:
      return "tanh";
  }
  return "tanh";
}

inline MlpActivation mlp_activation_from_string(const std::string& s) {
  if (s == "tanh") return MlpActivation::Tanh;
  throw ConfigError("unknown kernel activation '" + s + "'");
}

/// Learnable temporal kernel: scalar normalized offset in, scalar vote out,
/// through two hidden layers of 30 units each. Parameters live in autograd
/// nodes so voxel grids built from this kernel are differentiable end to end.
///
/// A fresh kernel is pre-fit by regression so that it reproduces the
/// trilinear hat on [-1.5, 1.5]; training then starts from the hand-designed
/// baseline rather than from noise.
class MlpKernel {
 public:
  MlpKernel(std::uint64_t seed, MlpActivation activation = MlpActivation::Tanh,
            bool prefit = true)
      : activation_(activation) {
    rng::Engine init(rng::derive_seed(seed, "kernel-init"));
    auto randn = [&init](ag::Shape shape, double stddev) {
      ag::Tensor t{std::move(shape)};
      for (auto& v : t.vec()) v = stddev * init.normal();
      return t;
    };
    const int h = kMlpHiddenUnits;
    w1_ = ag::parameter(randn({h}, 1.0));
    b1_ = ag::parameter(ag::Tensor{ag::Shape{h}});
    w2_ = ag::parameter(randn({h, h}, 1.0 / std::sqrt(static_cast<double>(h))));
    b2_ = ag::parameter(ag::Tensor{ag::Shape{h}});
    w3_ = ag::parameter(randn({h}, 1.0 / std::sqrt(static_cast<double>(h))));
    b3_ = ag::parameter(ag::Tensor{ag::Shape{1}});
    if (prefit) fit_to_trilinear();
  }

  MlpActivation activation() const { return activation_; }

  /// Forward pass on a plain scalar, no graph involved.
  double value(double tau) const {
    const int h = kMlpHiddenUnits;
    double h1[kMlpHiddenUnits], h2[kMlpHiddenUnits];
    for (int i = 0; i < h; ++i) h1[i] = act(w1_->value[i] * tau + b1_->value[i]);
    for (int j = 0; j < h; ++j) {
      double acc = b2_->value[j];
      for (int i = 0; i < h; ++i) acc += w2_->value.at(j, i) * h1[i];
      h2[j] = act(acc);
    }
    double out = b3_->value[0];
    for (int j = 0; j < h; ++j) out += w3_->value[j] * h2[j];
    return out;
  }

  /// d value / d tau at the given offset.
  double derivative_tau(double tau) const {
    const int h = kMlpHiddenUnits;
    double h1[kMlpHiddenUnits], d1[kMlpHiddenUnits];
    double h2[kMlpHiddenUnits], d2pre[kMlpHiddenUnits];
    for (int i = 0; i < h; ++i) {
      const double pre = w1_->value[i] * tau + b1_->value[i];
      h1[i] = act(pre);
      d1[i] = act_grad(h1[i]) * w1_->value[i];
    }
    for (int j = 0; j < h; ++j) {
      double acc = b2_->value[j], dacc = 0.0;
      for (int i = 0; i < h; ++i) {
        acc += w2_->value.at(j, i) * h1[i];
        dacc += w2_->value.at(j, i) * d1[i];
      }
      h2[j] = act(acc);
      d2pre[j] = act_grad(h2[j]) * dacc;
    }
    double d = 0.0;
    for (int j = 0; j < h; ++j) d += w3_->value[j] * d2pre[j];
    return d;
  }

  /// Accumulates upstream * d value(tau) / d params into the parameter
  /// gradients. Used by the voxel-grid backward pass.
  void accumulate_param_grads(double tau, double upstream) const {
    const int h = kMlpHiddenUnits;
    double h1[kMlpHiddenUnits], h2[kMlpHiddenUnits];
    for (int i = 0; i < h; ++i) h1[i] = act(w1_->value[i] * tau + b1_->value[i]);
    for (int j = 0; j < h; ++j) {
      double acc = b2_->value[j];
      for (int i = 0; i < h; ++i) acc += w2_->value.at(j, i) * h1[i];
      h2[j] = act(acc);
    }
    // out = w3 . h2 + b3
    b3_->grad[0] += upstream;
    double g2[kMlpHiddenUnits];  // dL/d pre2
    for (int j = 0; j < h; ++j) {
      w3_->grad[j] += upstream * h2[j];
      g2[j] = upstream * w3_->value[j] * act_grad(h2[j]);
    }
    double g1[kMlpHiddenUnits] = {};
    for (int j = 0; j < h; ++j) {
      b2_->grad[j] += g2[j];
      for (int i = 0; i < h; ++i) {
        w2_->grad.at(j, i) += g2[j] * h1[i];
        g1[i] += g2[j] * w2_->value.at(j, i);
      }
    }
    for (int i = 0; i < h; ++i) {
      const double gpre = g1[i] * act_grad(h1[i]);
      w1_->grad[i] += gpre * tau;
      b1_->grad[i] += gpre;
    }
  }

  std::vector<std::pair<std::string, ag::Var>> params() const {
    return {{"kernel.w1", w1_}, {"kernel.b1", b1_}, {"kernel.w2", w2_},
            {"kernel.b2", b2_}, {"kernel.w3", w3_}, {"kernel.b3", b3_}};
  }

 private:
  double act(double x) const { return std::tanh(x); }
  /// Derivative expressed through the activation output.
  double act_grad(double y) const { return 1.0 - y * y; }

  /// Full-batch Adam regression of the kernel onto the trilinear hat over a
  /// fixed grid of offsets. Deterministic: fixed grid, fixed step count.
  void fit_to_trilinear() {
    constexpr int kGrid = 101;
    constexpr int kSteps = 4000;
    constexpr double kLr = 0.01;
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    std::vector<double> taus(kGrid), targets(kGrid);
    for (int i = 0; i < kGrid; ++i) {
      taus[static_cast<std::size_t>(i)] = -1.5 + 3.0 * i / (kGrid - 1);
      targets[static_cast<std::size_t>(i)] = trilinear_kernel(taus[static_cast<std::size_t>(i)]);
    }
    auto ps = params();
    std::vector<ag::Tensor> m, v;
    for (auto& [name, p] : ps) {
      m.emplace_back(p->value.shape());
      v.emplace_back(p->value.shape());
      p->grad = ag::Tensor(p->value.shape());
    }
    for (int step = 1; step <= kSteps; ++step) {
      for (auto& [name, p] : ps) p->grad.fill(0.0);
      for (int i = 0; i < kGrid; ++i) {
        const double tau = taus[static_cast<std::size_t>(i)];
        const double err = value(tau) - targets[static_cast<std::size_t>(i)];
        accumulate_param_grads(tau, 2.0 * err / kGrid);
      }
      const double bc1 = 1.0 - std::pow(kBeta1, step);
      const double bc2 = 1.0 - std::pow(kBeta2, step);
      for (std::size_t pi = 0; pi < ps.size(); ++pi) {
        auto& p = ps[pi].second;
        for (std::size_t j = 0; j < p->value.size(); ++j) {
          const double g = p->grad[j];
          m[pi][j] = kBeta1 * m[pi][j] + (1.0 - kBeta1) * g;
          v[pi][j] = kBeta2 * v[pi][j] + (1.0 - kBeta2) * g * g;
          p->value[j] -= kLr * (m[pi][j] / bc1) / (std::sqrt(v[pi][j] / bc2) + kEps);
        }
      }
    }
    for (auto& [name, p] : ps) p->grad.fill(0.0);
  }

  MlpActivation activation_;
  ag::Var w1_, b1_, w2_, b2_, w3_, b3_;
};

/// Temporal kernel selector for voxel-grid construction.
struct KernelFunction {
  enum class Kind { Trilinear, Mlp };
  Kind kind = Kind::Trilinear;
  const MlpKernel* mlp = nullptr;  // required when kind == Mlp
  double tau_max = 1.5;            // evaluation window for the MLP kernel

  static KernelFunction trilinear() { return KernelFunction{}; }
  static KernelFunction learned(const MlpKernel& k, double tau_max = 1.5) {
    KernelFunction f;
    f.kind = Kind::Mlp;
    f.mlp = &k;
    f.tau_max = tau_max;
    return f;
  }
};

/// Evaluates the selected kernel at a normalized offset. The trilinear hat
/// has support |tau| < 1; the MLP is evaluated only for |tau| <= tau_max and
/// reads as zero outside.
inline double kernel_value(const KernelFunction& kernel, double tau) {
  if (kernel.kind == KernelFunction::Kind::Trilinear) return trilinear_kernel(tau);
  if (kernel.mlp == nullptr) throw ParamError("kernel_value: MLP kernel not set");
  if (std::fabs(tau) > kernel.tau_max) return 0.0;
  return kernel.mlp->value(tau);
}

}  // namespace evpr::repr
