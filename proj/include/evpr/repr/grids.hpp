#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "evpr/core/autograd.hpp"
#include "evpr/core/tensor.hpp"
#include "evpr/events/event.hpp"
#include "evpr/repr/kernel.hpp"

namespace evpr::repr {

/// Polarity handling for voxel grids. Split routes ON and OFF events into
/// separate channel banks (2C channels: ON bank first, then OFF); signed
/// single keeps one C-channel bank with polarity-signed votes.
enum class PolarityMode { Split, SignedSingle };

inline std::string to_string(PolarityMode m) {
  return m == PolarityMode::Split ? "split" : "signed-single";
}

inline PolarityMode polarity_mode_from_string(const std::string& s) {
  if (s == "split") return PolarityMode::Split;
  if (s == "signed-single") return PolarityMode::SignedSingle;
  throw ConfigError("unknown polarity mode '" + s + "'");
}

/// Spatio-temporal voxel grid sampled from the kernel-smoothed event field.
struct ESTVoxelGrid {
  ag::Tensor values;  // (channels, H, W); channels = C or 2C
  int time_bins = 0;  // C
  std::int64_t t0 = 0;
  double dt = 0.0;
  PolarityMode polarity_mode = PolarityMode::Split;
};

namespace detail {

/// Normalized temporal offset of sample n from an event at tk. Written as a
/// single expression so that independent reimplementations of the sampling
/// rule land on bit-identical values.
inline double est_tau(double t0, double dt, int n, double tk) { return (t0 + n * dt - tk) / dt; }

/// Invokes fn(channel_offset, y, x, tau, sign) for every (event, time-sample)
/// contribution of the grid. channel_offset is the index within one bank;
/// bank routing is the caller's job via the sign/bank callback pair.
///
/// Degenerate bins (C == 1 or zero time span) put each event's entire mass on
/// channel 0 at tau == 0.
template <class Fn>
void for_each_est_contribution(const events::EventBin& bin, int time_bins,
                               const KernelFunction& kernel, Fn&& fn) {
  if (bin.empty()) return;
  const auto& ev = bin.events();
  const double t0 = static_cast<double>(bin.t_first());
  const bool degenerate = time_bins == 1 || bin.t_last() == bin.t_first();
  if (degenerate) {
    for (const events::Event& e : ev) fn(0, e.y, e.x, 0.0, e.p);
    return;
  }
  const double dt =
      static_cast<double>(bin.t_last() - bin.t_first()) / static_cast<double>(time_bins - 1);
  const double reach = kernel.kind == KernelFunction::Kind::Mlp ? kernel.tau_max : 1.0;
  for (const events::Event& e : ev) {
    const double tk = static_cast<double>(e.t);
    const double u = (tk - t0) / dt;  // fractional sample position of the event
    int lo = static_cast<int>(std::floor(u - reach)) - 1;
    int hi = static_cast<int>(std::ceil(u + reach)) + 1;
    lo = std::max(lo, 0);
    hi = std::min(hi, time_bins - 1);
    for (int n = lo; n <= hi; ++n) {
      const double tau = est_tau(t0, dt, n, tk);
      if (kernel.kind == KernelFunction::Kind::Mlp && std::fabs(tau) > kernel.tau_max) continue;
      fn(n, e.y, e.x, tau, e.p);
    }
  }
}

}  // namespace detail

/// Builds the voxel-grid representation of an event bin: each event votes
/// kernel(tau) into the time samples around it, at its own pixel. Split mode
/// uses unit magnitudes routed to per-polarity banks; signed-single keeps
/// polarity as the vote sign. Empty bins produce all-zero grids.
inline ESTVoxelGrid build_est(const events::EventBin& bin, int time_bins,
                              const KernelFunction& kernel,
                              PolarityMode mode = PolarityMode::Split) {
  if (time_bins < 1) throw ParamError("build_est: channel count must be >= 1");
  const auto geom = bin.geometry();
  const int banks = mode == PolarityMode::Split ? 2 : 1;
  ESTVoxelGrid grid;
  grid.time_bins = time_bins;
  grid.polarity_mode = mode;
  grid.values = ag::Tensor{ag::Shape{banks * time_bins, geom.height, geom.width}};
  if (!bin.empty()) {
    grid.t0 = bin.t_first();
    grid.dt = time_bins > 1 ? static_cast<double>(bin.t_last() - bin.t_first()) /
                                  static_cast<double>(time_bins - 1)
                            : 0.0;
  }
  detail::for_each_est_contribution(
      bin, time_bins, kernel, [&](int n, int y, int x, double tau, int p) {
        const double w = kernel_value(kernel, tau);
        if (mode == PolarityMode::Split) {
          const int bank = p == 1 ? 0 : 1;
          grid.values.at(bank * time_bins + n, y, x) += w;
        } else {
          grid.values.at(n, y, x) += p * w;
        }
      });
  return grid;
}

/// Differentiable voxel grid for the learnable kernel: the returned node's
/// value equals build_est(...) with the same arguments, and its backward pass
/// routes voxel gradients into the kernel parameters.
inline ag::Var build_est_var(const events::EventBin& bin, int time_bins, const MlpKernel& mlp,
                             double tau_max, PolarityMode mode = PolarityMode::Split) {
  const KernelFunction kernel = KernelFunction::learned(mlp, tau_max);
  ESTVoxelGrid grid = build_est(bin, time_bins, kernel, mode);
  std::vector<ag::Var> inputs;
  for (auto& [name, p] : mlp.params()) inputs.push_back(p);
  const MlpKernel* mlp_ptr = &mlp;
  // The closure owns a copy of the bin (graphs can outlive the caller's
  // reference) and re-scans it in the backward pass instead of caching
  // per-contribution activations; the rescan is cheap relative to the memory
  // caching would take on large bins.
  auto bin_copy = std::make_shared<const events::EventBin>(bin);
  auto backprop = [bin_copy, time_bins, kernel, mode, mlp_ptr](ag::Node& node) {
    detail::for_each_est_contribution(
        *bin_copy, time_bins, kernel, [&](int n, int y, int x, double tau, int p) {
          double upstream;
          if (mode == PolarityMode::Split) {
            const int bank = p == 1 ? 0 : 1;
            upstream = node.grad.at(bank * time_bins + n, y, x);
          } else {
            upstream = p * node.grad.at(n, y, x);
          }
          if (upstream != 0.0) mlp_ptr->accumulate_param_grads(tau, upstream);
        });
  };
  return ag::make_node(std::move(grid.values), std::move(inputs), "est_mlp", std::move(backprop));
}

/// Event frame: per-pixel signed polarity sum, one channel. Timestamps are
/// discarded; no motion compensation is applied.
inline ag::Tensor build_ef(const events::EventBin& bin) {
  const auto geom = bin.geometry();
  ag::Tensor out{ag::Shape{1, geom.height, geom.width}};
  for (const events::Event& e : bin.events()) out.at(0, e.y, e.x) += e.p;
  return out;
}

/// Unipolar event voxel grid: the trilinear-kernel grid with every polarity
/// replaced by +1. C channels.
inline ag::Tensor build_evg(const events::EventBin& bin, int time_bins) {
  if (time_bins < 1) throw ParamError("build_evg: channel count must be >= 1");
  const auto geom = bin.geometry();
  ag::Tensor out{ag::Shape{time_bins, geom.height, geom.width}};
  const KernelFunction kernel = KernelFunction::trilinear();
  detail::for_each_est_contribution(bin, time_bins, kernel,
                                    [&](int n, int y, int x, double tau, int /*p*/) {
                                      out.at(n, y, x) += kernel_value(kernel, tau);
                                    });
  return out;
}

/// Four-channel count/timestamp image:
///   channel 0: ON event count per pixel
///   channel 1: OFF event count per pixel
///   channel 2: timestamp of the last ON event, normalized to [0,1]
///   channel 3: timestamp of the last OFF event, normalized to [0,1]
/// Timestamps normalize over the bin's span; a zero-span (or empty) bin maps
/// to zero. Pixels without events of the given polarity stay zero.
inline ag::Tensor build_4ch(const events::EventBin& bin) {
  const auto geom = bin.geometry();
  ag::Tensor out{ag::Shape{4, geom.height, geom.width}};
  if (bin.empty()) return out;
  const std::int64_t t0 = bin.t_first();
  const std::int64_t span = bin.t_last() - bin.t_first();
  for (const events::Event& e : bin.events()) {
    const double norm_t =
        span > 0 ? static_cast<double>(e.t - t0) / static_cast<double>(span) : 0.0;
    if (e.p == 1) {
      out.at(0, e.y, e.x) += 1.0;
      out.at(2, e.y, e.x) = norm_t;
    } else {
      out.at(1, e.y, e.x) += 1.0;
      out.at(3, e.y, e.x) = norm_t;
    }
  }
  return out;
}

}  // namespace evpr::repr
