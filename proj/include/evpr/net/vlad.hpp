#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "evpr/core/autograd.hpp"
#include "evpr/core/random.hpp"
#include "evpr/core/tensor.hpp"
#include "evpr/errors.hpp"
#include "evpr/net/backbone.hpp"

namespace evpr::net {

/// Trainable parameters of the aggregation layer. The sharpness alpha is
/// used only to set the initial assignment weights and biases
/// (w_k = 2*alpha*c_k, b_k = -alpha*|c_k|^2); afterwards clusters, weights
/// and biases train independently.
struct VladParams {
  ag::Var clusters;  // (K, D)
  ag::Var weights;   // (K, D)
  ag::Var biases;    // (K)
  double alpha = 100.0;

  int cluster_count() const { return clusters->value.dim(0); }
  int depth() const { return clusters->value.dim(1); }
};

/// Unit-norm global descriptor of dimension D*K (flattened column blocks,
/// one block per cluster).
struct GlobalDescriptor {
  ag::Tensor v;
  std::size_t dimension() const { return v.size(); }
};

/// Lloyd k-means with a fixed seed and iteration cap. Centers start from a
/// random subset of K distinct samples, so the final objective never exceeds
/// the random-subset objective. Ties in assignment go to the lowest center
/// index; clusters that empty out keep their previous center.
inline ag::Tensor kmeans_centers(const std::vector<ag::Tensor>& samples, int k,
                                 std::uint64_t seed, int max_iterations = 25) {
  if (k < 1) throw ParamError("kmeans: K must be >= 1");
  if (samples.empty()) throw ParamError("kmeans: no samples");
  const int dim = static_cast<int>(samples.front().size());

  // Distinct samples only; duplicated inputs cannot seed distinct centers.
  std::vector<int> distinct;
  for (int i = 0; i < static_cast<int>(samples.size()); ++i) {
    bool dup = false;
    for (int j : distinct) {
      if (ag::max_abs_diff(samples[static_cast<std::size_t>(i)],
                           samples[static_cast<std::size_t>(j)]) == 0.0) {
        dup = true;
        break;
      }
    }
    if (!dup) distinct.push_back(i);
  }
  if (static_cast<int>(distinct.size()) < k)
    throw DataError("kmeans: need at least " + std::to_string(k) + " distinct samples, have " +
                    std::to_string(distinct.size()));

  rng::Engine engine(rng::derive_seed(seed, "kmeans-init"));
  const std::vector<int> chosen =
      engine.sample_without_replacement(static_cast<int>(distinct.size()), k);
  ag::Tensor centers{ag::Shape{k, dim}};
  for (int c = 0; c < k; ++c) {
    const ag::Tensor& s = samples[static_cast<std::size_t>(distinct[static_cast<std::size_t>(chosen[static_cast<std::size_t>(c)])])];
    for (int d = 0; d < dim; ++d) centers.at(c, d) = s[static_cast<std::size_t>(d)];
  }

  std::vector<int> assign(samples.size(), -1);
  for (int iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      int best_c = 0;
      for (int c = 0; c < k; ++c) {
        double d2 = 0.0;
        for (int d = 0; d < dim; ++d) {
          const double diff = samples[i][static_cast<std::size_t>(d)] - centers.at(c, d);
          d2 += diff * diff;
        }
        if (d2 < best) {
          best = d2;
          best_c = c;
        }
      }
      if (assign[i] != best_c) {
        assign[i] = best_c;
        changed = true;
      }
    }
    if (!changed) break;
    ag::Tensor sums{ag::Shape{k, dim}};
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      ++counts[static_cast<std::size_t>(assign[i])];
      for (int d = 0; d < dim; ++d) sums.at(assign[i], d) += samples[i][static_cast<std::size_t>(d)];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] == 0) continue;
      for (int d = 0; d < dim; ++d)
        centers.at(c, d) = sums.at(c, d) / counts[static_cast<std::size_t>(c)];
    }
  }
  return centers;
}

inline double kmeans_objective(const std::vector<ag::Tensor>& samples, const ag::Tensor& centers) {
  const int k = centers.dim(0), dim = centers.dim(1);
  double total = 0.0;
  for (const auto& s : samples) {
    double best = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      double d2 = 0.0;
      for (int d = 0; d < dim; ++d) {
        const double diff = s[static_cast<std::size_t>(d)] - centers.at(c, d);
        d2 += diff * diff;
      }
      best = std::min(best, d2);
    }
    total += best;
  }
  return total;
}

/// Initializes the layer from sample descriptors: k-means for the clusters,
/// then the alpha identities for weights and biases.
inline VladParams init_clusters(const std::vector<ag::Tensor>& sample_descriptors, int k,
                                double alpha, std::uint64_t seed) {
  if (!(alpha > 0.0)) throw ParamError("init_clusters: alpha must be > 0");
  ag::Tensor centers = kmeans_centers(sample_descriptors, k, seed);
  const int dim = centers.dim(1);
  ag::Tensor weights{ag::Shape{k, dim}};
  ag::Tensor biases{ag::Shape{k}};
  for (int c = 0; c < k; ++c) {
    double norm2 = 0.0;
    for (int d = 0; d < dim; ++d) {
      weights.at(c, d) = 2.0 * alpha * centers.at(c, d);
      norm2 += centers.at(c, d) * centers.at(c, d);
    }
    biases[static_cast<std::size_t>(c)] = -alpha * norm2;
  }
  VladParams p;
  p.clusters = ag::parameter(std::move(centers));
  p.weights = ag::parameter(std::move(weights));
  p.biases = ag::parameter(std::move(biases));
  p.alpha = alpha;
  return p;
}

/// Soft assignment of M descriptors to K clusters: row-wise softmax over the
/// affine logits w_k . x_i + b_k. Rows sum to one.
inline ag::Var soft_assign(const ag::Var& descriptors, const VladParams& params) {
  return ag::softmax_rows(ag::linear_rows(descriptors, params.weights, params.biases));
}

/// Plain-tensor convenience wrapper.
inline ag::Tensor soft_assign(const ag::Tensor& descriptors, const VladParams& params) {
  return soft_assign(ag::constant(descriptors), params)->value;
}

inline constexpr double kVladNormEps = 1e-12;

/// Full aggregation graph: flatten the feature map into h*w descriptors,
/// soft-assign, accumulate weighted residuals against the clusters,
/// intra-normalize each cluster's residual block, flatten (cluster-major
/// blocks of size D), L2-normalize.
///
/// Blocks whose norm is <= eps pass through unnormalized and an all-zero
/// aggregate comes back as the zero vector; exact zeros are legal (a single
/// descriptor sitting on its cluster center) and dividing by zero would be
/// worse than the degenerate output.
inline ag::Var aggregate(const ag::Var& feature_map, const VladParams& params,
                         double eps = kVladNormEps) {
  if (feature_map->value.rank() != 3)
    throw ShapeError("aggregate: expected (D, h, w) feature map");
  if (feature_map->value.dim(0) != params.depth())
    throw ShapeError("aggregate: feature depth " + std::to_string(feature_map->value.dim(0)) +
                     " does not match layer depth " + std::to_string(params.depth()));
  const ag::Var rows = ag::feature_map_rows(feature_map);
  const ag::Var assignments = soft_assign(rows, params);
  const ag::Var residuals = ag::vlad_accumulate(assignments, rows, params.clusters);
  const ag::Var intra = ag::normalize_rows(residuals, eps);
  return ag::normalize_vector(ag::flatten(intra), eps);
}

/// Plain-tensor convenience wrapper.
inline GlobalDescriptor aggregate(const FeatureMap& feature_map, const VladParams& params,
                                  double eps = kVladNormEps) {
  return GlobalDescriptor{aggregate(ag::constant(feature_map.values), params, eps)->value};
}

inline std::vector<std::pair<std::string, ag::Var>> vlad_param_list(const VladParams& p) {
  return {{"vlad.clusters", p.clusters}, {"vlad.weights", p.weights}, {"vlad.biases", p.biases}};
}

}  // namespace evpr::net
