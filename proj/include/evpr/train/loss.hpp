#pragma once

#include <algorithm>
#include <vector>

#include "evpr/core/autograd.hpp"

namespace evpr::train {

/// Triplet ranking loss on plain distances:
///   sum_j max(d_pos - d_neg_j + margin, 0)
/// Non-negative; zero exactly when every negative clears the positive by the
/// margin. The hinge takes subgradient zero at its kink.
inline double triplet_loss(double d_pos, const std::vector<double>& d_negs, double margin) {
  double total = 0.0;
  for (double d_neg : d_negs) total += std::max(d_pos - d_neg + margin, 0.0);
  return total;
}

/// Graph version over scalar distance nodes.
inline ag::Var triplet_loss(const ag::Var& d_pos, const std::vector<ag::Var>& d_negs,
                            double margin) {
  ag::Var total;
  for (const ag::Var& d_neg : d_negs) {
    ag::Var term = ag::relu(ag::add_scalar(ag::sub(d_pos, d_neg), margin));
    total = total ? ag::add(total, term) : term;
  }
  if (!total) total = ag::constant(ag::Tensor::scalar(0.0));
  return total;
}

/// Triplet loss straight from descriptor nodes, using squared Euclidean
/// distances (the same metric the miner's margin filter applies, so a mined
/// hard negative is precisely a nonzero-loss negative at mining time).
inline ag::Var triplet_loss_from_descriptors(const ag::Var& query, const ag::Var& positive,
                                             const std::vector<ag::Var>& negatives,
                                             double margin) {
  const ag::Var d_pos = ag::squared_distance(query, positive);
  std::vector<ag::Var> d_negs;
  d_negs.reserve(negatives.size());
  for (const ag::Var& n : negatives) d_negs.push_back(ag::squared_distance(query, n));
  return triplet_loss(d_pos, d_negs, margin);
}

}  // namespace evpr::train
