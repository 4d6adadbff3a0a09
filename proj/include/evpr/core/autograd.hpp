#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "evpr/core/tensor.hpp"
#include "evpr/errors.hpp"

// Reverse-mode automatic differentiation over dense double tensors.
//
// Every op builds a Node holding the forward value and a pull-style backprop
// closure. backward(root) zero-initializes the gradients of the reachable
// subgraph, seeds the (scalar) root with 1 and replays the closures in
// reverse topological order. Parameter nodes outlive the per-step graphs that
// reference them; their gradients are valid until the next backward() call.
//
// Everything is sequential and allocation order is fixed, so repeated runs on
// equal inputs are bit-identical.

namespace evpr::ag {

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<Var> inputs;
  std::function<void(Node&)> backprop;
  const char* op = "leaf";
};

inline Var make_node(Tensor value, std::vector<Var> inputs, const char* op,
                     std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->inputs = std::move(inputs);
  n->op = op;
  n->backprop = std::move(backprop);
  for (const auto& in : n->inputs) {
    if (in->requires_grad) {
      n->requires_grad = true;
      break;
    }
  }
  return n;
}

inline Var constant(Tensor v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  return n;
}

inline Var parameter(Tensor v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = true;
  n->op = "param";
  return n;
}

inline void backward(const Var& root) {
  if (root->value.size() != 1)
    throw ShapeError("backward() requires a scalar root, got " + shape_str(root->value.shape()));

  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next].get();
      ++next;
      if (visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) n->grad = Tensor(n->value.shape());
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->requires_grad && n->backprop) n->backprop(*n);
  }
}

// ---------------------------------------------------------------------------
// Elementwise and reduction ops
// ---------------------------------------------------------------------------

inline Var add(const Var& a, const Var& b) {
  if (!a->value.same_shape(b->value)) throw ShapeError("add: shape mismatch");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
  return make_node(std::move(out), {a, b}, "add", [](Node& n) {
    for (int k = 0; k < 2; ++k) {
      Node* in = n.inputs[static_cast<std::size_t>(k)].get();
      if (!in->requires_grad) continue;
      for (std::size_t i = 0; i < n.grad.size(); ++i) in->grad[i] += n.grad[i];
    }
  });
}

inline Var sub(const Var& a, const Var& b) {
  if (!a->value.same_shape(b->value)) throw ShapeError("sub: shape mismatch");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b->value[i];
  return make_node(std::move(out), {a, b}, "sub", [](Node& n) {
    Node* a = n.inputs[0].get();
    Node* b = n.inputs[1].get();
    if (a->requires_grad)
      for (std::size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i];
    if (b->requires_grad)
      for (std::size_t i = 0; i < n.grad.size(); ++i) b->grad[i] -= n.grad[i];
  });
}

inline Var mul(const Var& a, const Var& b) {
  if (!a->value.same_shape(b->value)) throw ShapeError("mul: shape mismatch");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
  return make_node(std::move(out), {a, b}, "mul", [](Node& n) {
    Node* a = n.inputs[0].get();
    Node* b = n.inputs[1].get();
    if (a->requires_grad)
      for (std::size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i] * b->value[i];
    if (b->requires_grad)
      for (std::size_t i = 0; i < n.grad.size(); ++i) b->grad[i] += n.grad[i] * a->value[i];
  });
}

inline Var scale(const Var& a, double c) {
  Tensor out = a->value;
  for (auto& x : out.vec()) x *= c;
  return make_node(std::move(out), {a}, "scale", [c](Node& n) {
    Node* a = n.inputs[0].get();
    if (!a->requires_grad) return;
    for (std::size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += c * n.grad[i];
  });
}

inline Var add_scalar(const Var& a, double c) {
  Tensor out = a->value;
  for (auto& x : out.vec()) x += c;
  return make_node(std::move(out), {a}, "add_scalar", [](Node& n) {
    Node* a = n.inputs[0].get();
    if (!a->requires_grad) return;
    for (std::size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i];
  });
}

inline Var sum_all(const Var& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a->value.size(); ++i) s += a->value[i];
  return make_node(Tensor::scalar(s), {a}, "sum", [](Node& n) {
    Node* a = n.inputs[0].get();
    if (!a->requires_grad) return;
    const double g = n.grad[0];
    for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g;
  });
}

inline Var relu(const Var& a) {
  Tensor out = a->value;
  // NaN propagates (x != x) so poisoned values surface in the loss instead
  // of being flushed to zero.
  for (auto& x : out.vec()) x = (x > 0.0 || x != x) ? x : 0.0;
  return make_node(std::move(out), {a}, "relu", [](Node& n) {
    Node* a = n.inputs[0].get();
    if (!a->requires_grad) return;
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      if (a->value[i] > 0.0) a->grad[i] += n.grad[i];
  });
}

inline Var tanh_act(const Var& a) {
  Tensor out = a->value;
  for (auto& x : out.vec()) x = std::tanh(x);
  return make_node(std::move(out), {a}, "tanh", [](Node& n) {
    Node* a = n.inputs[0].get();
    if (!a->requires_grad) return;
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      a->grad[i] += n.grad[i] * (1.0 - n.value[i] * n.value[i]);
  });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

/// C[m,n] = A[m,k] * B[k,n]
inline Var matmul(const Var& a, const Var& b) {
  if (a->value.rank() != 2 || b->value.rank() != 2 || a->value.dim(1) != b->value.dim(0))
    throw ShapeError("matmul: incompatible shapes");
  const int m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(1);
  Tensor out{Shape{m, n}};
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const double av = a->value.at(i, p);
      for (int j = 0; j < n; ++j) out.at(i, j) += av * b->value.at(p, j);
    }
  return make_node(std::move(out), {a, b}, "matmul", [m, k, n](Node& node) {
    Node* a = node.inputs[0].get();
    Node* b = node.inputs[1].get();
    if (a->requires_grad) {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          const double g = node.grad.at(i, j);
          for (int p = 0; p < k; ++p) a->grad.at(i, p) += g * b->value.at(p, j);
        }
    }
    if (b->requires_grad) {
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          const double av = a->value.at(i, p);
          for (int j = 0; j < n; ++j) b->grad.at(p, j) += av * node.grad.at(i, j);
        }
    }
  });
}

/// L[i,k] = sum_d X[i,d] * W[k,d] + b[k]  (row-wise affine map)
inline Var linear_rows(const Var& x, const Var& w, const Var& b) {
  if (x->value.rank() != 2 || w->value.rank() != 2 || x->value.dim(1) != w->value.dim(1))
    throw ShapeError("linear_rows: incompatible shapes");
  const int m = x->value.dim(0), d = x->value.dim(1), k = w->value.dim(0);
  if (b->value.rank() != 1 || b->value.dim(0) != k) throw ShapeError("linear_rows: bad bias");
  Tensor out{Shape{m, k}};
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < k; ++j) {
      double acc = b->value[static_cast<std::size_t>(j)];
      for (int p = 0; p < d; ++p) acc += x->value.at(i, p) * w->value.at(j, p);
      out.at(i, j) = acc;
    }
  return make_node(std::move(out), {x, w, b}, "linear_rows", [m, d, k](Node& node) {
    Node* x = node.inputs[0].get();
    Node* w = node.inputs[1].get();
    Node* b = node.inputs[2].get();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < k; ++j) {
        const double g = node.grad.at(i, j);
        if (g == 0.0) continue;
        if (x->requires_grad)
          for (int p = 0; p < d; ++p) x->grad.at(i, p) += g * w->value.at(j, p);
        if (w->requires_grad)
          for (int p = 0; p < d; ++p) w->grad.at(j, p) += g * x->value.at(i, p);
        if (b->requires_grad) b->grad[static_cast<std::size_t>(j)] += g;
      }
  });
}

// ---------------------------------------------------------------------------
// Softmax and normalization
// ---------------------------------------------------------------------------

/// Row-wise softmax of an M x K matrix, computed with max subtraction.
inline Var softmax_rows(const Var& x) {
  if (x->value.rank() != 2) throw ShapeError("softmax_rows: expected matrix");
  const int m = x->value.dim(0), k = x->value.dim(1);
  Tensor out{Shape{m, k}};
  for (int i = 0; i < m; ++i) {
    double mx = x->value.at(i, 0);
    for (int j = 1; j < k; ++j) mx = std::max(mx, x->value.at(i, j));
    double denom = 0.0;
    for (int j = 0; j < k; ++j) {
      const double e = std::exp(x->value.at(i, j) - mx);
      out.at(i, j) = e;
      denom += e;
    }
    for (int j = 0; j < k; ++j) out.at(i, j) /= denom;
  }
  return make_node(std::move(out), {x}, "softmax_rows", [m, k](Node& node) {
    Node* x = node.inputs[0].get();
    if (!x->requires_grad) return;
    for (int i = 0; i < m; ++i) {
      double gy = 0.0;
      for (int j = 0; j < k; ++j) gy += node.grad.at(i, j) * node.value.at(i, j);
      for (int j = 0; j < k; ++j)
        x->grad.at(i, j) += node.value.at(i, j) * (node.grad.at(i, j) - gy);
    }
  });
}

/// Normalizes each row of a K x D matrix to unit L2 norm. Rows with
/// norm <= eps pass through unchanged (and backprop as identity there).
inline Var normalize_rows(const Var& v, double eps) {
  if (v->value.rank() != 2) throw ShapeError("normalize_rows: expected matrix");
  const int k = v->value.dim(0), d = v->value.dim(1);
  Tensor out{Shape{k, d}};
  std::vector<double> norms(static_cast<std::size_t>(k), 0.0);
  for (int j = 0; j < k; ++j) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) s += v->value.at(j, i) * v->value.at(j, i);
    norms[static_cast<std::size_t>(j)] = std::sqrt(s);
  }
  for (int j = 0; j < k; ++j) {
    const double nrm = norms[static_cast<std::size_t>(j)];
    if (nrm <= eps) {
      for (int i = 0; i < d; ++i) out.at(j, i) = v->value.at(j, i);
    } else {
      for (int i = 0; i < d; ++i) out.at(j, i) = v->value.at(j, i) / nrm;
    }
  }
  return make_node(std::move(out), {v}, "normalize_rows", [d, k, eps, norms](Node& node) {
    Node* v = node.inputs[0].get();
    if (!v->requires_grad) return;
    for (int j = 0; j < k; ++j) {
      const double nrm = norms[static_cast<std::size_t>(j)];
      if (nrm <= eps) {
        for (int i = 0; i < d; ++i) v->grad.at(j, i) += node.grad.at(j, i);
      } else {
        double gy = 0.0;
        for (int i = 0; i < d; ++i) gy += node.grad.at(j, i) * node.value.at(j, i);
        for (int i = 0; i < d; ++i)
          v->grad.at(j, i) += (node.grad.at(j, i) - node.value.at(j, i) * gy) / nrm;
      }
    }
  });
}

/// Normalizes a vector to unit L2 norm with the same eps guard as above.
inline Var normalize_vector(const Var& v, double eps) {
  double s = 0.0;
  for (std::size_t i = 0; i < v->value.size(); ++i) s += v->value[i] * v->value[i];
  const double nrm = std::sqrt(s);
  Tensor out = v->value;
  if (nrm > eps)
    for (auto& x : out.vec()) x /= nrm;
  return make_node(std::move(out), {v}, "normalize_vector", [nrm, eps](Node& node) {
    Node* v = node.inputs[0].get();
    if (!v->requires_grad) return;
    if (nrm <= eps) {
      for (std::size_t i = 0; i < node.grad.size(); ++i) v->grad[i] += node.grad[i];
      return;
    }
    double gy = 0.0;
    for (std::size_t i = 0; i < node.grad.size(); ++i) gy += node.grad[i] * node.value[i];
    for (std::size_t i = 0; i < node.grad.size(); ++i)
      v->grad[i] += (node.grad[i] - node.value[i] * gy) / nrm;
  });
}

// ---------------------------------------------------------------------------
// Convolutional network ops (single sample, channel-major layout)
// ---------------------------------------------------------------------------

/// 2-D convolution: x[Ci,H,W] * w[Co,Ci,kh,kw] + b[Co] -> y[Co,Ho,Wo].
inline Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  if (x->value.rank() != 3 || w->value.rank() != 4) throw ShapeError("conv2d: bad ranks");
  const int ci = x->value.dim(0), h = x->value.dim(1), wd = x->value.dim(2);
  const int co = w->value.dim(0), kh = w->value.dim(2), kw = w->value.dim(3);
  if (w->value.dim(1) != ci)
    throw ShapeError("conv2d: input has " + std::to_string(ci) + " channels, kernel expects " +
                     std::to_string(w->value.dim(1)));
  const int ho = (h + 2 * pad - kh) / stride + 1;
  const int wo = (wd + 2 * pad - kw) / stride + 1;
  if (ho <= 0 || wo <= 0) throw ShapeError("conv2d: output would be empty");
  Tensor out{Shape{co, ho, wo}};
  for (int oc = 0; oc < co; ++oc) {
    const double bias = b->value[static_cast<std::size_t>(oc)];
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        double acc = bias;
        const int iy0 = oy * stride - pad;
        const int ix0 = ox * stride - pad;
        for (int ic = 0; ic < ci; ++ic) {
          for (int ky = 0; ky < kh; ++ky) {
            const int iy = iy0 + ky;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < kw; ++kx) {
              const int ix = ix0 + kx;
              if (ix < 0 || ix >= wd) continue;
              acc += x->value.at(ic, iy, ix) * w->value.at(oc, ic, ky, kx);
            }
          }
        }
        out.at(oc, oy, ox) = acc;
      }
    }
  }
  return make_node(std::move(out), {x, w, b}, "conv2d",
                   [ci, h, wd, co, kh, kw, stride, pad](Node& node) {
    Node* x = node.inputs[0].get();
    Node* w = node.inputs[1].get();
    Node* b = node.inputs[2].get();
    const int ho = node.value.dim(1), wo = node.value.dim(2);
    for (int oc = 0; oc < co; ++oc) {
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          const double g = node.grad.at(oc, oy, ox);
          if (g == 0.0) continue;
          if (b->requires_grad) b->grad[static_cast<std::size_t>(oc)] += g;
          const int iy0 = oy * stride - pad;
          const int ix0 = ox * stride - pad;
          for (int ic = 0; ic < ci; ++ic) {
            for (int ky = 0; ky < kh; ++ky) {
              const int iy = iy0 + ky;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < kw; ++kx) {
                const int ix = ix0 + kx;
                if (ix < 0 || ix >= wd) continue;
                if (w->requires_grad) w->grad.at(oc, ic, ky, kx) += g * x->value.at(ic, iy, ix);
                if (x->requires_grad) x->grad.at(ic, iy, ix) += g * w->value.at(oc, ic, ky, kx);
              }
            }
          }
        }
      }
    }
  });
}

/// Max pooling, kernel k x k, given stride, zero implicit padding is NOT
/// applied (window must fit). Ties resolve to the first element scanned.
inline Var maxpool2d(const Var& x, int k, int stride) {
  if (x->value.rank() != 3) throw ShapeError("maxpool2d: expected (C,H,W)");
  const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
  const int ho = (h - k) / stride + 1;
  const int wo = (w - k) / stride + 1;
  if (ho <= 0 || wo <= 0) throw ShapeError("maxpool2d: output would be empty");
  Tensor out{Shape{c, ho, wo}};
  auto argmax = std::make_shared<std::vector<int>>(static_cast<std::size_t>(c) * ho * wo);
  std::size_t oi = 0;
  for (int ch = 0; ch < c; ++ch)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox, ++oi) {
        double best = -std::numeric_limits<double>::infinity();
        int besti = 0;
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) {
            const int iy = oy * stride + ky, ix = ox * stride + kx;
            const double v = x->value.at(ch, iy, ix);
            if (v > best) {
              best = v;
              besti = (ch * h + iy) * w + ix;
            }
          }
        out.at(ch, oy, ox) = best;
        (*argmax)[oi] = besti;
      }
  return make_node(std::move(out), {x}, "maxpool2d", [argmax](Node& node) {
    Node* x = node.inputs[0].get();
    if (!x->requires_grad) return;
    for (std::size_t i = 0; i < node.grad.size(); ++i)
      x->grad[static_cast<std::size_t>((*argmax)[i])] += node.grad[i];
  });
}

/// Per-sample, per-channel standardization over the spatial extent with a
/// learnable affine (gamma, beta). No running statistics: normalization only
/// ever sees the sample itself, so evaluation is a pure function and batched
/// descriptors match individually computed ones exactly.
inline Var channel_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  if (x->value.rank() != 3) throw ShapeError("channel_norm: expected (C,H,W)");
  const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
  const int hw = h * w;
  Tensor out{Shape{c, h, w}};
  std::vector<double> means(static_cast<std::size_t>(c)), istds(static_cast<std::size_t>(c));
  for (int ch = 0; ch < c; ++ch) {
    double mean = 0.0;
    for (int i = 0; i < hw; ++i) mean += x->value[static_cast<std::size_t>(ch * hw + i)];
    mean /= hw;
    double var = 0.0;
    for (int i = 0; i < hw; ++i) {
      const double d = x->value[static_cast<std::size_t>(ch * hw + i)] - mean;
      var += d * d;
    }
    var /= hw;
    const double istd = 1.0 / std::sqrt(var + eps);
    means[static_cast<std::size_t>(ch)] = mean;
    istds[static_cast<std::size_t>(ch)] = istd;
    const double g = gamma->value[static_cast<std::size_t>(ch)];
    const double bta = beta->value[static_cast<std::size_t>(ch)];
    for (int i = 0; i < hw; ++i) {
      const std::size_t idx = static_cast<std::size_t>(ch * hw + i);
      out[idx] = (x->value[idx] - mean) * istd * g + bta;
    }
  }
  return make_node(std::move(out), {x, gamma, beta}, "channel_norm",
                   [c, hw, means, istds](Node& node) {
    Node* x = node.inputs[0].get();
    Node* gamma = node.inputs[1].get();
    Node* beta = node.inputs[2].get();
    for (int ch = 0; ch < c; ++ch) {
      const double mean = means[static_cast<std::size_t>(ch)];
      const double istd = istds[static_cast<std::size_t>(ch)];
      const double g = gamma->value[static_cast<std::size_t>(ch)];
      // xhat = (x - mean) * istd ; y = g * xhat + beta
      double sum_gy = 0.0, sum_gy_xhat = 0.0;
      for (int i = 0; i < hw; ++i) {
        const std::size_t idx = static_cast<std::size_t>(ch * hw + i);
        const double gy = node.grad[idx];
        const double xhat = (x->value[idx] - mean) * istd;
        sum_gy += gy;
        sum_gy_xhat += gy * xhat;
      }
      if (gamma->requires_grad) gamma->grad[static_cast<std::size_t>(ch)] += sum_gy_xhat;
      if (beta->requires_grad) beta->grad[static_cast<std::size_t>(ch)] += sum_gy;
      if (x->requires_grad) {
        const double inv_n = 1.0 / hw;
        for (int i = 0; i < hw; ++i) {
          const std::size_t idx = static_cast<std::size_t>(ch * hw + i);
          const double gy = node.grad[idx];
          const double xhat = (x->value[idx] - mean) * istd;
          x->grad[idx] += g * istd * (gy - inv_n * sum_gy - xhat * inv_n * sum_gy_xhat);
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Descriptor aggregation ops
// ---------------------------------------------------------------------------

/// Reinterprets a (D,h,w) feature map as h*w row descriptors of dim D:
/// X[i,d] = F[d, i / w, i % w].
inline Var feature_map_rows(const Var& f) {
  if (f->value.rank() != 3) throw ShapeError("feature_map_rows: expected (D,h,w)");
  const int d = f->value.dim(0), h = f->value.dim(1), w = f->value.dim(2);
  const int m = h * w;
  Tensor out{Shape{m, d}};
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < d; ++p) out.at(i, p) = f->value[static_cast<std::size_t>(p * m + i)];
  return make_node(std::move(out), {f}, "feature_map_rows", [d, m](Node& node) {
    Node* f = node.inputs[0].get();
    if (!f->requires_grad) return;
    for (int i = 0; i < m; ++i)
      for (int p = 0; p < d; ++p)
        f->grad[static_cast<std::size_t>(p * m + i)] += node.grad.at(i, p);
  });
}

/// Soft-assignment-weighted residual accumulation, one row per cluster:
///   V[k,d] = sum_i A[i,k] * (X[i,d] - C[k,d])
inline Var vlad_accumulate(const Var& assign, const Var& x, const Var& clusters) {
  const int m = x->value.dim(0), d = x->value.dim(1);
  const int k = clusters->value.dim(0);
  if (assign->value.rank() != 2 || assign->value.dim(0) != m || assign->value.dim(1) != k ||
      clusters->value.dim(1) != d)
    throw ShapeError("vlad_accumulate: incompatible shapes");
  Tensor out{Shape{k, d}};
  std::vector<double> colsum(static_cast<std::size_t>(k), 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < k; ++j) colsum[static_cast<std::size_t>(j)] += assign->value.at(i, j);
  for (int j = 0; j < k; ++j) {
    for (int p = 0; p < d; ++p) {
      double acc = 0.0;
      for (int i = 0; i < m; ++i) acc += assign->value.at(i, j) * x->value.at(i, p);
      out.at(j, p) = acc - clusters->value.at(j, p) * colsum[static_cast<std::size_t>(j)];
    }
  }
  return make_node(std::move(out), {assign, x, clusters}, "vlad_accumulate",
                   [m, d, k, colsum](Node& node) {
    Node* assign = node.inputs[0].get();
    Node* x = node.inputs[1].get();
    Node* clusters = node.inputs[2].get();
    if (assign->requires_grad) {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < k; ++j) {
          double acc = 0.0;
          for (int p = 0; p < d; ++p)
            acc += node.grad.at(j, p) * (x->value.at(i, p) - clusters->value.at(j, p));
          assign->grad.at(i, j) += acc;
        }
    }
    if (x->requires_grad) {
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < d; ++p) {
          double acc = 0.0;
          for (int j = 0; j < k; ++j) acc += node.grad.at(j, p) * assign->value.at(i, j);
          x->grad.at(i, p) += acc;
        }
    }
    if (clusters->requires_grad) {
      for (int j = 0; j < k; ++j)
        for (int p = 0; p < d; ++p)
          clusters->grad.at(j, p) -= node.grad.at(j, p) * colsum[static_cast<std::size_t>(j)];
    }
  });
}

/// Flattens to rank-1 (shares no storage; plain copy).
inline Var flatten(const Var& a) {
  Tensor out{Shape{static_cast<int>(a->value.size())}, a->value.vec()};
  return make_node(std::move(out), {a}, "flatten", [](Node& node) {
    Node* a = node.inputs[0].get();
    if (!a->requires_grad) return;
    for (std::size_t i = 0; i < node.grad.size(); ++i) a->grad[i] += node.grad[i];
  });
}

/// Squared Euclidean distance between two equal-shaped tensors, as a scalar node.
inline Var squared_distance(const Var& a, const Var& b) {
  const Var diff = sub(a, b);
  return sum_all(mul(diff, diff));
}

}  // namespace evpr::ag
