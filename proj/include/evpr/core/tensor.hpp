#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "evpr/errors.hpp"

namespace evpr::ag {

using Shape = std::vector<int>;

inline std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

/// Dense row-major tensor of doubles with dynamic rank (rank 0 == scalar).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {}
  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_))
      throw ShapeError("tensor data size does not match shape " + shape_str(shape_));
  }

  static Tensor scalar(double v) {
    Tensor t{Shape{}};
    t.data_ = {v};
    return t;
  }
  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, double v) {
    Tensor t(std::move(s));
    for (auto& x : t.data_) x = v;
    return t;
  }

  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(int i, int j) { return data_[static_cast<std::size_t>(i) * sd(1) + j]; }
  double at(int i, int j) const { return data_[static_cast<std::size_t>(i) * sd(1) + j]; }
  double& at(int i, int j, int k) {
    return data_[(static_cast<std::size_t>(i) * sd(1) + j) * sd(2) + k];
  }
  double at(int i, int j, int k) const {
    return data_[(static_cast<std::size_t>(i) * sd(1) + j) * sd(2) + k];
  }
  double& at(int i, int j, int k, int l) {
    return data_[((static_cast<std::size_t>(i) * sd(1) + j) * sd(2) + k) * sd(3) + l];
  }
  double at(int i, int j, int k, int l) const {
    return data_[((static_cast<std::size_t>(i) * sd(1) + j) * sd(2) + k) * sd(3) + l];
  }

  void fill(double v) {
    for (auto& x : data_) x = v;
  }

  double l2_norm() const {
    double s = 0.0;
    for (double x : data_) s += x * x;
    return std::sqrt(s);
  }

  bool all_finite() const {
    for (double x : data_) {
      if (!std::isfinite(x)) return false;
    }
    return true;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

 private:
  std::size_t sd(int i) const { return static_cast<std::size_t>(shape_[static_cast<std::size_t>(i)]); }

  Shape shape_;
  std::vector<double> data_;
};

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_l2_distance(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace evpr::ag
