#ifndef L2O_TENSOR_HPP
#define L2O_TENSOR_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "l2o/errors.hpp"
#include "l2o/rng.hpp"

namespace l2o {

// Dense row-major tensor of 64-bit reals. Rank 0 (empty shape) is a scalar
// with exactly one element.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), 0.0);
  }
  Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != numel_of(shape))
      throw dim_error("tensor: data length " + std::to_string(data.size()) +
                      " does not match shape " + shape_str(shape));
  }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) {
      if (d < 0) throw dim_error("tensor: negative dimension in shape " + shape_str(s));
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

  static Tensor scalar(double v) {
    Tensor t;
    t.data.assign(1, v);
    return t;
  }

  static Tensor full(std::vector<int> s, double v) {
    Tensor t(std::move(s));
    for (auto& x : t.data) x = v;
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int rows() const { return shape.empty() ? 1 : shape[0]; }
  int cols() const { return rank() >= 2 ? shape[1] : 1; }
  bool empty() const { return data.empty(); }

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }
  double& operator[](size_t i) { return data[i]; }
  double operator[](size_t i) const { return data[i]; }

  bool is_scalar() const { return shape.empty() && data.size() == 1; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  static std::string shape_str(const std::vector<int>& s) {
    if (s.empty()) return "[]";
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
      if (i) out += "x";
      out += std::to_string(s[i]);
    }
    return out + "]";
  }
  std::string shape_str() const { return shape_str(shape); }
};

inline bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

inline Tensor random_uniform(std::vector<int> shape, double lo, double hi, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

inline Tensor random_normal(std::vector<int> shape, double mean, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = rng.normal(mean, stddev);
  return t;
}

inline double l2_norm(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data) s += v * v;
  return std::sqrt(s);
}

}  // namespace l2o

#endif  // L2O_TENSOR_HPP
