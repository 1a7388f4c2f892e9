#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace reguide {

// Dense row-major tensor of doubles. Rank is the length of `shape`; most of
// the codebase uses rank-2 [rows, cols], with [n] treated as a column.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(numel_of(shape), 0.0) {}

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, double v) {
    Tensor t(std::move(s));
    for (auto& x : t.data) x = v;
    return t;
  }
  static Tensor from(std::vector<int> s, std::vector<double> vals) {
    Tensor t;
    t.shape = std::move(s);
    if (vals.size() != static_cast<size_t>(numel_of(t.shape)))
      throw std::invalid_argument("Tensor::from: value count does not match shape");
    t.data = std::move(vals);
    return t;
  }
  static Tensor scalar(double v) { return from({1}, {v}); }

  static int64_t numel_of(const std::vector<int>& s) {
    if (s.empty()) return 0;
    int64_t n = 1;
    for (int d : s) {
      if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rows() const { return shape.empty() ? 0 : shape[0]; }
  int cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& at(int i) { return data[static_cast<size_t>(i)]; }
  double at(int i) const { return data[static_cast<size_t>(i)]; }
  double& at(int i, int j) { return data[static_cast<size_t>(i) * cols() + j]; }
  double at(int i, int j) const { return data[static_cast<size_t>(i) * cols() + j]; }
  double& operator()(int i, int j) { return at(i, j); }
  double operator()(int i, int j) const { return at(i, j); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }
};

inline double l2_norm(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data) s += v * v;
  return std::sqrt(s);
}

}  // namespace reguide
