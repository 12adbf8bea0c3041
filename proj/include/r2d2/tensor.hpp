#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace r2d2 {

/// Dense NCHW tensor. The scalar type is a template parameter so the same
/// network code runs in float for training and in double for gradient checks.
template <typename T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, T fill = T(0))
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

  static Tensor scalar(T v) { return Tensor(1, 1, 1, 1, v); }
  /// Value of a single-element tensor.
  T item() const { return data.at(0); }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
  bool operator==(const Tensor&) const = default;

  T& at(int i, int ch, int y, int x) {
    return data[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x];
  }
  T at(int i, int ch, int y, int x) const {
    return data[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x];
  }
  T* ptr(int i, int ch = 0) {
    return data.data() + (static_cast<std::size_t>(i) * c + ch) * plane();
  }
  const T* ptr(int i, int ch = 0) const {
    return data.data() + (static_cast<std::size_t>(i) * c + ch) * plane();
  }

  std::string shape_str() const {
    return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + "]";
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(n, c, h, w);
    std::transform(data.begin(), data.end(), out.data.begin(),
                   [](T v) { return static_cast<U>(v); });
    return out;
  }

  bool all_finite() const {
    return std::all_of(data.begin(), data.end(), [](T v) { return std::isfinite(v); });
  }
};

}  // namespace r2d2
