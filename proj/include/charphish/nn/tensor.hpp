#pragma once

#include <cassert>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

namespace charphish::nn {

// Row-major (time x channels) activation buffer.
template <typename T>
struct Seq {
  int steps = 0;
  int channels = 0;
  std::vector<T> v;

  Seq() = default;
  Seq(int s, int c) : steps(s), channels(c), v(static_cast<size_t>(s) * c, T(0)) {}

  T* row(int t) { return v.data() + static_cast<size_t>(t) * channels; }
  const T* row(int t) const { return v.data() + static_cast<size_t>(t) * channels; }
  T& at(int t, int c) { return v[static_cast<size_t>(t) * channels + c]; }
  T at(int t, int c) const { return v[static_cast<size_t>(t) * channels + c]; }
  size_t size() const { return v.size(); }
  void zero() { std::fill(v.begin(), v.end(), T(0)); }
};

// Named trainable tensor with a gradient buffer of the same shape.
template <typename T>
struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;

  Param() = default;
  Param(std::string n, std::vector<int> s) : name(std::move(n)), shape(std::move(s)) {
    size_t total = 1;
    for (int d : shape) total *= static_cast<size_t>(d);
    value.assign(total, T(0));
    grad.assign(total, T(0));
  }

  size_t count() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }

  // 2-D accessors (rows = shape[0], cols = shape[1]).
  T* row(int r) { return value.data() + static_cast<size_t>(r) * shape[1]; }
  const T* row(int r) const { return value.data() + static_cast<size_t>(r) * shape[1]; }
  T* grad_row(int r) { return grad.data() + static_cast<size_t>(r) * shape[1]; }
};

}  // namespace charphish::nn
