#pragma once

#include <algorithm>
#include <array>
#include <cmath>

namespace charphish::nn {

// Epsilon inside the log of the cross-entropy loss.
inline constexpr double kLogEps = 1e-12;

template <typename T>
inline T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
inline T relu(T x) {
  return x > T(0) ? x : T(0);
}

// y = x if x > theta else 0.
template <typename T>
inline T thresholded_relu(T x, T theta) {
  return x > theta ? x : T(0);
}

// Stable 2-class softmax (max subtraction).
template <typename T>
inline std::array<T, 2> softmax2(const std::array<T, 2>& z) {
  const T m = std::max(z[0], z[1]);
  const T e0 = std::exp(z[0] - m);
  const T e1 = std::exp(z[1] - m);
  const T s = e0 + e1;
  return {e0 / s, e1 / s};
}

// -sum_i onehot_i * log(p_i + eps)
template <typename T>
inline T cross_entropy2(const std::array<T, 2>& p, const std::array<T, 2>& onehot) {
  T loss = T(0);
  for (int i = 0; i < 2; ++i) {
    if (onehot[i] != T(0)) loss -= onehot[i] * std::log(p[i] + T(kLogEps));
  }
  return loss;
}

// Gradient of cross_entropy2(softmax2(z), onehot) w.r.t. logits z.
template <typename T>
inline std::array<T, 2> softmax_xent_grad(const std::array<T, 2>& probs,
                                          const std::array<T, 2>& onehot) {
  return {probs[0] - onehot[0], probs[1] - onehot[1]};
}

}  // namespace charphish::nn
