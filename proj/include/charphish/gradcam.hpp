#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "charphish/models.hpp"
#include "charphish/nn/tensor.hpp"

namespace charphish {

// Character-level relevance computed from the gradient of one output logit
// w.r.t. a late feature map, pooled into per-channel weights and projected
// back onto input positions.
struct Heatmap {
  std::vector<float> char_scores;  // one per kept input character, in [0,1]
  int target_class = 0;
  std::array<float, 2> probs{};
};

// Channel-weighted relevance at feature-map resolution:
//   alpha_k = (1/T') sum_t dlogit/dA[t,k]
//   L[t]    = relu(sum_k alpha_k * A[t,k])
// Summation order is fixed (t ascending, then k ascending) so independent
// reimplementations agree bit for bit.
template <typename T>
std::vector<T> channel_relevance(const nn::Seq<T>& acts, const nn::Seq<T>& grads) {
  if (acts.steps != grads.steps || acts.channels != grads.channels) {
    throw std::invalid_argument("relevance: activation/gradient shape mismatch");
  }
  const int t_len = acts.steps;
  const int k_len = acts.channels;
  std::vector<T> alpha(k_len, T(0));
  for (int k = 0; k < k_len; ++k) {
    T acc = T(0);
    for (int t = 0; t < t_len; ++t) acc += grads.at(t, k);
    alpha[k] = acc / T(t_len);
  }
  std::vector<T> rel(t_len);
  for (int t = 0; t < t_len; ++t) {
    T s = T(0);
    for (int k = 0; k < k_len; ++k) s += alpha[k] * acts.at(t, k);
    rel[t] = s > T(0) ? s : T(0);
  }
  return rel;
}

// Projects feature-map relevance back to input resolution by walking the
// temporal stages in reverse: a pool of window w repeats each value w times,
// a kernel of width k re-centers values onto the characters under the
// receptive-field midpoint.
std::vector<float> expand_relevance(const std::vector<float>& rel,
                                    const std::vector<nn::TemporalStage>& trace, int t_max);

// Divides by the max score; an all-zero map stays all zero.
std::vector<float> normalize_scores(std::vector<float> v);

// End-to-end heatmap for one encoded email. target_class -1 uses the
// predicted class. The model's parameter grads are left zeroed.
Heatmap explain(Model<float>& model, const EncodedEmail& email, int target_class = -1);

/// Self-contained HTML page: every character in a span whose red background
// alpha equals its score (>= 4 decimal places), text HTML-escaped, newlines
// kept as line breaks.
std::string render_html(std::string_view text, const std::vector<float>& scores,
                        std::string_view title);

}  // namespace charphish
