#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "charphish/encoder.hpp"
#include "charphish/gradcam.hpp"
#include "charphish/models.hpp"
#include "charphish/rng.hpp"

using namespace charphish;
using namespace charphish::nn;

namespace {

// Written from the definition, independently of the library code: per-channel
// mean gradient, then a relu'd weighted channel sum at every step. Summation
// runs t-ascending for the means and k-ascending for the combination, which
// is the documented order, so results must agree bit for bit.
std::vector<float> relevance_oracle(const Seq<float>& acts, const Seq<float>& grads) {
  std::vector<float> alpha(acts.channels);
  for (int k = 0; k < acts.channels; ++k) {
    float sum = 0.0f;
    for (int t = 0; t < acts.steps; ++t) sum += grads.at(t, k);
    alpha[k] = sum / static_cast<float>(acts.steps);
  }
  std::vector<float> rel(acts.steps);
  for (int t = 0; t < acts.steps; ++t) {
    float s = 0.0f;
    for (int k = 0; k < acts.channels; ++k) s += alpha[k] * acts.at(t, k);
    rel[t] = std::max(s, 0.0f);
  }
  return rel;
}

Seq<float> random_map(Rng& rng, int steps, int channels) {
  Seq<float> s(steps, channels);
  for (auto& v : s.v) v = static_cast<float>(rng.uniform(-2.0, 2.0));
  return s;
}

NetworkSpec tiny_cnn() {
  NetworkSpec s;
  s.kind = "charcnn";
  s.t_max = 16;
  s.embed_dim = 6;
  s.kernels = {3, 3};
  s.pools = {2, 0};
  s.filters = 4;
  s.use_se = true;
  s.se_ratio = 2;
  s.dropout = 0.3;
  s.optimizer = "nadam";
  return s;
}

NetworkSpec tiny_gru() {
  NetworkSpec s;
  s.kind = "chargru";
  s.t_max = 12;
  s.embed_dim = 5;
  s.hidden = 4;
  s.optimizer = "adam";
  return s;
}

int count_substr(const std::string& hay, const std::string& needle) {
  int n = 0;
  for (size_t pos = hay.find(needle); pos != std::string::npos;
       pos = hay.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

}  // namespace

// ---------------------------------------------------------------------------
// Channel relevance
// ---------------------------------------------------------------------------

TEST_CASE("channel relevance matches the double-loop reference on 100 random maps") {
  Rng rng(1234);
  for (int trial = 0; trial < 100; ++trial) {
    const int steps = 1 + static_cast<int>(rng.below(32));
    const int channels = 1 + static_cast<int>(rng.below(8));
    const Seq<float> acts = random_map(rng, steps, channels);
    const Seq<float> grads = random_map(rng, steps, channels);
    const auto got = channel_relevance(acts, grads);
    const auto want = relevance_oracle(acts, grads);
    REQUIRE(got.size() == want.size());
    for (size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i] == want[i]);   // exact, not approximate
      CHECK(got[i] >= 0.0f);
    }
  }
}

TEST_CASE("zero gradients produce an all-zero relevance map") {
  Rng rng(5);
  const Seq<float> acts = random_map(rng, 10, 4);
  Seq<float> grads(10, 4);  // zeros
  for (float r : channel_relevance(acts, grads)) CHECK(r == 0.0f);
}

TEST_CASE("channel relevance rejects mismatched shapes") {
  Seq<float> a(4, 3), g(4, 2);
  CHECK_THROWS_AS(channel_relevance(a, g), std::invalid_argument);
  Seq<float> g2(5, 3);
  CHECK_THROWS_AS(channel_relevance(a, g2), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Relevance expansion through the temporal stages
// ---------------------------------------------------------------------------

TEST_CASE("pool stages repeat each coarse value over its window") {
  const std::vector<TemporalStage> trace = {{TemporalStage::kPool, 2}};
  // 5 steps pool down to 2; the orphaned last step inherits the final value
  const auto fine = expand_relevance({0.3f, 0.9f}, trace, 5);
  CHECK(fine == std::vector<float>{0.3f, 0.3f, 0.9f, 0.9f, 0.9f});
}

TEST_CASE("conv stages re-center values on the receptive-field midpoint") {
  const std::vector<TemporalStage> trace = {{TemporalStage::kConv, 3}};
  // 6 steps, kernel 3 -> 4 outputs; midpoint offset is 1, ends clamp
  const auto fine = expand_relevance({1.0f, 2.0f, 3.0f, 4.0f}, trace, 6);
  CHECK(fine == std::vector<float>{1.0f, 1.0f, 2.0f, 3.0f, 4.0f, 4.0f});
}

TEST_CASE("even kernels round the midpoint down") {
  const std::vector<TemporalStage> trace = {{TemporalStage::kConv, 2}};
  const auto fine = expand_relevance({1.0f, 2.0f, 3.0f}, trace, 4);
  CHECK(fine == std::vector<float>{1.0f, 2.0f, 3.0f, 3.0f});
}

TEST_CASE("stacked stages expand in reverse order") {
  const std::vector<TemporalStage> trace = {{TemporalStage::kConv, 3},
                                            {TemporalStage::kPool, 2}};
  // 7 -> conv3 -> 5 -> pool2 -> 2
  const auto fine = expand_relevance({1.0f, 2.0f}, trace, 7);
  CHECK(fine ==
        std::vector<float>{1.0f, 1.0f, 1.0f, 2.0f, 2.0f, 2.0f, 2.0f});
}

TEST_CASE("a kernel-1 conv stage is the identity") {
  const std::vector<TemporalStage> trace = {{TemporalStage::kConv, 1}};
  const auto fine = expand_relevance({0.1f, 0.2f, 0.3f}, trace, 3);
  CHECK(fine == std::vector<float>{0.1f, 0.2f, 0.3f});
}

TEST_CASE("expansion validates lengths and collapsing stages") {
  const std::vector<TemporalStage> trace = {{TemporalStage::kConv, 3}};
  CHECK_THROWS_AS(expand_relevance({1.0f}, trace, 6), std::invalid_argument);
  const std::vector<TemporalStage> collapse = {{TemporalStage::kConv, 5}};
  CHECK_THROWS_AS(expand_relevance({1.0f}, collapse, 2), std::invalid_argument);
}

TEST_CASE("score normalization divides by the max and keeps zeros intact") {
  CHECK(normalize_scores({2.0f, 4.0f, 1.0f}) == std::vector<float>{0.5f, 1.0f, 0.25f});
  CHECK(normalize_scores({0.0f, 0.0f}) == std::vector<float>{0.0f, 0.0f});
  CHECK(normalize_scores({}) == std::vector<float>{});
}

// ---------------------------------------------------------------------------
// End-to-end explanations
// ---------------------------------------------------------------------------

TEST_CASE("explain produces a normalized per-character map for every model") {
  const std::string text = "win a free prize now";
  for (const auto& make : {tiny_cnn, tiny_gru}) {
    Model<float> m(make(), 99);
    const auto email = encode(text, m.spec().t_max);
    const auto h = explain(m, email);
    CHECK(static_cast<int>(h.char_scores.size()) == email.original_length);
    CHECK((h.target_class == 0 || h.target_class == 1));
    const int argmax = h.probs[1] > h.probs[0] ? 1 : 0;
    CHECK(h.target_class == argmax);
    float max_score = 0.0f;
    for (float s : h.char_scores) {
      CHECK(s >= 0.0f);
      CHECK(s <= 1.0f);
      max_score = std::max(max_score, s);
    }
    if (max_score > 0.0f) CHECK(max_score == 1.0f);
  }
}

TEST_CASE("explain truncates scores to the original text length") {
  Model<float> m(tiny_cnn(), 3);
  const auto email = encode("short", m.spec().t_max);  // 5 chars, t_max 16
  const auto h = explain(m, email);
  CHECK(h.char_scores.size() == 5);
}

TEST_CASE("explain is deterministic and class-sensitive") {
  Model<float> m(tiny_gru(), 17);
  const auto email = encode("update your password immediately", m.spec().t_max);
  const auto a = explain(m, email, 1);
  const auto b = explain(m, email, 1);
  CHECK(a.char_scores == b.char_scores);
  CHECK(a.probs == b.probs);

  const auto other = explain(m, email, 0);
  CHECK(other.target_class == 0);
  CHECK(a.target_class == 1);
  CHECK(a.char_scores != other.char_scores);

  CHECK_THROWS_AS(explain(m, email, 2), std::invalid_argument);
}

TEST_CASE("explain leaves no parameter gradients behind") {
  Model<float> m(tiny_cnn(), 23);
  const auto email = encode("check this out", m.spec().t_max);
  explain(m, email);
  for (auto* p : m.params()) {
    for (float g : p->grad) CHECK(g == 0.0f);
  }
}

// ---------------------------------------------------------------------------
// HTML rendering
// ---------------------------------------------------------------------------

TEST_CASE("rendered html is self-contained and structurally complete") {
  const std::string html = render_html("abc", {1.0f, 0.5f, 0.0f}, "demo");
  CHECK(html.find("<!DOCTYPE html>") == 0);
  CHECK(count_substr(html, "<html>") == 1);
  CHECK(count_substr(html, "</html>") == 1);
  CHECK(count_substr(html, "<body") == 1);
  CHECK(count_substr(html, "</body>") == 1);
  CHECK(count_substr(html, "<span") == 3);
  CHECK(count_substr(html, "</span>") == 3);
  CHECK(html.find("<title>demo</title>") != std::string::npos);
  // no external fetches
  CHECK(html.find("http://") == std::string::npos);
  CHECK(html.find("https://") == std::string::npos);
  CHECK(html.find("src=") == std::string::npos);
  CHECK(html.find("<link") == std::string::npos);
  CHECK(html.find("<script") == std::string::npos);
}

TEST_CASE("scores are rendered as four-digit alpha values") {
  const std::string html = render_html("ab", {1.0f, 0.25f}, "t");
  CHECK(html.find("rgba(255,0,0,1.0000)") != std::string::npos);
  CHECK(html.find("rgba(255,0,0,0.2500)") != std::string::npos);
}

TEST_CASE("characters beyond the score vector render with zero intensity") {
  const std::string html = render_html("abcd", {1.0f}, "t");
  CHECK(count_substr(html, "rgba(255,0,0,0.0000)") == 3);
}

TEST_CASE("html special characters are escaped in text and title") {
  const std::string html = render_html("a<b>&\"'", {}, "x<&>y");
  CHECK(html.find("&lt;") != std::string::npos);
  CHECK(html.find("&gt;") != std::string::npos);
  CHECK(html.find("&amp;") != std::string::npos);
  CHECK(html.find("&quot;") != std::string::npos);
  CHECK(html.find("&#39;") != std::string::npos);
  CHECK(html.find("<title>x&lt;&amp;&gt;y</title>") != std::string::npos);
  // the raw angle-bracket run from the input never survives unescaped
  CHECK(html.find("<b>") == std::string::npos);
}

TEST_CASE("newlines become line breaks instead of spans") {
  const std::string html = render_html("a\nb", {0.5f, 0.5f, 0.5f}, "t");
  CHECK(count_substr(html, "<br>") == 1);
  CHECK(count_substr(html, "<span") == 2);
}
