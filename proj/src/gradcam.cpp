#include "charphish/gradcam.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace charphish {

std::vector<float> expand_relevance(const std::vector<float>& rel,
                                    const std::vector<nn::TemporalStage>& trace, int t_max) {
  // Forward lengths at every stage boundary, input first.
  std::vector<int> lengths{t_max};
  for (const auto& s : trace) {
    const int cur = lengths.back();
    if (s.kind == nn::TemporalStage::kConv) {
      lengths.push_back(cur - s.size + 1);
    } else {
      lengths.push_back(cur / s.size);
    }
    if (lengths.back() < 1) throw std::invalid_argument("expand: stage collapses sequence");
  }
  if (static_cast<int>(rel.size()) != lengths.back()) {
    throw std::invalid_argument("expand: relevance length does not match trace");
  }
  std::vector<float> cur = rel;
  for (int i = static_cast<int>(trace.size()) - 1; i >= 0; --i) {
    const int fine_len = lengths[i];
    const int coarse_len = lengths[i + 1];
    std::vector<float> fine(fine_len);
    if (trace[i].kind == nn::TemporalStage::kPool) {
      const int w = trace[i].size;
      for (int t = 0; t < fine_len; ++t) {
        fine[t] = cur[std::min(t / w, coarse_len - 1)];
      }
    } else {
      const int off = (trace[i].size - 1) / 2;
      for (int t = 0; t < fine_len; ++t) {
        fine[t] = cur[std::clamp(t - off, 0, coarse_len - 1)];
      }
    }
    cur = std::move(fine);
  }
  return cur;
}

std::vector<float> normalize_scores(std::vector<float> v) {
  float m = 0.0f;
  for (float x : v) m = std::max(m, x);
  if (m > 0.0f) {
    for (float& x : v) x /= m;
  }
  return v;
}

Heatmap explain(Model<float>& model, const EncodedEmail& email, int target_class) {
  model.set_capture(true);
  const auto fwd = model.forward(email);
  const int cls = target_class >= 0 ? target_class : (fwd.probs[1] > fwd.probs[0] ? 1 : 0);
  if (cls > 1) throw std::invalid_argument("explain: target class must be 0 or 1");
  std::array<float, 2> dlogits{0.0f, 0.0f};
  dlogits[cls] = 1.0f;
  nn::Seq<float> grads = model.backward_to_capture(dlogits);
  model.zero_grads();
  model.set_capture(false);

  std::vector<float> rel = channel_relevance(model.captured_activations(), grads);
  std::vector<float> full = expand_relevance(rel, model.temporal_trace(), model.spec().t_max);
  const int keep = std::min(email.original_length, model.spec().t_max);
  full.resize(keep);
  Heatmap h;
  h.char_scores = normalize_scores(std::move(full));
  h.target_class = cls;
  h.probs = fwd.probs;
  return h;
}

namespace {

void append_escaped(std::string& out, char c) {
  switch (c) {
    case '&': out += "&amp;"; break;
    case '<': out += "&lt;"; break;
    case '>': out += "&gt;"; break;
    case '"': out += "&quot;"; break;
    case '\'': out += "&#39;"; break;
    default: out.push_back(c);
  }
}

}  // namespace

std::string render_html(std::string_view text, const std::vector<float>& scores,
                        std::string_view title) {
  std::string esc_title;
  for (char c : title) append_escaped(esc_title, c);
  std::string out;
  out.reserve(text.size() * 64 + 512);
  out += "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>";
  out += esc_title;
  out +=
      "</title>\n</head>\n<body style=\"font-family: monospace; white-space: pre-wrap; "
      "font-size: 14px; line-height: 1.6;\">\n<h3 style=\"font-family: sans-serif;\">";
  out += esc_title;
  out += "</h3>\n<div>";
  char buf[64];
  for (size_t i = 0; i < text.size(); ++i) {
    const float s = i < scores.size() ? scores[i] : 0.0f;
    if (text[i] == '\n') {
      out += "<br>\n";
      continue;
    }
    std::snprintf(buf, sizeof(buf), "<span style=\"background-color: rgba(255,0,0,%.4f)\">",
                  s);
    out += buf;
    append_escaped(out, text[i]);
    out += "</span>";
  }
  out += "</div>\n</body>\n</html>\n";
  return out;
}

}  // namespace charphish
