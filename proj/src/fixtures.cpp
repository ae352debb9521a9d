#include "charphish/fixtures.hpp"

#include <algorithm>
#include <cctype>
#include <iterator>
#include <stdexcept>

#include "charphish/encoder.hpp"
#include "charphish/rng.hpp"

namespace charphish {

namespace {

// Filler prose shared by both classes. A small vocabulary gives the text
// word-level structure, so character noise produces out-of-distribution
// inputs instead of more of the same gibberish.
constexpr const char* kVocab[] = {
    "the",     "and",    "for",     "you",     "with",   "that",   "this",
    "have",    "from",   "your",    "will",    "team",   "please", "report",
    "meeting", "update", "program", "budget",  "plan",   "review", "week",
    "later",   "time",   "office",  "thanks",  "notes",  "about",  "draft",
    "client",  "status", "today",   "final",   "call",   "send",   "file",
    "list",    "work",   "done",    "regards", "monday"};

std::string vocab_word(Rng& rng) {
  const double u = rng.uniform();
  return kVocab[static_cast<size_t>(u * u * std::size(kVocab))];  // skew to low ranks
}

std::string filler(Rng& rng, int target_len) {
  std::string body;
  while (static_cast<int>(body.size()) < target_len) {
    const int words = 4 + static_cast<int>(rng.below(8));
    for (int w = 0; w < words; ++w) {
      std::string tok = vocab_word(rng);
      if (w == 0) tok[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(tok[0])));
      body += tok;
      body.push_back(w + 1 == words ? '.' : ' ');
    }
    body.push_back(rng.below(4) == 0 ? '\n' : ' ');
  }
  return body;
}

std::string random_body(Rng& rng, int target_len, const std::vector<std::string>& motifs,
                        double noise_rate) {
  std::string body = filler(rng, target_len);
  // Exactly one motif, spliced in at a random spot.
  const std::string& motif = motifs[rng.below(motifs.size())];
  const size_t pos = rng.below(body.size() + 1);
  body.insert(pos, " " + motif + " ");
  if (noise_rate > 0) {
    for (char& c : body) {
      if (c != '\n' && rng.uniform() < noise_rate) {
        c = Alphabet::symbol(1 + static_cast<int>(rng.below(Alphabet::kSize - 1)));
      }
    }
  }
  return body;
}

bool contains_any(const std::string& body, const std::vector<std::string>& motifs) {
  for (const auto& m : motifs) {
    if (body.find(m) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

EmailStore generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n_samples < 0) throw std::invalid_argument("n_samples must be >= 0");
  if (spec.t < 8) throw std::invalid_argument("t too small for synthetic bodies");
  for (const auto& m : spec.phishing_motifs) {
    if (static_cast<int>(m.size()) > spec.t) {
      throw std::invalid_argument("motif longer than t: " + m);
    }
  }
  EmailStore store;
  store.emails.reserve(spec.n_samples);
  for (int i = 0; i < spec.n_samples; ++i) {
    Rng rng(derive_seed(spec.seed, "email-" + std::to_string(i)));
    const Label label = i % 2 == 0 ? Label::kClean : Label::kPhishing;
    const int target = spec.t / 2 + static_cast<int>(rng.below(std::max(1, spec.t / 2)));
    std::string body;
    if (label == Label::kPhishing) {
      body = random_body(rng, target, spec.phishing_motifs, spec.noise_rate);
      // Noise may clobber every motif; re-roll until one survives intact.
      while (!contains_any(body, spec.phishing_motifs)) {
        body = random_body(rng, target, spec.phishing_motifs, spec.noise_rate);
      }
    } else {
      body = random_body(rng, target, spec.clean_motifs, spec.noise_rate);
      while (contains_any(body, spec.phishing_motifs)) {
        body = random_body(rng, target, spec.clean_motifs, spec.noise_rate);
      }
    }
    Email e;
    e.subject = vocab_word(rng) + " " + vocab_word(rng);
    e.body = std::move(body);
    e.label = label;
    e.source = "fixture";
    e.id = make_email_id("fixture", i, e.body);
    store.emails.push_back(std::move(e));
  }
  return store;
}

StubOracle StubOracle::contains(std::string needle, double p_hit, double p_miss) {
  return StubOracle([needle = std::move(needle), p_hit, p_miss](const std::string& text) {
    return text.find(needle) != std::string::npos ? p_hit : p_miss;
  });
}

StubOracle StubOracle::constant(double p) {
  return StubOracle([p](const std::string&) { return p; });
}

double StubOracle::operator()(const std::string& text) const {
  counter_->fetch_add(1);
  return fn_(text);
}

}  // namespace charphish
