#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "charphish/corpus.hpp"

namespace charphish {

// Desk-scale synthetic corpus: phishing bodies carry at least one phishing
// motif, clean bodies carry none, classes balanced within one email.
struct SyntheticSpec {
  int n_samples = 200;
  int t = 200;  // emails average about this many characters
  // Both motif sets are lowercase prose so no character class belongs to a
  // label by texture alone; phishing motifs are distinguished by wording and
  // by rare letters (z q x j) that the filler vocabulary and the clean
  // motifs never use.
  std::vector<std::string> phishing_motifs = {
      "claim prize now",  "quick tax refund", "jackpot winner",  "verify zip code",
      "expired password", "freeze account",   "quota exceeded",  "adjust payroll"};
  std::vector<std::string> clean_motifs = {
      "meeting agenda",  "see notes below",    "per my last email", "lunch on monday",
      "draft attached",  "weekly status call", "room booking",      "travel plans"};
  double noise_rate = 0.0;
  uint64_t seed = 42;
};

EmailStore generate_synthetic(const SyntheticSpec& spec);

// Copyable rule-based classifier stub with a shared query counter, usable
// anywhere a ScoreFn is expected.
class StubOracle {
 public:
  // p_hit when the needle occurs in the text, p_miss otherwise.
  static StubOracle contains(std::string needle, double p_hit = 0.9, double p_miss = 0.1);
  static StubOracle constant(double p);

  double operator()(const std::string& text) const;
  long long queries() const { return counter_->load(); }

 private:
  StubOracle(std::function<double(const std::string&)> fn)
      : fn_(std::move(fn)), counter_(std::make_shared<std::atomic<long long>>(0)) {}

  std::function<double(const std::string&)> fn_;
  std::shared_ptr<std::atomic<long long>> counter_;
};

}  // namespace charphish
