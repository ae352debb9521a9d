#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "charphish/corpus.hpp"
#include "charphish/rng.hpp"

namespace charphish {

// Black-box oracle: full model text -> probability of the phishing class.
using ScoreFn = std::function<double(const std::string&)>;

enum class OpKind { kSwap, kSubstitute, kDelete, kInsert };

const char* op_kind_name(OpKind k);

struct PerturbationOp {
  OpKind kind;
  int position = 0;
  char ch = '\0';  // replacement / inserted character; unused for swap and delete
};

struct AdversarialExample {
  std::string original;
  std::string perturbed;
  std::vector<PerturbationOp> trace;
  int budget_n = 0;
  int ops_used = 0;
  bool flipped = false;
  long long queries = 0;
  double p_before = 0.0;
  double p_after = 0.0;
};

// Edit cap: smallest integer >= epsilon * length. Computed with a small
// backoff so binary fractions like 0.1 don't round 150 up to 151.
int attack_budget(double epsilon, int length);

// One unit edit. swap exchanges text[p] and text[p+1]; substitute replaces
// text[p] with op.ch; delete removes text[p]; insert places op.ch at index p.
std::string apply_op(std::string text, const PerturbationOp& op);

// Unrestricted Damerau-Levenshtein distance (insert / delete / substitute /
// transpose, with edits allowed between transposed characters). Satisfies
// the triangle inequality, so k unit edits always land within distance k.
// O(|a|*|b|) time and memory.
long long damerau_levenshtein(std::string_view a, std::string_view b);

// Visually-confusable counterpart (o<->0, i<->1, l->1, e<->3, a<->@, s<->$),
// or '\0' when the character has none.
char confusable_for(char c);

// Positions ordered by leave-one-out influence: score(i) = p(text) - p(text
// with char i removed), descending, ties broken by lower index. Adds
// |text| + 1 to *queries when given.
std::vector<int> score_positions(const ScoreFn& oracle, const std::string& text,
                                 long long* queries = nullptr);

// Greedy guided attack: walk positions by influence; at each, try all four
// edit kinds and keep the one that lowers p_phish the most (strict decrease
// required). Stops when the prediction flips or the budget runs out. The
// same seed, oracle, and text always produce the same trace.
AdversarialExample attack(const ScoreFn& oracle, const std::string& text, double epsilon,
                          uint64_t seed);

/// Oracle-free mode: spends the whole budget on randomly placed edits.
std::string random_perturb(const std::string& text, double epsilon, Rng& rng);

struct PerturbOptions {
  double fraction = 1.0;   // share of phishing emails to perturb
  double epsilon = 0.1;
  uint64_t seed = 0;
  bool guided = false;     // guided needs an oracle; random mode ignores it
  bool retain_originals = false;  // true: append perturbed copies (augmentation);
                                  // false: replace the selected bodies in place
};

// Perturbs a seeded sample of the phishing emails (bodies only; subjects and
// all clean emails pass through untouched). Each email uses an rng seeded
// from (seed, email id), so results do not depend on processing order.
EmailStore perturb_corpus(const EmailStore& in, const PerturbOptions& opt,
                          const ScoreFn& oracle = {}, bool include_subject = true);

struct CampaignRecord {
  std::string original_id;
  AdversarialExample ex;
};

// Guided attack over every phishing email, sharded across threads; each
// worker gets its own oracle from the factory (model forwards mutate layer
// caches, so share nothing). Output order matches input order.
std::vector<CampaignRecord> run_campaign(const EmailStore& in,
                                         const std::function<ScoreFn()>& oracle_factory,
                                         double epsilon, uint64_t seed, int threads,
                                         bool include_subject = true);

/// First line is a metadata object (prefixed "meta": true) when metadata is
// non-null; each following line is one attack record.
void save_campaign_jsonl(const std::string& path, const std::vector<CampaignRecord>& records,
                         const nlohmann::json& metadata = nullptr);

}  // namespace charphish
