#include "charphish/attack.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <thread>

#include "charphish/encoder.hpp"

namespace charphish {

namespace {

// Full Damerau-Levenshtein verification is quadratic; above this cell count
// fall back to the metric argument (every op is a unit edit) plus a length
// check.
constexpr size_t kVerifyCellCap = size_t(8) << 20;

}  // namespace

const char* op_kind_name(OpKind k) {
  switch (k) {
    case OpKind::kSwap: return "swap";
    case OpKind::kSubstitute: return "substitute";
    case OpKind::kDelete: return "delete";
    case OpKind::kInsert: return "insert";
  }
  return "?";
}

int attack_budget(double epsilon, int length) {
  if (epsilon <= 0.0 || epsilon > 1.0) throw std::invalid_argument("epsilon must be in (0,1]");
  if (length < 0) throw std::invalid_argument("length must be >= 0");
  // 0.1 * 1500 evaluates slightly above 150 in binary floating point; back
  // off by an epsilon far below any meaningful fraction so exact products
  // stay exact.
  return static_cast<int>(std::ceil(epsilon * static_cast<double>(length) - 1e-9));
}

std::string apply_op(std::string text, const PerturbationOp& op) {
  const int len = static_cast<int>(text.size());
  switch (op.kind) {
    case OpKind::kSwap:
      if (op.position < 0 || op.position + 1 >= len) {
        throw std::out_of_range("swap position out of bounds");
      }
      std::swap(text[op.position], text[op.position + 1]);
      return text;
    case OpKind::kSubstitute:
      if (op.position < 0 || op.position >= len) {
        throw std::out_of_range("substitute position out of bounds");
      }
      text[op.position] = op.ch;
      return text;
    case OpKind::kDelete:
      if (op.position < 0 || op.position >= len) {
        throw std::out_of_range("delete position out of bounds");
      }
      text.erase(static_cast<size_t>(op.position), 1);
      return text;
    case OpKind::kInsert:
      if (op.position < 0 || op.position > len) {
        throw std::out_of_range("insert position out of bounds");
      }
      text.insert(text.begin() + op.position, op.ch);
      return text;
  }
  throw std::logic_error("unknown op kind");
}

long long damerau_levenshtein(std::string_view a, std::string_view b) {
  const int n = static_cast<int>(a.size());
  const int m = static_cast<int>(b.size());
  // (n+2) x (m+2) table with a sentinel row/column holding the max distance.
  const long long inf = n + m;
  const int w = m + 2;
  std::vector<long long> d(static_cast<size_t>(n + 2) * w);
  auto at = [&](int i, int j) -> long long& { return d[static_cast<size_t>(i) * w + j]; };
  at(0, 0) = inf;
  for (int i = 0; i <= n; ++i) {
    at(i + 1, 0) = inf;
    at(i + 1, 1) = i;
  }
  for (int j = 0; j <= m; ++j) {
    at(0, j + 1) = inf;
    at(1, j + 1) = j;
  }
  std::array<int, 256> last_row;
  last_row.fill(0);
  for (int i = 1; i <= n; ++i) {
    int last_col = 0;  // last j where a[i-1] == b[j-1] in this row
    for (int j = 1; j <= m; ++j) {
      const int k = last_row[static_cast<unsigned char>(b[j - 1])];
      const int l = last_col;
      long long cost = 1;
      if (a[i - 1] == b[j - 1]) {
        cost = 0;
        last_col = j;
      }
      const long long best =
          std::min({at(i, j) + cost,          // substitute or match
                    at(i + 1, j) + 1,         // insert
                    at(i, j + 1) + 1,         // delete
                    at(k, l) + (i - k - 1) + 1 + (j - l - 1)});  // transpose
      at(i + 1, j + 1) = best;
    }
    last_row[static_cast<unsigned char>(a[i - 1])] = i;
  }
  return at(n + 1, m + 1);
}

char confusable_for(char c) {
  switch (c) {
    case 'o': return '0';
    case '0': return 'o';
    case 'i': return '1';
    case '1': return 'i';
    case 'l': return '1';
    case 'e': return '3';
    case '3': return 'e';
    case 'a': return '@';
    case '@': return 'a';
    case 's': return '$';
    case '$': return 's';
    default: return '\0';
  }
}

std::vector<int> score_positions(const ScoreFn& oracle, const std::string& text,
                                 long long* queries) {
  const int len = static_cast<int>(text.size());
  const double base = oracle(text);
  std::vector<double> score(len);
  for (int i = 0; i < len; ++i) {
    std::string without = text;
    without.erase(static_cast<size_t>(i), 1);
    score[i] = base - oracle(without);
  }
  if (queries != nullptr) *queries += len + 1;
  std::vector<int> order(len);
  for (int i = 0; i < len; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return score[a] > score[b]; });
  return order;
}

namespace {

char substitution_char(char current, Rng& rng) {
  const char conf = confusable_for(current);
  if (conf != '\0') return conf;
  for (int tries = 0; tries < 64; ++tries) {
    const char c = Alphabet::symbol(1 + static_cast<int>(rng.below(Alphabet::kSize - 1)));
    if (c != current) return c;
  }
  return current == 'x' ? 'y' : 'x';
}

void verify_edit_distance(const AdversarialExample& ex) {
  const size_t cells = (ex.original.size() + 2) * (ex.perturbed.size() + 2);
  if (cells <= kVerifyCellCap) {
    if (damerau_levenshtein(ex.original, ex.perturbed) > ex.budget_n) {
      throw std::logic_error("attack: edit distance exceeded the budget");
    }
  } else {
    const long long diff = static_cast<long long>(ex.original.size()) -
                           static_cast<long long>(ex.perturbed.size());
    if (std::llabs(diff) > ex.budget_n) {
      throw std::logic_error("attack: length delta exceeded the budget");
    }
  }
  if (ex.ops_used > ex.budget_n) throw std::logic_error("attack: op count exceeded the budget");
}

}  // namespace

AdversarialExample attack(const ScoreFn& oracle, const std::string& text, double epsilon,
                          uint64_t seed) {
  if (!oracle) throw std::invalid_argument("attack: oracle is required");
  AdversarialExample ex;
  ex.original = text;
  ex.perturbed = text;
  ex.budget_n = attack_budget(epsilon, static_cast<int>(text.size()));
  ex.queries = 1;
  ex.p_before = oracle(text);
  ex.p_after = ex.p_before;
  if (ex.p_before <= 0.5 || ex.budget_n == 0) return ex;  // not phishing, nothing to flip

  Rng rng(seed);
  const std::vector<int> ranked = score_positions(oracle, text, &ex.queries);
  // original index -> index in the current perturbed string (-1 once deleted)
  std::vector<int> pos_map(text.size());
  for (size_t i = 0; i < text.size(); ++i) pos_map[i] = static_cast<int>(i);
  double cur_p = ex.p_before;

  for (int orig_pos : ranked) {
    if (ex.ops_used >= ex.budget_n || ex.flipped) break;
    const int p = pos_map[orig_pos];
    if (p < 0) continue;
    const int len = static_cast<int>(ex.perturbed.size());
    std::vector<PerturbationOp> candidates;
    if (p + 1 < len) candidates.push_back({OpKind::kSwap, p, '\0'});
    candidates.push_back({OpKind::kSubstitute, p, substitution_char(ex.perturbed[p], rng)});
    candidates.push_back({OpKind::kDelete, p, '\0'});
    candidates.push_back({OpKind::kInsert, p + 1, ex.perturbed[p]});

    double best_p = cur_p;
    int best = -1;
    std::string best_text;
    for (size_t c = 0; c < candidates.size(); ++c) {
      std::string cand = apply_op(ex.perturbed, candidates[c]);
      const double pc = oracle(cand);
      ++ex.queries;
      if (pc < best_p) {
        best_p = pc;
        best = static_cast<int>(c);
        best_text = std::move(cand);
      }
    }
    if (best < 0) continue;  // no candidate strictly lowered the score

    const PerturbationOp& op = candidates[best];
    ex.perturbed = std::move(best_text);
    ex.trace.push_back(op);
    ++ex.ops_used;
    cur_p = best_p;
    if (op.kind == OpKind::kDelete) {
      for (auto& q : pos_map) {
        if (q == op.position) {
          q = -1;
        } else if (q > op.position) {
          --q;
        }
      }
    } else if (op.kind == OpKind::kInsert) {
      for (auto& q : pos_map) {
        if (q >= op.position) ++q;
      }
    }
    if (cur_p < 0.5) ex.flipped = true;
  }
  ex.p_after = cur_p;
  verify_edit_distance(ex);
  return ex;
}

std::string random_perturb(const std::string& text, double epsilon, Rng& rng) {
  std::string cur = text;
  const int n = attack_budget(epsilon, static_cast<int>(text.size()));
  for (int step = 0; step < n; ++step) {
    const int len = static_cast<int>(cur.size());
    PerturbationOp op;
    bool valid = false;
    for (int tries = 0; tries < 64 && !valid; ++tries) {
      op.kind = static_cast<OpKind>(rng.below(4));
      switch (op.kind) {
        case OpKind::kSwap:
          if (len >= 2) {
            op.position = static_cast<int>(rng.below(len - 1));
            valid = true;
          }
          break;
        case OpKind::kSubstitute:
          if (len >= 1) {
            op.position = static_cast<int>(rng.below(len));
            op.ch = substitution_char(cur[op.position], rng);
            valid = true;
          }
          break;
        case OpKind::kDelete:
          if (len >= 1) {
            op.position = static_cast<int>(rng.below(len));
            valid = true;
          }
          break;
        case OpKind::kInsert:
          op.position = static_cast<int>(rng.below(len + 1));
          op.ch = len == 0 ? 'x'
                           : cur[std::min(op.position, len - 1)];
          valid = true;
          break;
      }
    }
    if (!valid) break;  // e.g. empty string kept drawing swaps
    cur = apply_op(std::move(cur), op);
  }
  return cur;
}

EmailStore perturb_corpus(const EmailStore& in, const PerturbOptions& opt,
                          const ScoreFn& oracle, bool include_subject) {
  if (opt.fraction <= 0.0 || opt.fraction > 1.0) {
    throw std::invalid_argument("perturb: fraction must be in (0,1]");
  }
  if (opt.guided && !oracle) {
    throw std::invalid_argument("perturb: guided mode needs an oracle");
  }
  std::vector<size_t> phishing_idx;
  for (size_t i = 0; i < in.emails.size(); ++i) {
    if (in.emails[i].label == Label::kPhishing) phishing_idx.push_back(i);
  }
  if (phishing_idx.empty()) throw std::invalid_argument("perturb: no phishing emails");

  Rng select_rng(derive_seed(opt.seed, "select"));
  select_rng.shuffle(phishing_idx);
  const long long n_pick =
      std::llround(opt.fraction * static_cast<double>(phishing_idx.size()));
  std::vector<bool> picked(in.emails.size(), false);
  for (long long i = 0; i < n_pick; ++i) picked[phishing_idx[i]] = true;

  EmailStore out;
  out.emails.reserve(in.emails.size() + (opt.retain_originals ? n_pick : 0));
  for (size_t i = 0; i < in.emails.size(); ++i) {
    const Email& e = in.emails[i];
    if (!picked[i]) {
      out.emails.push_back(e);
      continue;
    }
    Rng rng(derive_seed(opt.seed, e.id));
    std::string new_body;
    if (opt.guided) {
      // Score candidate bodies in the context the model actually sees.
      ScoreFn body_oracle = [&](const std::string& body) {
        Email tmp = e;
        tmp.body = body;
        return oracle(model_text(tmp, include_subject));
      };
      new_body = attack(body_oracle, e.body, opt.epsilon, rng.next()).perturbed;
    } else {
      new_body = random_perturb(e.body, opt.epsilon, rng);
    }
    if (opt.retain_originals) {
      out.emails.push_back(e);
      Email adv = e;
      adv.id = e.id + "-adv";
      adv.body = std::move(new_body);
      out.emails.push_back(std::move(adv));
    } else {
      Email adv = e;
      adv.body = std::move(new_body);
      out.emails.push_back(std::move(adv));
    }
  }
  return out;
}

std::vector<CampaignRecord> run_campaign(const EmailStore& in,
                                         const std::function<ScoreFn()>& oracle_factory,
                                         double epsilon, uint64_t seed, int threads,
                                         bool include_subject) {
  std::vector<size_t> targets;
  for (size_t i = 0; i < in.emails.size(); ++i) {
    if (in.emails[i].label == Label::kPhishing) targets.push_back(i);
  }
  std::vector<CampaignRecord> records(targets.size());
  const int n_threads = std::max(1, std::min<int>(threads, static_cast<int>(targets.size())));
  auto work = [&](int worker) {
    ScoreFn oracle = oracle_factory();
    for (size_t k = worker; k < targets.size(); k += n_threads) {
      const Email& e = in.emails[targets[k]];
      ScoreFn body_oracle = [&](const std::string& body) {
        Email tmp = e;
        tmp.body = body;
        return oracle(model_text(tmp, include_subject));
      };
      CampaignRecord rec;
      rec.original_id = e.id;
      rec.ex = attack(body_oracle, e.body, epsilon, derive_seed(seed, e.id));
      records[k] = std::move(rec);
    }
  };
  if (n_threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_threads; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  return records;
}

void save_campaign_jsonl(const std::string& path, const std::vector<CampaignRecord>& records,
                         const nlohmann::json& metadata) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  if (!metadata.is_null()) {
    nlohmann::json meta = metadata;
    meta["meta"] = true;
    out << meta.dump() << "\n";
  }
  for (const auto& r : records) {
    nlohmann::json ops = nlohmann::json::array();
    for (const auto& op : r.ex.trace) {
      nlohmann::json o;
      o["kind"] = op_kind_name(op.kind);
      o["position"] = op.position;
      if (op.kind == OpKind::kSubstitute || op.kind == OpKind::kInsert) {
        o["char"] = std::string(1, op.ch);
      }
      ops.push_back(o);
    }
    nlohmann::json j;
    j["original_id"] = r.original_id;
    j["perturbed_text"] = r.ex.perturbed;
    j["ops"] = ops;
    j["budget"] = r.ex.budget_n;
    j["ops_used"] = r.ex.ops_used;
    j["flipped"] = r.ex.flipped;
    j["queries"] = r.ex.queries;
    j["p_before"] = r.ex.p_before;
    j["p_after"] = r.ex.p_after;
    out << j.dump() << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace charphish
