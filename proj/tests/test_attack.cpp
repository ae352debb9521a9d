#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <queue>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "charphish/attack.hpp"
#include "charphish/corpus.hpp"
#include "charphish/fixtures.hpp"
#include "charphish/rng.hpp"

using namespace charphish;
namespace fs = std::filesystem;

namespace {

// Breadth-first search over raw edit operations: the ground-truth distance
// for the unrestricted transposition metric on tiny strings. Insertions and
// substitutions only draw characters that occur in either string, which
// never hurts optimality.
int bfs_edit_distance(const std::string& a, const std::string& b, int cap = 6) {
  std::set<char> charset(a.begin(), a.end());
  charset.insert(b.begin(), b.end());
  if (charset.empty()) charset.insert('a');
  std::queue<std::pair<std::string, int>> frontier;
  std::unordered_set<std::string> seen;
  frontier.push({a, 0});
  seen.insert(a);
  const size_t max_len = std::max(a.size(), b.size()) + 2;
  while (!frontier.empty()) {
    auto [cur, d] = frontier.front();
    frontier.pop();
    if (cur == b) return d;
    if (d == cap) continue;
    auto push = [&](std::string next) {
      if (next.size() <= max_len && seen.insert(next).second) {
        frontier.push({std::move(next), d + 1});
      }
    };
    for (size_t i = 0; i + 1 < cur.size(); ++i) {
      std::string t = cur;
      std::swap(t[i], t[i + 1]);
      push(std::move(t));
    }
    for (size_t i = 0; i < cur.size(); ++i) {
      std::string t = cur;
      t.erase(i, 1);
      push(std::move(t));
      for (char c : charset) {
        if (c != cur[i]) {
          t = cur;
          t[i] = c;
          push(std::move(t));
        }
      }
    }
    for (size_t i = 0; i <= cur.size(); ++i) {
      for (char c : charset) {
        std::string t = cur;
        t.insert(t.begin() + static_cast<long>(i), c);
        push(std::move(t));
      }
    }
  }
  return cap + 1;  // unreachable within the cap
}

std::string random_word(Rng& rng, int len, const std::string& alphabet) {
  std::string s(len, 'a');
  for (auto& c : s) c = alphabet[rng.below(alphabet.size())];
  return s;
}

fs::path temp_file(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "charphish-attack-tests";
  fs::create_directories(dir);
  return dir / name;
}

Email make_email(const std::string& id, const std::string& body, Label label) {
  Email e;
  e.id = id;
  e.subject = "subject " + id;
  e.body = body;
  e.label = label;
  e.source = "test";
  return e;
}

}  // namespace

// ---------------------------------------------------------------------------
// Budget and unit edits
// ---------------------------------------------------------------------------

TEST_CASE("the edit budget is ceil(epsilon * length) without binary drift") {
  CHECK(attack_budget(0.10, 1500) == 150);
  CHECK(attack_budget(0.10, 10) == 1);
  CHECK(attack_budget(0.10, 15) == 2);   // 1.5 rounds up
  CHECK(attack_budget(0.30, 10) == 3);   // 0.3*10 sits just above 3.0 in binary
  CHECK(attack_budget(0.07, 100) == 7);
  CHECK(attack_budget(1.0, 5) == 5);
  CHECK(attack_budget(0.5, 0) == 0);
  CHECK_THROWS_AS(attack_budget(0.0, 10), std::invalid_argument);
  CHECK_THROWS_AS(attack_budget(1.5, 10), std::invalid_argument);
  CHECK_THROWS_AS(attack_budget(0.1, -1), std::invalid_argument);
}

TEST_CASE("apply_op implements the four unit edits") {
  CHECK(apply_op("abcd", {OpKind::kSwap, 1, '\0'}) == "acbd");
  CHECK(apply_op("abcd", {OpKind::kSubstitute, 2, 'X'}) == "abXd");
  CHECK(apply_op("abcd", {OpKind::kDelete, 0, '\0'}) == "bcd");
  CHECK(apply_op("abcd", {OpKind::kInsert, 4, 'Z'}) == "abcdZ");
  CHECK(apply_op("abcd", {OpKind::kInsert, 0, 'Z'}) == "Zabcd");
  CHECK_THROWS_AS(apply_op("ab", {OpKind::kSwap, 1, '\0'}), std::out_of_range);
  CHECK_THROWS_AS(apply_op("ab", {OpKind::kDelete, 2, '\0'}), std::out_of_range);
  CHECK_THROWS_AS(apply_op("ab", {OpKind::kInsert, 3, 'x'}), std::out_of_range);
}

TEST_CASE("op kinds have stable names") {
  CHECK(std::string(op_kind_name(OpKind::kSwap)) == "swap");
  CHECK(std::string(op_kind_name(OpKind::kSubstitute)) == "substitute");
  CHECK(std::string(op_kind_name(OpKind::kDelete)) == "delete");
  CHECK(std::string(op_kind_name(OpKind::kInsert)) == "insert");
}

TEST_CASE("confusable characters map both ways") {
  CHECK(confusable_for('o') == '0');
  CHECK(confusable_for('0') == 'o');
  CHECK(confusable_for('i') == '1');
  CHECK(confusable_for('1') == 'i');
  CHECK(confusable_for('l') == '1');
  CHECK(confusable_for('e') == '3');
  CHECK(confusable_for('3') == 'e');
  CHECK(confusable_for('a') == '@');
  CHECK(confusable_for('@') == 'a');
  CHECK(confusable_for('s') == '$');
  CHECK(confusable_for('$') == 's');
  CHECK(confusable_for('z') == '\0');
  CHECK(confusable_for(' ') == '\0');
}

// ---------------------------------------------------------------------------
// Edit distance
// ---------------------------------------------------------------------------

TEST_CASE("edit distance handles the classic pinned cases") {
  CHECK(damerau_levenshtein("", "") == 0);
  CHECK(damerau_levenshtein("abc", "abc") == 0);
  CHECK(damerau_levenshtein("abc", "") == 3);
  CHECK(damerau_levenshtein("", "abc") == 3);
  CHECK(damerau_levenshtein("ab", "ba") == 1);       // one transposition
  CHECK(damerau_levenshtein("ca", "abc") == 2);      // needs edits between the pair
  CHECK(damerau_levenshtein("kitten", "sitting") == 3);
  CHECK(damerau_levenshtein("password", "p@ssw0rd") == 2);
}

TEST_CASE("edit distance matches breadth-first search on random tiny strings") {
  Rng rng(2024);
  for (int trial = 0; trial < 40; ++trial) {
    const std::string a = random_word(rng, static_cast<int>(rng.below(5)), "abc");
    const std::string b = random_word(rng, static_cast<int>(rng.below(5)), "abc");
    const long long dp = damerau_levenshtein(a, b);
    const int bfs = bfs_edit_distance(a, b);
    CHECK_MESSAGE(dp == bfs, "a=\"" << a << "\" b=\"" << b << "\" dp=" << dp
                                    << " bfs=" << bfs);
  }
}

TEST_CASE("edit distance is a symmetric metric within unit-edit bounds") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const std::string a = random_word(rng, 2 + static_cast<int>(rng.below(8)), "abcd");
    const std::string b = random_word(rng, 2 + static_cast<int>(rng.below(8)), "abcd");
    const std::string c = random_word(rng, 2 + static_cast<int>(rng.below(8)), "abcd");
    const long long ab = damerau_levenshtein(a, b);
    CHECK(ab == damerau_levenshtein(b, a));
    CHECK(ab >= std::llabs(static_cast<long long>(a.size()) -
                           static_cast<long long>(b.size())));
    CHECK(ab <= static_cast<long long>(std::max(a.size(), b.size())));
    CHECK(damerau_levenshtein(a, c) <= ab + damerau_levenshtein(b, c));
    CHECK((ab == 0) == (a == b));
  }
}

TEST_CASE("k unit edits stay within distance k") {
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const std::string base = random_word(rng, 20 + static_cast<int>(rng.below(20)), "abcdef ");
    std::string mangled = base;
    const int k = 1 + static_cast<int>(rng.below(6));
    for (int i = 0; i < k; ++i) {
      const int len = static_cast<int>(mangled.size());
      switch (rng.below(4)) {
        case 0:
          if (len >= 2) {
            const int p = static_cast<int>(rng.below(len - 1));
            std::swap(mangled[p], mangled[p + 1]);
          }
          break;
        case 1:
          mangled[rng.below(len)] = 'z';
          break;
        case 2:
          mangled.erase(rng.below(len), 1);
          break;
        default:
          mangled.insert(rng.below(len + 1), 1, 'q');
      }
    }
    CHECK(damerau_levenshtein(base, mangled) <= k);
  }
}

// ---------------------------------------------------------------------------
// Position scoring
// ---------------------------------------------------------------------------

TEST_CASE("positions rank by leave-one-out influence with stable ties") {
  // p = 0.1 * (number of 'x' characters); deleting an 'x' lowers p
  const ScoreFn oracle = [](const std::string& t) {
    return 0.1 * static_cast<double>(std::count(t.begin(), t.end(), 'x'));
  };
  long long queries = 0;
  const auto order = score_positions(oracle, "axbxc", &queries);
  REQUIRE(order.size() == 5);
  CHECK(order[0] == 1);  // both x positions tie; lower index first
  CHECK(order[1] == 3);
  CHECK(order[2] == 0);
  CHECK(order[3] == 2);
  CHECK(order[4] == 4);
  CHECK(queries == 6);  // base + one per character
}

// ---------------------------------------------------------------------------
// Guided attack
// ---------------------------------------------------------------------------

TEST_CASE("the guided attack breaks a needle oracle within budget") {
  auto oracle = StubOracle::contains("http");
  const std::string text = "please visit http somewhere in this text body soon";
  const auto ex = attack(oracle, text, 0.1, 7);
  CHECK(ex.original == text);
  CHECK(ex.budget_n == 5);
  CHECK(ex.flipped);
  CHECK(ex.p_before == doctest::Approx(0.9));
  CHECK(ex.p_after == doctest::Approx(0.1));
  CHECK(ex.ops_used >= 1);
  CHECK(ex.ops_used <= ex.budget_n);
  CHECK(static_cast<int>(ex.trace.size()) == ex.ops_used);
  CHECK(ex.perturbed.find("http") == std::string::npos);
  CHECK(damerau_levenshtein(ex.original, ex.perturbed) <= ex.budget_n);
  CHECK(ex.queries == oracle.queries());

  // replaying the trace reproduces the final string
  std::string replay = ex.original;
  for (const auto& op : ex.trace) replay = apply_op(std::move(replay), op);
  CHECK(replay == ex.perturbed);
}

TEST_CASE("texts already classified clean are returned untouched") {
  auto oracle = StubOracle::contains("http");
  const auto ex = attack(oracle, "no links here at all", 0.2, 1);
  CHECK_FALSE(ex.flipped);
  CHECK(ex.ops_used == 0);
  CHECK(ex.perturbed == ex.original);
  CHECK(ex.queries == 1);  // a single confirming query
  CHECK(ex.p_before == doctest::Approx(0.1));
  CHECK(ex.p_after == doctest::Approx(0.1));
}

TEST_CASE("a flat oracle yields no edits because decreases must be strict") {
  auto oracle = StubOracle::constant(0.9);
  const auto ex = attack(oracle, "some phishing text here", 0.3, 5);
  CHECK_FALSE(ex.flipped);
  CHECK(ex.ops_used == 0);
  CHECK(ex.perturbed == ex.original);
  CHECK(ex.p_after == doctest::Approx(0.9));
}

TEST_CASE("an unflippable oracle exhausts the whole budget") {
  // score falls with length but never crosses 0.5
  const ScoreFn oracle = [](const std::string& t) {
    return 0.55 + 0.002 * static_cast<double>(t.size());
  };
  const std::string text(40, 'm');
  const auto ex = attack(oracle, text, 0.1, 3);
  CHECK_FALSE(ex.flipped);
  CHECK(ex.ops_used == ex.budget_n);
  CHECK(ex.p_after > 0.5);
  CHECK(ex.p_after < ex.p_before);
}

TEST_CASE("the same seed reproduces the attack exactly") {
  auto oracle = StubOracle::contains("verify", 0.8, 0.2);
  const std::string text = "you must verify the account data today";
  const auto a = attack(oracle, text, 0.15, 42);
  const auto b = attack(oracle, text, 0.15, 42);
  CHECK(a.perturbed == b.perturbed);
  CHECK(a.ops_used == b.ops_used);
  CHECK(a.flipped == b.flipped);
  REQUIRE(a.trace.size() == b.trace.size());
  for (size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].kind == b.trace[i].kind);
    CHECK(a.trace[i].position == b.trace[i].position);
    CHECK(a.trace[i].ch == b.trace[i].ch);
  }
}

TEST_CASE("randomized attacks always respect the verified edit budget") {
  Rng rng(31337);
  const std::vector<std::string> needles = {"http", "prize", "verify", "$$", "zz"};
  int flips = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::string text = random_word(rng, 30 + static_cast<int>(rng.below(60)),
                                   "abcdefghij stuvz.$");
    const std::string& needle = needles[rng.below(needles.size())];
    if (rng.below(2) == 0) {
      const size_t at = rng.below(text.size() - needle.size());
      text.replace(at, needle.size(), needle);
    }
    const double eps = 0.05 + 0.1 * rng.uniform();
    auto oracle = StubOracle::contains(needle, 0.95, 0.05);
    const auto ex = attack(oracle, text, eps, rng.next());

    CHECK(ex.budget_n == attack_budget(eps, static_cast<int>(text.size())));
    CHECK(ex.ops_used <= ex.budget_n);
    CHECK(static_cast<int>(ex.trace.size()) == ex.ops_used);
    CHECK(damerau_levenshtein(ex.original, ex.perturbed) <= ex.budget_n);
    CHECK(ex.flipped == (ex.p_before > 0.5 && ex.p_after < 0.5));
    if (ex.flipped) {
      ++flips;
      CHECK(ex.perturbed.find(needle) == std::string::npos);
    }
    std::string replay = ex.original;
    for (const auto& op : ex.trace) replay = apply_op(std::move(replay), op);
    CHECK(replay == ex.perturbed);
  }
  CHECK(flips > 50);  // the needle cases are all breakable
}

TEST_CASE("attack requires an oracle") {
  CHECK_THROWS_AS(attack(ScoreFn{}, "text", 0.1, 0), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Random perturbation
// ---------------------------------------------------------------------------

TEST_CASE("random perturbation spends the budget and stays within it") {
  const std::string text = "The quarterly report is attached for your review today.";
  Rng rng(5);
  const std::string out = random_perturb(text, 0.2, rng);
  CHECK(out != text);
  const int budget = attack_budget(0.2, static_cast<int>(text.size()));
  CHECK(damerau_levenshtein(text, out) <= budget);

  Rng rng2(5);
  CHECK(random_perturb(text, 0.2, rng2) == out);  // same stream, same result

  Rng rng3(6);
  CHECK(random_perturb(text, 0.2, rng3) != out);  // overwhelmingly likely
}

TEST_CASE("random perturbation of an empty string is a no-op") {
  Rng rng(1);
  CHECK(random_perturb("", 0.5, rng) == "");
}

// ---------------------------------------------------------------------------
// Corpus-level perturbation
// ---------------------------------------------------------------------------

namespace {

EmailStore mixed_store() {
  EmailStore s;
  for (int i = 0; i < 10; ++i) {
    s.emails.push_back(make_email("p" + std::to_string(i),
                                  "win a free prize now via http link " + std::to_string(i),
                                  Label::kPhishing));
  }
  for (int i = 0; i < 5; ++i) {
    s.emails.push_back(make_email("c" + std::to_string(i),
                                  "meeting notes for project " + std::to_string(i),
                                  Label::kClean));
  }
  return s;
}

}  // namespace

TEST_CASE("perturb_corpus replaces selected phishing bodies in place") {
  const auto in = mixed_store();
  PerturbOptions opt;
  opt.fraction = 0.4;
  opt.epsilon = 0.2;
  opt.seed = 9;
  const auto out = perturb_corpus(in, opt);
  REQUIRE(out.emails.size() == in.emails.size());
  int changed = 0;
  for (size_t i = 0; i < in.emails.size(); ++i) {
    CHECK(out.emails[i].id == in.emails[i].id);
    CHECK(out.emails[i].subject == in.emails[i].subject);
    CHECK(out.emails[i].label == in.emails[i].label);
    if (out.emails[i].body != in.emails[i].body) {
      ++changed;
      CHECK(in.emails[i].label == Label::kPhishing);
    }
  }
  CHECK(changed == 4);  // round(0.4 * 10)
}

TEST_CASE("perturb_corpus can append adversarial copies instead") {
  const auto in = mixed_store();
  PerturbOptions opt;
  opt.fraction = 0.5;
  opt.epsilon = 0.2;
  opt.seed = 10;
  opt.retain_originals = true;
  const auto out = perturb_corpus(in, opt);
  CHECK(out.emails.size() == in.emails.size() + 5);
  int adv = 0;
  for (const auto& e : out.emails) {
    if (e.id.size() > 4 && e.id.substr(e.id.size() - 4) == "-adv") {
      ++adv;
      CHECK(e.label == Label::kPhishing);
    }
  }
  CHECK(adv == 5);
  // all original emails still present, bodies untouched
  for (const auto& orig : in.emails) {
    bool found = false;
    for (const auto& e : out.emails) {
      if (e.id == orig.id) {
        found = true;
        CHECK(e.body == orig.body);
      }
    }
    CHECK(found);
  }
}

TEST_CASE("perturb_corpus is deterministic in the seed, not the order") {
  const auto in = mixed_store();
  PerturbOptions opt;
  opt.fraction = 1.0;
  opt.epsilon = 0.15;
  opt.seed = 77;
  const auto a = perturb_corpus(in, opt);
  const auto b = perturb_corpus(in, opt);
  REQUIRE(a.emails.size() == b.emails.size());
  for (size_t i = 0; i < a.emails.size(); ++i) CHECK(a.emails[i].body == b.emails[i].body);

  // shuffling the input leaves each email's perturbation unchanged
  EmailStore shuffled = in;
  std::reverse(shuffled.emails.begin(), shuffled.emails.end());
  const auto c = perturb_corpus(shuffled, opt);
  for (const auto& e : a.emails) {
    for (const auto& f : c.emails) {
      if (e.id == f.id) CHECK(e.body == f.body);
    }
  }
}

TEST_CASE("perturb_corpus validates its inputs") {
  const auto in = mixed_store();
  PerturbOptions bad_fraction;
  bad_fraction.fraction = 0.0;
  CHECK_THROWS_AS(perturb_corpus(in, bad_fraction), std::invalid_argument);

  PerturbOptions guided;
  guided.guided = true;
  CHECK_THROWS_AS(perturb_corpus(in, guided), std::invalid_argument);

  EmailStore clean_only;
  clean_only.emails.push_back(make_email("c0", "hello", Label::kClean));
  PerturbOptions opt;
  CHECK_THROWS_AS(perturb_corpus(clean_only, opt), std::invalid_argument);
}

TEST_CASE("guided corpus perturbation drives bodies through the oracle") {
  const auto in = mixed_store();
  PerturbOptions opt;
  opt.fraction = 1.0;
  opt.epsilon = 0.2;
  opt.seed = 3;
  opt.guided = true;
  auto oracle = StubOracle::contains("http");
  const auto out = perturb_corpus(in, opt, oracle);
  int broken = 0;
  for (const auto& e : out.emails) {
    if (e.label == Label::kPhishing && e.body.find("http") == std::string::npos) ++broken;
  }
  CHECK(broken == 10);  // every body had the needle and loses it
  CHECK(oracle.queries() > 0);
}

// ---------------------------------------------------------------------------
// Campaigns
// ---------------------------------------------------------------------------

TEST_CASE("campaigns cover every phishing email in input order") {
  const auto in = mixed_store();
  const auto factory = [] { return ScoreFn(StubOracle::contains("http")); };
  const auto records = run_campaign(in, factory, 0.2, 11, 1);
  REQUIRE(records.size() == 10);
  for (int i = 0; i < 10; ++i) {
    CHECK(records[i].original_id == "p" + std::to_string(i));
    CHECK(records[i].ex.flipped);
  }

  // threading only changes scheduling, not results
  const auto parallel = run_campaign(in, factory, 0.2, 11, 4);
  REQUIRE(parallel.size() == records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    CHECK(parallel[i].original_id == records[i].original_id);
    CHECK(parallel[i].ex.perturbed == records[i].ex.perturbed);
    CHECK(parallel[i].ex.ops_used == records[i].ex.ops_used);
  }
}

TEST_CASE("campaign files carry a meta line and one record per line") {
  const auto in = mixed_store();
  const auto factory = [] { return ScoreFn(StubOracle::contains("http")); };
  const auto records = run_campaign(in, factory, 0.2, 11, 1);
  const auto path = temp_file("campaign.jsonl");
  nlohmann::json meta;
  meta["epsilon"] = 0.2;
  meta["seed"] = 11;
  save_campaign_jsonl(path.string(), records, meta);

  std::ifstream file(path);
  REQUIRE(file.good());
  std::string line;
  REQUIRE(std::getline(file, line));
  auto first = nlohmann::json::parse(line);
  CHECK(first.value("meta", false));
  CHECK(first["epsilon"] == doctest::Approx(0.2));

  int count = 0;
  while (std::getline(file, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("original_id"));
    CHECK(j.contains("perturbed_text"));
    CHECK(j.contains("ops"));
    CHECK(j["flipped"].is_boolean());
    for (const auto& op : j["ops"]) {
      const std::string kind = op["kind"].get<std::string>();
      if (kind == "substitute" || kind == "insert") {
        CHECK(op.contains("char"));
      } else {
        CHECK_FALSE(op.contains("char"));
      }
    }
    ++count;
  }
  CHECK(count == 10);

  // omitting metadata omits the meta line
  save_campaign_jsonl(path.string(), records);
  std::ifstream file2(path);
  REQUIRE(std::getline(file2, line));
  CHECK_FALSE(nlohmann::json::parse(line).value("meta", false));
}
