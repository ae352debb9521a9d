#include "charphish/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "charphish/hash.hpp"
#include "charphish/rng.hpp"

namespace charphish {

namespace {

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

bool parse_label(std::string_view raw, Label& out) {
  const std::string s = lower(trim(raw));
  if (s == "clean" || s == "legitimate" || s == "ham" || s == "0") {
    out = Label::kClean;
    return true;
  }
  if (s == "phishing" || s == "phish" || s == "1") {
    out = Label::kPhishing;
    return true;
  }
  return false;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

const char* label_name(Label l) { return l == Label::kClean ? "clean" : "phishing"; }

std::string model_text(const Email& e, bool include_subject) {
  if (!include_subject) return e.body;
  return e.subject + "\n" + e.body;
}

size_t EmailStore::count(Label l) const {
  size_t n = 0;
  for (const auto& e : emails) {
    if (e.label == l) ++n;
  }
  return n;
}

void EmailStore::save_jsonl(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (const auto& e : emails) {
    nlohmann::json j;
    j["id"] = e.id;
    j["subject"] = e.subject;
    j["body"] = e.body;
    j["label"] = label_name(e.label);
    j["source"] = e.source;
    out << j.dump() << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

EmailStore EmailStore::load_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open store: " + path);
  EmailStore store;
  std::string line;
  long long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": bad store record: " + e.what());
    }
    Email e;
    e.id = j.at("id").get<std::string>();
    e.subject = j.at("subject").get<std::string>();
    e.body = j.at("body").get<std::string>();
    e.source = j.at("source").get<std::string>();
    if (!parse_label(j.at("label").get<std::string>(), e.label)) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": bad label");
    }
    store.emails.push_back(std::move(e));
  }
  return store;
}

bool is_valid_utf8(std::string_view s) {
  size_t i = 0;
  const size_t n = s.size();
  while (i < n) {
    const unsigned char c = static_cast<unsigned char>(s[i]);
    if (c < 0x80) {
      ++i;
      continue;
    }
    int need;
    unsigned lo = 0x80, hi = 0xbf;
    if (c >= 0xc2 && c <= 0xdf) {
      need = 1;
    } else if (c == 0xe0) {
      need = 2;
      lo = 0xa0;
    } else if (c >= 0xe1 && c <= 0xec) {
      need = 2;
    } else if (c == 0xed) {
      need = 2;
      hi = 0x9f;  // exclude surrogates
    } else if (c >= 0xee && c <= 0xef) {
      need = 2;
    } else if (c == 0xf0) {
      need = 3;
      lo = 0x90;
    } else if (c >= 0xf1 && c <= 0xf3) {
      need = 3;
    } else if (c == 0xf4) {
      need = 3;
      hi = 0x8f;
    } else {
      return false;
    }
    if (i + need >= n) return false;
    for (int k = 1; k <= need; ++k) {
      const unsigned char cc = static_cast<unsigned char>(s[i + k]);
      const unsigned klo = k == 1 ? lo : 0x80;
      const unsigned khi = k == 1 ? hi : 0xbf;
      if (cc < klo || cc > khi) return false;
    }
    i += need + 1;
  }
  return true;
}

std::string decode_text(std::string_view bytes) {
  if (is_valid_utf8(bytes)) return std::string(bytes);
  std::string out;
  out.reserve(bytes.size() * 2);
  for (unsigned char b : bytes) {
    if (b < 0x80) {
      out.push_back(static_cast<char>(b));
    } else {
      out.push_back(static_cast<char>(0xc0 | (b >> 6)));
      out.push_back(static_cast<char>(0x80 | (b & 0x3f)));
    }
  }
  return out;
}

std::string normalize_newlines(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\r') {
      out.push_back('\n');
      if (i + 1 < s.size() && s[i + 1] == '\n') ++i;
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

std::string normalize_for_dedup(std::string_view body) {
  const std::string lf = normalize_newlines(body);
  std::string out;
  out.reserve(lf.size());
  size_t start = 0;
  while (start <= lf.size()) {
    size_t end = lf.find('\n', start);
    const bool last = end == std::string::npos;
    if (last) end = lf.size();
    size_t stop = end;
    while (stop > start && (lf[stop - 1] == ' ' || lf[stop - 1] == '\t')) --stop;
    out.append(lf, start, stop - start);
    if (!last) out.push_back('\n');
    if (last) break;
    start = end + 1;
  }
  size_t e = out.size();
  while (e > 0 && (out[e - 1] == '\n' || out[e - 1] == ' ' || out[e - 1] == '\t')) --e;
  out.resize(e);
  return out;
}

std::string make_email_id(const std::string& source_tag, long long counter,
                          const std::string& body) {
  const std::string key = source_tag + "|" + std::to_string(counter) + "|" + body;
  return source_tag + ":" + sha256_hex(key).substr(0, 8);
}

namespace {

// Appends one record if usable; updates stats.
void add_record(EmailStore& store, IngestStats& stats, const std::string& source_tag,
                long long counter, std::string subject, std::string body, Label label) {
  subject = decode_text(subject);
  body = normalize_newlines(decode_text(body));
  if (trim(body).empty()) {
    ++stats.malformed;
    return;
  }
  Email e;
  e.subject = normalize_newlines(subject);
  // Subjects are single-line; fold any embedded breaks to spaces.
  std::replace(e.subject.begin(), e.subject.end(), '\n', ' ');
  e.subject = trim(e.subject);
  e.body = std::move(body);
  e.label = label;
  e.source = source_tag;
  e.id = make_email_id(source_tag, counter, e.body);
  store.emails.push_back(std::move(e));
  ++stats.parsed;
}

}  // namespace

IngestStats ingest_jsonl(EmailStore& store, const std::string& path,
                         const std::string& source_tag) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  IngestStats stats;
  std::string line;
  long long counter = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++counter;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      ++stats.malformed;
      continue;
    }
    if (!j.is_object() || !j.contains("body") || !j.at("body").is_string() ||
        !j.contains("label") || !j.at("label").is_string()) {
      ++stats.malformed;
      continue;
    }
    Label label;
    if (!parse_label(j.at("label").get<std::string>(), label)) {
      ++stats.malformed;
      continue;
    }
    std::string subject;
    if (j.contains("subject") && j.at("subject").is_string()) {
      subject = j.at("subject").get<std::string>();
    }
    add_record(store, stats, source_tag, counter, subject, j.at("body").get<std::string>(),
               label);
  }
  return stats;
}

namespace {

// RFC 4180 rows; quoted fields may hold commas, quotes ("" = literal quote)
// and newlines. Accepts LF or CRLF row endings.
std::vector<std::vector<std::string>> parse_csv(const std::string& content) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  size_t i = 0;
  const size_t n = content.size();
  auto end_field = [&]() {
    row.push_back(field);
    field.clear();
    field_started = false;
  };
  auto end_row = [&]() {
    end_field();
    if (!(row.size() == 1 && row[0].empty())) rows.push_back(row);
    row.clear();
  };
  while (i < n) {
    const char c = content[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < n && content[i + 1] == '"') {
          field.push_back('"');
          i += 2;
        } else {
          in_quotes = false;
          ++i;
        }
      } else {
        field.push_back(c);
        ++i;
      }
      continue;
    }
    if (c == '"' && !field_started && field.empty()) {
      in_quotes = true;
      field_started = true;
      ++i;
    } else if (c == ',') {
      end_field();
      ++i;
    } else if (c == '\n') {
      end_row();
      ++i;
    } else if (c == '\r') {
      if (i + 1 < n && content[i + 1] == '\n') {
        end_row();
        i += 2;
      } else {
        end_row();
        ++i;
      }
    } else {
      field.push_back(c);
      field_started = true;
      ++i;
    }
  }
  if (in_quotes) throw std::runtime_error("csv: unterminated quoted field");
  if (field_started || !field.empty() || !row.empty()) end_row();
  return rows;
}

}  // namespace

IngestStats ingest_csv(EmailStore& store, const std::string& path,
                       const std::string& source_tag) {
  const std::string content = read_file(path);
  const auto rows = parse_csv(content);
  if (rows.empty()) throw std::runtime_error("csv: no header row in " + path);
  int subject_col = -1, body_col = -1, label_col = -1;
  for (size_t c = 0; c < rows[0].size(); ++c) {
    const std::string h = lower(trim(rows[0][c]));
    if (h == "subject") subject_col = static_cast<int>(c);
    if (h == "body" || h == "text") body_col = static_cast<int>(c);
    if (h == "label") label_col = static_cast<int>(c);
  }
  if (body_col < 0 || label_col < 0) {
    throw std::runtime_error("csv: header must name body and label columns in " + path);
  }
  IngestStats stats;
  long long counter = 0;
  for (size_t r = 1; r < rows.size(); ++r) {
    ++counter;
    const auto& row = rows[r];
    const int needed = std::max(body_col, label_col);
    if (static_cast<int>(row.size()) <= needed) {
      ++stats.malformed;
      continue;
    }
    Label label;
    if (!parse_label(row[label_col], label)) {
      ++stats.malformed;
      continue;
    }
    std::string subject;
    if (subject_col >= 0 && subject_col < static_cast<int>(row.size())) {
      subject = row[subject_col];
    }
    add_record(store, stats, source_tag, counter, subject, row[body_col], label);
  }
  return stats;
}

namespace {

struct ParsedMessage {
  std::string subject;
  std::string body;
};

// Minimal RFC 822 shape: headers (with folding) up to the first blank line,
// then the body. Only Subject is extracted.
ParsedMessage parse_rfc822(const std::string& raw) {
  const std::string text = normalize_newlines(raw);
  ParsedMessage msg;
  size_t pos = 0;
  std::string current_header;
  while (pos < text.size()) {
    size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string line = text.substr(pos, eol - pos);
    if (line.empty()) {
      pos = eol + 1;
      break;  // header/body separator
    }
    if ((line[0] == ' ' || line[0] == '\t') && !current_header.empty()) {
      current_header += " " + trim(line);
    } else {
      if (lower(current_header).rfind("subject:", 0) == 0) {
        msg.subject = trim(current_header.substr(8));
      }
      current_header = line;
    }
    pos = eol + 1;
  }
  if (lower(current_header).rfind("subject:", 0) == 0) {
    msg.subject = trim(current_header.substr(8));
  }
  msg.body = pos < text.size() ? text.substr(pos) : "";
  return msg;
}

}  // namespace

IngestStats ingest_eml(EmailStore& store, const std::string& path,
                       const std::string& source_tag, Label label) {
  namespace fs = std::filesystem;
  std::vector<std::string> files;
  if (fs::is_directory(path)) {
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file()) files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(path);
  }
  IngestStats stats;
  long long counter = 0;
  for (const auto& f : files) {
    ++counter;
    std::string raw;
    try {
      raw = read_file(f);
    } catch (const std::runtime_error&) {
      ++stats.malformed;
      continue;
    }
    const ParsedMessage msg = parse_rfc822(raw);
    add_record(store, stats, source_tag, counter, msg.subject, msg.body, label);
  }
  return stats;
}

IngestStats ingest_mbox(EmailStore& store, const std::string& path,
                        const std::string& source_tag, Label label) {
  const std::string content = normalize_newlines(read_file(path));
  IngestStats stats;
  long long counter = 0;
  std::vector<std::string> messages;
  std::string current;
  bool in_message = false;
  size_t pos = 0;
  while (pos <= content.size()) {
    size_t eol = content.find('\n', pos);
    const bool last = eol == std::string::npos;
    if (last) eol = content.size();
    std::string line = content.substr(pos, eol - pos);
    if (line.rfind("From ", 0) == 0) {
      if (in_message) messages.push_back(current);
      current.clear();
      in_message = true;
    } else if (in_message) {
      // mboxrd escape: ">From", ">>From", ... lose one '>'
      size_t gt = 0;
      while (gt < line.size() && line[gt] == '>') ++gt;
      if (gt > 0 && line.compare(gt, 5, "From ") == 0) line.erase(0, 1);
      current += line;
      current.push_back('\n');
    }
    if (last) break;
    pos = eol + 1;
  }
  if (in_message) messages.push_back(current);
  for (const auto& m : messages) {
    ++counter;
    const ParsedMessage msg = parse_rfc822(m);
    add_record(store, stats, source_tag, counter, msg.subject, msg.body, label);
  }
  return stats;
}

IngestStats ingest(EmailStore& store, const std::string& format, const std::string& path,
                   const std::string& source_tag, Label default_label) {
  if (format == "jsonl") return ingest_jsonl(store, path, source_tag);
  if (format == "csv") return ingest_csv(store, path, source_tag);
  if (format == "eml") return ingest_eml(store, path, source_tag, default_label);
  if (format == "mbox") return ingest_mbox(store, path, source_tag, default_label);
  throw std::invalid_argument("unknown ingest format: " + format);
}

std::string store_ids_digest(const EmailStore& store) {
  std::string joined;
  for (const auto& e : store.emails) {
    joined += e.id;
    joined.push_back('\n');
  }
  return sha256_hex(joined);
}

DedupResult deduplicate(EmailStore& store) {
  DedupResult result;
  std::unordered_map<std::string, Label> seen;
  std::vector<Email> kept;
  kept.reserve(store.emails.size());
  for (auto& e : store.emails) {
    const std::string key = sha256_hex(normalize_for_dedup(e.body));
    auto [it, inserted] = seen.emplace(key, e.label);
    if (inserted) {
      kept.push_back(std::move(e));
    } else {
      ++result.removed;
      if (it->second != e.label) ++result.label_conflicts;
    }
  }
  store.emails = std::move(kept);
  return result;
}

SplitResult stratified_split(const EmailStore& store, double train_frac, double val_frac,
                             double test_frac, uint64_t seed) {
  if (train_frac < 0 || val_frac < 0 || test_frac < 0 ||
      std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
    throw std::invalid_argument("split fractions must be non-negative and sum to 1");
  }
  SplitResult out;
  nlohmann::json counts;
  for (Label label : {Label::kClean, Label::kPhishing}) {
    std::vector<size_t> idx;
    for (size_t i = 0; i < store.emails.size(); ++i) {
      if (store.emails[i].label == label) idx.push_back(i);
    }
    Rng rng(derive_seed(seed, std::string("split-") + label_name(label)));
    rng.shuffle(idx);
    const long long n = static_cast<long long>(idx.size());
    long long n_train = std::llround(train_frac * static_cast<double>(n));
    long long n_val = std::llround(val_frac * static_cast<double>(n));
    if (n_train > n) n_train = n;
    if (n_train + n_val > n) n_val = n - n_train;
    const long long n_test = n - n_train - n_val;
    for (long long i = 0; i < n; ++i) {
      const Email& e = store.emails[idx[i]];
      if (i < n_train) {
        out.train.emails.push_back(e);
      } else if (i < n_train + n_val) {
        out.val.emails.push_back(e);
      } else {
        out.test.emails.push_back(e);
      }
    }
    counts[label_name(label)] = {{"train", n_train}, {"val", n_val}, {"test", n_test}};
  }
  // Interleave classes within each subset deterministically.
  for (auto [name, part] : {std::pair<const char*, EmailStore*>{"train", &out.train},
                            {"val", &out.val},
                            {"test", &out.test}}) {
    Rng rng(derive_seed(seed, std::string("order-") + name));
    rng.shuffle(part->emails);
  }
  out.manifest["seed"] = seed;
  out.manifest["fractions"] = {{"train", train_frac}, {"val", val_frac}, {"test", test_frac}};
  out.manifest["per_class"] = counts;
  out.manifest["sizes"] = {{"train", out.train.size()},
                           {"val", out.val.size()},
                           {"test", out.test.size()},
                           {"total", store.size()}};
  return out;
}

}  // namespace charphish
