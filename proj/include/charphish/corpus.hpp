#pragma once

#include <array>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "charphish/encoder.hpp"

#include <nlohmann/json.hpp>

namespace charphish {

struct Email {
  std::string id;
  std::string subject;
  std::string body;
  Label label = Label::kClean;
  std::string source;
};

const char* label_name(Label l);

// The text a classifier sees for one email.
std::string model_text(const Email& e, bool include_subject = true);

struct EmailStore {
  std::vector<Email> emails;

  size_t size() const { return emails.size(); }
  size_t count(Label l) const;
  void save_jsonl(const std::string& path) const;
  static EmailStore load_jsonl(const std::string& path);
};

struct IngestStats {
  long long parsed = 0;
  long long malformed = 0;
};

// Byte decoding: UTF-8 input passes through; anything not valid UTF-8 is
// reinterpreted as Latin-1 and transcoded, so every stored string is valid
// UTF-8 and no input is ever rejected for encoding reasons.
bool is_valid_utf8(std::string_view s);
std::string decode_text(std::string_view bytes);

// CR/CRLF to LF.
std::string normalize_newlines(std::string_view s);

// Canonical body for duplicate detection: LF newlines, per-line trailing
// whitespace stripped, trailing whitespace of the whole body stripped.
// Case is preserved.
std::string normalize_for_dedup(std::string_view body);

// Stable id: source tag + 8 hex chars of a hash over tag, running counter,
// and body, so re-ingesting the same file reproduces the same ids.
std::string make_email_id(const std::string& source_tag, long long counter,
                          const std::string& body);

// Each ingester appends to the store and reports parsed/malformed counts.
// A record is malformed when it cannot be parsed or its body is empty.
IngestStats ingest_jsonl(EmailStore& store, const std::string& path,
                         const std::string& source_tag);
IngestStats ingest_csv(EmailStore& store, const std::string& path,
                       const std::string& source_tag);
IngestStats ingest_eml(EmailStore& store, const std::string& path,
                       const std::string& source_tag, Label label);
IngestStats ingest_mbox(EmailStore& store, const std::string& path,
                        const std::string& source_tag, Label label);
// Dispatch on format name: jsonl | csv | eml | mbox.
IngestStats ingest(EmailStore& store, const std::string& format, const std::string& path,
                   const std::string& source_tag, Label default_label);

struct DedupResult {
  long long removed = 0;
  long long label_conflicts = 0;  // duplicates whose label disagreed with the kept copy
};

// Drops later copies of any email whose normalized body was already seen.
DedupResult deduplicate(EmailStore& store);

// Digest over the ordered email ids; evaluation reports carry it so two
// reports can prove they covered the same subset.
std::string store_ids_digest(const EmailStore& store);

struct SplitResult {
  EmailStore train, val, test;
  nlohmann::json manifest;
};

// Splits per class so each subset keeps the full-corpus class balance.
// Per-class subset sizes are rounded to nearest; the test subset takes the
// remainder, so the three parts always partition the input exactly.
SplitResult stratified_split(const EmailStore& store, double train_frac, double val_frac,
                             double test_frac, uint64_t seed);

}  // namespace charphish
