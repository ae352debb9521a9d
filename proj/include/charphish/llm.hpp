#pragma once

#include <string>
#include <vector>

#include "charphish/corpus.hpp"

#include <nlohmann/json.hpp>

namespace charphish {

// Generic text-generation HTTP endpoint. The request body template carries
// {model} and {prompt} slots (filled with JSON string literals); the reply
// text is pulled out with a JSON pointer. The defaults match an
// Ollama-style /api/generate server.
struct LlmEndpointConfig {
  std::string base_url = "http://localhost:11434";
  std::string path = "/api/generate";
  std::string model = "llama3.2";
  double timeout_seconds = 60.0;
  std::string prompt_template =
      "Classify the following email as 'phishing' or 'clean'. Reply with one word. "
      "Email: {email}";
  int max_emails = 1000;
  int truncate_chars = 4000;
  std::string request_template = R"({"model": {model}, "prompt": {prompt}, "stream": false})";
  std::string response_pointer = "/response";

  // prompt_template must contain {email} exactly once; timeout > 0.
  void validate() const;
};

enum class LlmLabel { kClean = 0, kPhishing = 1, kAbstain = 2 };

const char* llm_label_name(LlmLabel l);

// Keyword rule over the reply, case-insensitive: earliest occurrence of
// "phishing" vs "clean"/"legitimate" wins; neither present -> abstain.
LlmLabel parse_llm_reply(const std::string& reply);

struct LlmResult {
  LlmLabel label = LlmLabel::kAbstain;
  std::string raw_response;
  double latency_seconds = 0;
  std::string error;  // empty on success
};

// One round trip. Network and HTTP failures come back as abstain records
// with the error field set; they never throw.
LlmResult classify_remote(const LlmEndpointConfig& cfg, const std::string& email_text);

struct LlmSample {
  std::string id;
  Label truth;
  LlmLabel predicted = LlmLabel::kAbstain;
  double latency_seconds = 0;
  std::string error;
};

struct LlmReport {
  std::vector<LlmSample> samples;
  long long n = 0;
  long long correct = 0;
  long long abstained = 0;
  double accuracy = 0;  // abstentions count against accuracy
  double mean_latency_seconds = 0;
  std::string subset_digest;
  std::string prompt_template;
  std::string model;
  std::string config_digest;
  bool timing_valid = true;

  nlohmann::json to_json() const;
};

// Sequential campaign over the first min(max_emails, |store|) emails; with
// threads > 1 the report is marked timing_valid = false.
LlmReport run_llm_eval(const LlmEndpointConfig& cfg, const EmailStore& emails,
                       const std::string& config_digest, int threads = 1,
                       bool include_subject = true);

// Side-by-side table; throws when the two reports cover different subsets.
// speedup = llm seconds per sample / classifier seconds per sample.
nlohmann::json compare_reports(const nlohmann::json& classifier_report,
                               const nlohmann::json& llm_report);

}  // namespace charphish
