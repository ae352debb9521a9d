#include "charphish/llm.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "httplib.h"

namespace charphish {

namespace {

size_t count_occurrences(const std::string& haystack, const std::string& needle) {
  size_t count = 0, pos = 0;
  while ((pos = haystack.find(needle, pos)) != std::string::npos) {
    ++count;
    pos += needle.size();
  }
  return count;
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string replace_once(std::string s, const std::string& slot, const std::string& value) {
  const size_t pos = s.find(slot);
  if (pos != std::string::npos) s.replace(pos, slot.size(), value);
  return s;
}

}  // namespace

void LlmEndpointConfig::validate() const {
  if (count_occurrences(prompt_template, "{email}") != 1) {
    throw std::invalid_argument("prompt template must contain {email} exactly once");
  }
  if (timeout_seconds <= 0) throw std::invalid_argument("timeout must be > 0");
  if (max_emails < 1) throw std::invalid_argument("max_emails must be >= 1");
  if (truncate_chars < 1) throw std::invalid_argument("truncate_chars must be >= 1");
}

const char* llm_label_name(LlmLabel l) {
  switch (l) {
    case LlmLabel::kClean: return "clean";
    case LlmLabel::kPhishing: return "phishing";
    case LlmLabel::kAbstain: return "abstain";
  }
  return "?";
}

LlmLabel parse_llm_reply(const std::string& reply) {
  const std::string text = lower(reply);
  const size_t p_phish = text.find("phishing");
  size_t p_clean = text.find("clean");
  const size_t p_legit = text.find("legitimate");
  if (p_legit < p_clean) p_clean = p_legit;
  if (p_phish == std::string::npos && p_clean == std::string::npos) return LlmLabel::kAbstain;
  return p_phish < p_clean ? LlmLabel::kPhishing : LlmLabel::kClean;
}

LlmResult classify_remote(const LlmEndpointConfig& cfg, const std::string& email_text) {
  cfg.validate();
  std::string body_text = email_text;
  if (static_cast<int>(body_text.size()) > cfg.truncate_chars) {
    body_text.resize(cfg.truncate_chars);
  }
  const std::string prompt = replace_once(cfg.prompt_template, "{email}", body_text);
  std::string request = cfg.request_template;
  request = replace_once(request, "{model}", nlohmann::json(cfg.model).dump());
  request = replace_once(request, "{prompt}", nlohmann::json(prompt).dump());

  LlmResult result;
  const auto t0 = std::chrono::steady_clock::now();
  httplib::Client client(cfg.base_url);
  const auto whole = static_cast<time_t>(cfg.timeout_seconds);
  const auto micros =
      static_cast<time_t>((cfg.timeout_seconds - static_cast<double>(whole)) * 1e6);
  client.set_connection_timeout(whole, micros);
  client.set_read_timeout(whole, micros);
  client.set_write_timeout(whole, micros);
  auto res = client.Post(cfg.path, request, "application/json");
  result.latency_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!res) {
    result.error = "request failed: " + httplib::to_string(res.error());
    return result;
  }
  if (res->status != 200) {
    result.error = "http status " + std::to_string(res->status);
    return result;
  }
  std::string reply_text = res->body;
  try {
    const nlohmann::json parsed = nlohmann::json::parse(res->body);
    const nlohmann::json::json_pointer ptr(cfg.response_pointer);
    if (parsed.contains(ptr) && parsed.at(ptr).is_string()) {
      reply_text = parsed.at(ptr).get<std::string>();
    }
  } catch (const nlohmann::json::exception&) {
    // keep the raw body for keyword search
  }
  result.raw_response = reply_text;
  result.label = parse_llm_reply(reply_text);
  return result;
}

nlohmann::json LlmReport::to_json() const {
  nlohmann::json per_sample = nlohmann::json::array();
  for (const auto& s : samples) {
    nlohmann::json j;
    j["id"] = s.id;
    j["truth"] = label_name(s.truth);
    j["predicted"] = llm_label_name(s.predicted);
    j["latency_seconds"] = s.latency_seconds;
    if (!s.error.empty()) j["error"] = s.error;
    per_sample.push_back(j);
  }
  nlohmann::json j;
  j["n_samples"] = n;
  j["correct"] = correct;
  j["abstained"] = abstained;
  j["accuracy"] = accuracy;
  j["seconds_per_sample"] = mean_latency_seconds;
  j["subset_digest"] = subset_digest;
  j["prompt_template"] = prompt_template;
  j["model"] = model;
  j["config_digest"] = config_digest;
  j["timing_valid"] = timing_valid;
  j["samples"] = per_sample;
  return j;
}

LlmReport run_llm_eval(const LlmEndpointConfig& cfg, const EmailStore& emails,
                       const std::string& config_digest, int threads, bool include_subject) {
  cfg.validate();
  const size_t n = std::min<size_t>(emails.size(), static_cast<size_t>(cfg.max_emails));
  if (n == 0) throw std::invalid_argument("llm eval: empty email set");

  EmailStore subset;
  subset.emails.assign(emails.emails.begin(), emails.emails.begin() + n);

  LlmReport report;
  report.samples.resize(n);
  report.subset_digest = store_ids_digest(subset);
  report.prompt_template = cfg.prompt_template;
  report.model = cfg.model;
  report.config_digest = config_digest;
  report.timing_valid = threads <= 1;

  const int n_threads = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  auto work = [&](int worker) {
    for (size_t i = worker; i < n; i += n_threads) {
      const Email& e = subset.emails[i];
      const LlmResult r = classify_remote(cfg, model_text(e, include_subject));
      LlmSample& s = report.samples[i];
      s.id = e.id;
      s.truth = e.label;
      s.predicted = r.label;
      s.latency_seconds = r.latency_seconds;
      s.error = r.error;
    }
  };
  if (n_threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_threads; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }

  double latency_sum = 0;
  for (const auto& s : report.samples) {
    latency_sum += s.latency_seconds;
    if (s.predicted == LlmLabel::kAbstain) {
      ++report.abstained;
    } else if (static_cast<int>(s.predicted) == static_cast<int>(s.truth)) {
      ++report.correct;
    }
  }
  report.n = static_cast<long long>(n);
  report.accuracy = static_cast<double>(report.correct) / static_cast<double>(n);
  report.mean_latency_seconds = latency_sum / static_cast<double>(n);
  return report;
}

nlohmann::json compare_reports(const nlohmann::json& classifier_report,
                               const nlohmann::json& llm_report) {
  const std::string d1 = classifier_report.at("subset_digest").get<std::string>();
  const std::string d2 = llm_report.at("subset_digest").get<std::string>();
  if (d1 != d2) {
    throw std::invalid_argument("compare: reports cover different email subsets");
  }
  const double t_cls = classifier_report.at("seconds_per_sample").get<double>();
  const double t_llm = llm_report.at("seconds_per_sample").get<double>();
  nlohmann::json out;
  out["subset_digest"] = d1;
  out["classifier"] = {{"model", classifier_report.value("model_kind", "classifier")},
                       {"accuracy", classifier_report.at("accuracy").get<double>()},
                       {"seconds_per_sample", t_cls}};
  out["llm"] = {{"model", llm_report.value("model", "llm")},
                {"accuracy", llm_report.at("accuracy").get<double>()},
                {"seconds_per_sample", t_llm}};
  out["accuracy_delta"] =
      classifier_report.at("accuracy").get<double>() - llm_report.at("accuracy").get<double>();
  out["speedup"] = t_cls > 0 ? t_llm / t_cls : 0.0;
  if (llm_report.contains("timing_valid")) out["timing_valid"] = llm_report.at("timing_valid");
  return out;
}

}  // namespace charphish
