#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <mutex>
#include <string>
#include <thread>

#include "httplib.h"

#include "charphish/llm.hpp"

using namespace charphish;

namespace {

// In-process endpoint implementing the generate API with a keyword rule:
// prompts mentioning "wire money" are phishing, prompts mentioning "confuse"
// get a useless reply, everything else is clean.
class FakeServer {
 public:
  FakeServer() {
    server_.Post("/api/generate", [this](const httplib::Request& req, httplib::Response& res) {
      {
        std::lock_guard<std::mutex> lock(mu_);
        last_body_ = req.body;
      }
      std::string reply = "clean";
      try {
        const auto j = nlohmann::json::parse(req.body);
        const std::string prompt = j.value("prompt", "");
        if (prompt.find("confuse") != std::string::npos) {
          reply = "I am not sure what this is.";
        } else if (prompt.find("wire money") != std::string::npos) {
          reply = "phishing";
        }
      } catch (...) {
        reply = "bad request";
      }
      res.set_content(nlohmann::json{{"response", reply}}.dump(), "application/json");
    });
    server_.Post("/plain", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("definitely PHISHING, do not trust it", "text/plain");
    });
    server_.Post("/nested", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(nlohmann::json{{"data", {{"text", "phishing"}}}}.dump(),
                      "application/json");
    });
    server_.Post("/broken", [](const httplib::Request&, httplib::Response& res) {
      res.status = 500;
      res.set_content("boom", "text/plain");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this]() { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~FakeServer() {
    server_.stop();
    thread_.join();
  }

  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  std::string last_body() {
    std::lock_guard<std::mutex> lock(mu_);
    return last_body_;
  }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::mutex mu_;
  std::string last_body_;
};

LlmEndpointConfig config_for(const FakeServer& server) {
  LlmEndpointConfig cfg;
  cfg.base_url = server.base_url();
  cfg.timeout_seconds = 5.0;
  return cfg;
}

Email make_email(const std::string& id, const std::string& body, Label label) {
  Email e;
  e.id = id;
  e.body = body;
  e.label = label;
  e.source = "test";
  return e;
}

}  // namespace

// ---------------------------------------------------------------------------
// Reply parsing
// ---------------------------------------------------------------------------

TEST_CASE("reply parsing keys on the earliest verdict keyword") {
  CHECK(parse_llm_reply("phishing") == LlmLabel::kPhishing);
  CHECK(parse_llm_reply("PHISHING!") == LlmLabel::kPhishing);
  CHECK(parse_llm_reply("clean") == LlmLabel::kClean);
  CHECK(parse_llm_reply("This looks Legitimate to me") == LlmLabel::kClean);
  CHECK(parse_llm_reply("clean, definitely not phishing") == LlmLabel::kClean);
  CHECK(parse_llm_reply("phishing, not a clean email") == LlmLabel::kPhishing);
  CHECK(parse_llm_reply("It is legitimate rather than phishing") == LlmLabel::kClean);
  CHECK(parse_llm_reply("no verdict here") == LlmLabel::kAbstain);
  CHECK(parse_llm_reply("") == LlmLabel::kAbstain);
}

TEST_CASE("label names cover all verdicts") {
  CHECK(std::string(llm_label_name(LlmLabel::kClean)) == "clean");
  CHECK(std::string(llm_label_name(LlmLabel::kPhishing)) == "phishing");
  CHECK(std::string(llm_label_name(LlmLabel::kAbstain)) == "abstain");
}

TEST_CASE("endpoint configs are validated") {
  LlmEndpointConfig cfg;
  cfg.prompt_template = "no slot at all";
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = LlmEndpointConfig{};
  cfg.prompt_template = "{email} twice {email}";
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = LlmEndpointConfig{};
  cfg.timeout_seconds = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = LlmEndpointConfig{};
  cfg.max_emails = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = LlmEndpointConfig{};
  cfg.truncate_chars = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Single round trips against the fake server
// ---------------------------------------------------------------------------

TEST_CASE("remote classification round-trips through the endpoint") {
  FakeServer server;
  const auto cfg = config_for(server);

  const auto phish = classify_remote(cfg, "please wire money to this account");
  CHECK(phish.label == LlmLabel::kPhishing);
  CHECK(phish.raw_response == "phishing");
  CHECK(phish.error.empty());
  CHECK(phish.latency_seconds >= 0.0);

  const auto clean = classify_remote(cfg, "lunch at noon?");
  CHECK(clean.label == LlmLabel::kClean);

  // the request body is real JSON with the model and prompt filled in
  const auto body = nlohmann::json::parse(server.last_body());
  CHECK(body.at("model") == cfg.model);
  CHECK(body.at("stream") == false);
  const std::string prompt = body.at("prompt").get<std::string>();
  CHECK(prompt.find("lunch at noon?") != std::string::npos);
  CHECK(prompt.find("Classify the following email") == 0);
}

TEST_CASE("long emails are truncated before prompting") {
  FakeServer server;
  auto cfg = config_for(server);
  cfg.truncate_chars = 10;
  const std::string text = std::string(50, 'a') + " wire money";
  const auto r = classify_remote(cfg, text);
  CHECK(r.label == LlmLabel::kClean);  // the needle was cut off
  const auto body = nlohmann::json::parse(server.last_body());
  const std::string prompt = body.at("prompt").get<std::string>();
  CHECK(prompt.find("aaaaaaaaaaa") == std::string::npos);  // at most 10 a's survive
}

TEST_CASE("alternate response shapes are supported") {
  FakeServer server;

  auto nested = config_for(server);
  nested.path = "/nested";
  nested.response_pointer = "/data/text";
  CHECK(classify_remote(nested, "x").label == LlmLabel::kPhishing);

  // non-JSON replies fall back to keyword search over the raw body
  auto plain = config_for(server);
  plain.path = "/plain";
  const auto r = classify_remote(plain, "x");
  CHECK(r.label == LlmLabel::kPhishing);
  CHECK(r.raw_response.find("do not trust") != std::string::npos);
}

TEST_CASE("transport failures become abstain records, not exceptions") {
  FakeServer server;

  auto broken = config_for(server);
  broken.path = "/broken";
  const auto r1 = classify_remote(broken, "x");
  CHECK(r1.label == LlmLabel::kAbstain);
  CHECK(r1.error == "http status 500");

  LlmEndpointConfig dead;
  dead.base_url = "http://127.0.0.1:1";
  dead.timeout_seconds = 2.0;
  const auto r2 = classify_remote(dead, "x");
  CHECK(r2.label == LlmLabel::kAbstain);
  CHECK_FALSE(r2.error.empty());
}

// ---------------------------------------------------------------------------
// Campaigns
// ---------------------------------------------------------------------------

TEST_CASE("campaigns score every email and count abstentions") {
  FakeServer server;
  const auto cfg = config_for(server);

  EmailStore store;
  store.emails.push_back(make_email("p1", "wire money now", Label::kPhishing));
  store.emails.push_back(make_email("c1", "meeting notes attached", Label::kClean));
  store.emails.push_back(make_email("p2", "you must wire money fast", Label::kPhishing));
  store.emails.push_back(make_email("c2", "please confuse the reviewer", Label::kClean));

  const auto report = run_llm_eval(cfg, store, "digest-1");
  CHECK(report.n == 4);
  CHECK(report.correct == 3);
  CHECK(report.abstained == 1);
  CHECK(report.accuracy == doctest::Approx(0.75));
  CHECK(report.subset_digest == store_ids_digest(store));
  CHECK(report.timing_valid);
  REQUIRE(report.samples.size() == 4);
  CHECK(report.samples[0].predicted == LlmLabel::kPhishing);
  CHECK(report.samples[1].predicted == LlmLabel::kClean);
  CHECK(report.samples[3].predicted == LlmLabel::kAbstain);

  const auto j = report.to_json();
  CHECK(j.at("n_samples") == 4);
  CHECK(j.at("abstained") == 1);
  CHECK(j.at("model") == cfg.model);
  CHECK(j.at("samples").size() == 4);
  CHECK(j.at("samples")[0].at("truth") == "phishing");
  CHECK(j.at("samples")[0].at("predicted") == "phishing");
  CHECK_FALSE(j.at("samples")[0].contains("error"));
}

TEST_CASE("campaigns honor the email cap and thread count") {
  FakeServer server;
  auto cfg = config_for(server);
  cfg.max_emails = 2;

  EmailStore store;
  for (int i = 0; i < 5; ++i) {
    store.emails.push_back(make_email("e" + std::to_string(i), "wire money", Label::kPhishing));
  }
  const auto capped = run_llm_eval(cfg, store, "d");
  CHECK(capped.n == 2);
  EmailStore first_two;
  first_two.emails.assign(store.emails.begin(), store.emails.begin() + 2);
  CHECK(capped.subset_digest == store_ids_digest(first_two));

  cfg.max_emails = 1000;
  const auto threaded = run_llm_eval(cfg, store, "d", /*threads=*/3);
  CHECK(threaded.n == 5);
  CHECK(threaded.correct == 5);
  CHECK_FALSE(threaded.timing_valid);

  CHECK_THROWS_AS(run_llm_eval(cfg, EmailStore{}, "d"), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Comparison
// ---------------------------------------------------------------------------

TEST_CASE("comparison reports pair accuracy with relative speed") {
  nlohmann::json cls;
  cls["subset_digest"] = "same";
  cls["accuracy"] = 0.95;
  cls["seconds_per_sample"] = 0.002;
  cls["model_kind"] = "charcnn";
  nlohmann::json llm;
  llm["subset_digest"] = "same";
  llm["accuracy"] = 0.80;
  llm["seconds_per_sample"] = 1.0;
  llm["model"] = "llama3.2";
  llm["timing_valid"] = true;

  const auto cmp = compare_reports(cls, llm);
  CHECK(cmp.at("accuracy_delta").get<double>() == doctest::Approx(0.15));
  CHECK(cmp.at("speedup").get<double>() == doctest::Approx(500.0));
  CHECK(cmp.at("classifier").at("model") == "charcnn");
  CHECK(cmp.at("llm").at("model") == "llama3.2");
  CHECK(cmp.at("timing_valid") == true);

  llm["subset_digest"] = "different";
  CHECK_THROWS_AS(compare_reports(cls, llm), std::invalid_argument);

  llm["subset_digest"] = "same";
  cls["seconds_per_sample"] = 0.0;
  CHECK(compare_reports(cls, llm).at("speedup").get<double>() == 0.0);
}
