#include "charphish/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "charphish/hash.hpp"
#include "charphish/nn/optimizer.hpp"

namespace charphish {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (learning_rate < 0) throw std::invalid_argument("learning_rate must be >= 0");
  if (adv_fraction <= 0 || adv_fraction > 1) {
    throw std::invalid_argument("adv_fraction must be in (0,1]");
  }
  if (adv_epsilon <= 0 || adv_epsilon > 1) {
    throw std::invalid_argument("adv_epsilon must be in (0,1]");
  }
}

MetricBundle metrics(const Confusion& c) {
  const long long total = c.total();
  if (total <= 0) throw std::invalid_argument("metrics: empty confusion matrix");
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      if (c.m[i][j] < 0) throw std::invalid_argument("metrics: negative count");
    }
  }
  MetricBundle b;
  b.accuracy = static_cast<double>(c.m[0][0] + c.m[1][1]) / static_cast<double>(total);
  for (int k = 0; k < 2; ++k) {
    const long long tp = c.m[k][k];
    const long long fp = c.m[1 - k][k];
    const long long fn = c.m[k][1 - k];
    ClassMetrics& cm = b.per_class[k];
    cm.support = c.m[k][0] + c.m[k][1];
    cm.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    cm.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    cm.f1 = cm.precision + cm.recall > 0
                ? 2.0 * cm.precision * cm.recall / (cm.precision + cm.recall)
                : 0.0;
  }
  b.precision_macro = (b.per_class[0].precision + b.per_class[1].precision) / 2.0;
  b.recall_macro = (b.per_class[0].recall + b.per_class[1].recall) / 2.0;
  b.f1_macro = (b.per_class[0].f1 + b.per_class[1].f1) / 2.0;
  const double w0 = static_cast<double>(b.per_class[0].support) / static_cast<double>(total);
  const double w1 = static_cast<double>(b.per_class[1].support) / static_cast<double>(total);
  b.precision_weighted = w0 * b.per_class[0].precision + w1 * b.per_class[1].precision;
  b.recall_weighted = w0 * b.per_class[0].recall + w1 * b.per_class[1].recall;
  b.f1_weighted = w0 * b.per_class[0].f1 + w1 * b.per_class[1].f1;
  return b;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["model_kind"] = model_kind;
  j["scenario"] = scenario;
  j["checkpoint_used"] = checkpoint_used;
  j["config_digest"] = config_digest;
  j["subset_digest"] = subset_digest;
  j["n_samples"] = n_samples;
  j["confusion"] = {{confusion.m[0][0], confusion.m[0][1]},
                    {confusion.m[1][0], confusion.m[1][1]}};
  j["accuracy"] = scores.accuracy;
  j["precision"] = {{"weighted", scores.precision_weighted}, {"macro", scores.precision_macro}};
  j["recall"] = {{"weighted", scores.recall_weighted}, {"macro", scores.recall_macro}};
  j["f1"] = {{"weighted", scores.f1_weighted}, {"macro", scores.f1_macro}};
  j["per_class"] = {{"clean",
                     {{"precision", scores.per_class[0].precision},
                      {"recall", scores.per_class[0].recall},
                      {"f1", scores.per_class[0].f1},
                      {"support", scores.per_class[0].support}}},
                    {"phishing",
                     {{"precision", scores.per_class[1].precision},
                      {"recall", scores.per_class[1].recall},
                      {"f1", scores.per_class[1].f1},
                      {"support", scores.per_class[1].support}}}};
  j["total_seconds"] = total_seconds;
  j["seconds_per_sample"] = seconds_per_sample;
  return j;
}

std::vector<EncodedEmail> encode_store(const EmailStore& store, int t_max,
                                       bool include_subject) {
  std::vector<EncodedEmail> out;
  out.reserve(store.size());
  for (const auto& e : store.emails) {
    EncodedEmail enc = encode(model_text(e, include_subject), t_max);
    enc.label_onehot = one_hot(e.label);
    enc.email_id = e.id;
    out.push_back(std::move(enc));
  }
  return out;
}

namespace {

double validation_accuracy(Model<float>& model, const std::vector<EncodedEmail>& val) {
  if (val.empty()) return 0.0;
  long long correct = 0;
  for (const auto& enc : val) {
    const auto r = model.forward(enc);
    const int pred = r.probs[1] > r.probs[0] ? 1 : 0;
    const int truth = enc.label_onehot[1] > 0.5f ? 1 : 0;
    if (pred == truth) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(val.size());
}

TrainResult train_encoded(Model<float>& model, const std::vector<EncodedEmail>& train_enc,
                          const std::vector<EncodedEmail>& val_enc, const TrainConfig& cfg) {
  cfg.validate();
  if (train_enc.empty()) throw std::invalid_argument("train: empty training set");
  auto params = model.params();
  auto opt = nn::make_optimizer<float>(model.spec().optimizer, cfg.learning_rate);
  Rng dropout_rng(derive_seed(cfg.seed, "dropout"));

  TrainResult result;
  std::vector<size_t> order(train_enc.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = Clock::now();
    Rng shuffle_rng(derive_seed(cfg.seed, "epoch-" + std::to_string(epoch)));
    shuffle_rng.shuffle(order);
    double loss_sum = 0;
    const size_t n = order.size();
    size_t batch_index = 0;
    for (size_t start = 0; start < n; start += cfg.batch_size, ++batch_index) {
      const size_t end = std::min(n, start + cfg.batch_size);
      const float inv_b = 1.0f / static_cast<float>(end - start);
      model.zero_grads();
      double batch_loss = 0;
      for (size_t k = start; k < end; ++k) {
        const EncodedEmail& enc = train_enc[order[k]];
        const auto r = model.forward(enc, /*training=*/true, &dropout_rng);
        batch_loss += nn::cross_entropy2(r.probs, enc.label_onehot);
        std::array<float, 2> dlogits = nn::softmax_xent_grad(r.probs, enc.label_onehot);
        dlogits[0] *= inv_b;
        dlogits[1] *= inv_b;
        model.backward_from_logits(dlogits);
      }
      if (!std::isfinite(batch_loss)) {
        throw std::runtime_error("training diverged (non-finite loss) at lr=" +
                                 std::to_string(cfg.learning_rate) + ", epoch " +
                                 std::to_string(epoch) + ", batch " +
                                 std::to_string(batch_index));
      }
      loss_sum += batch_loss;
      opt->step(params);
    }
    model.zero_grads();

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(n);
    log.val_accuracy = validation_accuracy(model, val_enc);
    log.seconds = seconds_since(t0);
    result.log.push_back(log);
    if (!val_enc.empty() &&
        (result.best_epoch < 0 || log.val_accuracy > result.best_val_accuracy)) {
      result.best_epoch = epoch;
      result.best_val_accuracy = log.val_accuracy;
      result.best_values = model.snapshot_values();
    }
  }
  if (result.best_epoch < 0) result.best_values = model.snapshot_values();
  return result;
}

}  // namespace

TrainResult train(Model<float>& model, const EmailStore& train_set, const EmailStore& val_set,
                  const TrainConfig& cfg) {
  const int t_max = model.spec().t_max;
  return train_encoded(model, encode_store(train_set, t_max, cfg.include_subject),
                       encode_store(val_set, t_max, cfg.include_subject), cfg);
}

TrainResult train_adversarial(Model<float>& model, const EmailStore& train_set,
                              const EmailStore& val_set, const TrainConfig& cfg,
                              const ScoreFn& oracle) {
  cfg.validate();
  PerturbOptions opt;
  opt.fraction = cfg.adv_fraction;
  opt.epsilon = cfg.adv_epsilon;
  opt.seed = derive_seed(cfg.seed, "augment");
  opt.guided = cfg.adv_guided;
  opt.retain_originals = true;
  const EmailStore augmented = perturb_corpus(train_set, opt, oracle, cfg.include_subject);
  return train(model, augmented, val_set, cfg);
}

void save_epoch_log_csv(const std::string& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "epoch,train_loss,val_accuracy,seconds\n";
  char line[128];
  for (const auto& e : log) {
    std::snprintf(line, sizeof(line), "%d,%.6f,%.6f,%.3f\n", e.epoch, e.train_loss,
                  e.val_accuracy, e.seconds);
    out << line;
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

EvalReport evaluate(Model<float>& model, const EmailStore& test, const std::string& scenario,
                    const EvalConfig& cfg) {
  if (test.emails.empty()) throw std::invalid_argument("evaluate: empty test set");
  const auto encoded = encode_store(test, model.spec().t_max, cfg.include_subject);

  std::vector<int> preds(encoded.size());
  const auto t0 = Clock::now();
  if (cfg.threads <= 1) {
    for (size_t i = 0; i < encoded.size(); ++i) {
      const auto r = model.forward(encoded[i]);
      preds[i] = r.probs[1] > r.probs[0] ? 1 : 0;
    }
  } else {
    const int n_threads = std::min<int>(cfg.threads, static_cast<int>(encoded.size()));
    std::vector<std::thread> pool;
    for (int w = 0; w < n_threads; ++w) {
      pool.emplace_back([&, w]() {
        Model<float> local = model.clone();
        for (size_t i = w; i < encoded.size(); i += n_threads) {
          const auto r = local.forward(encoded[i]);
          preds[i] = r.probs[1] > r.probs[0] ? 1 : 0;
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  const double total_seconds = seconds_since(t0);

  EvalReport rep;
  rep.model_kind = model.spec().kind;
  rep.scenario = scenario;
  rep.checkpoint_used = cfg.checkpoint_used;
  rep.config_digest = cfg.config_digest;
  rep.subset_digest = store_ids_digest(test);
  rep.n_samples = static_cast<long long>(encoded.size());
  for (size_t i = 0; i < encoded.size(); ++i) {
    const int truth = encoded[i].label_onehot[1] > 0.5f ? 1 : 0;
    ++rep.confusion.m[truth][preds[i]];
  }
  rep.scores = metrics(rep.confusion);
  rep.total_seconds = total_seconds;
  rep.seconds_per_sample = total_seconds / static_cast<double>(encoded.size());
  return rep;
}

nlohmann::json run_scenarios(const EmailStore& train_set, const EmailStore& val_set,
                             const EmailStore& test_set, const ScenarioConfig& cfg) {
  cfg.train_cfg.validate();
  // One shared adversarial test set: every phishing email perturbed, clean
  // emails untouched, ids preserved.
  PerturbOptions adv_opt;
  adv_opt.fraction = 1.0;
  adv_opt.epsilon = cfg.test_epsilon;
  adv_opt.seed = derive_seed(cfg.train_cfg.seed, "adv-test");
  adv_opt.guided = false;
  adv_opt.retain_originals = false;
  const EmailStore adv_test = perturb_corpus(test_set, adv_opt);

  EvalConfig ecfg;
  ecfg.include_subject = cfg.train_cfg.include_subject;
  ecfg.threads = 1;
  ecfg.config_digest = cfg.config_digest;
  ecfg.checkpoint_used = cfg.eval_checkpoint;
  const bool use_best = cfg.eval_checkpoint == "best_val";

  nlohmann::json reports = nlohmann::json::array();
  nlohmann::json training = nlohmann::json::object();
  for (const std::string& kind : cfg.model_kinds) {
    const NetworkSpec spec =
        cfg.desk_scale ? NetworkSpec::desk_config(kind) : NetworkSpec::table_config(kind);

    auto eval_with = [&](Model<float>& trained, const TrainResult& tr, const EmailStore& set,
                         const std::string& scenario) {
      if (use_best) {
        Model<float> best = trained.clone();
        best.restore_values(tr.best_values);
        reports.push_back(evaluate(best, set, scenario, ecfg).to_json());
      } else {
        reports.push_back(evaluate(trained, set, scenario, ecfg).to_json());
      }
    };

    {
      Model<float> model(spec, derive_seed(cfg.train_cfg.seed, kind + "-clean"));
      const TrainResult tr = train(model, train_set, val_set, cfg.train_cfg);
      training[kind]["clean"] = {{"best_epoch", tr.best_epoch},
                                 {"best_val_accuracy", tr.best_val_accuracy},
                                 {"final_train_loss", tr.log.back().train_loss}};
      eval_with(model, tr, test_set, "clean/clean");
      eval_with(model, tr, adv_test, "clean/adv");
    }
    {
      TrainConfig adv_cfg = cfg.train_cfg;
      Model<float> model(spec, derive_seed(adv_cfg.seed, kind + "-adv"));
      const TrainResult tr = train_adversarial(model, train_set, val_set, adv_cfg);
      training[kind]["adversarial"] = {{"best_epoch", tr.best_epoch},
                                       {"best_val_accuracy", tr.best_val_accuracy},
                                       {"final_train_loss", tr.log.back().train_loss}};
      eval_with(model, tr, adv_test, "adv/adv");
    }
  }

  nlohmann::json out;
  out["config_digest"] = cfg.config_digest;
  out["desk_scale"] = cfg.desk_scale;
  out["seed"] = cfg.train_cfg.seed;
  out["epochs"] = cfg.train_cfg.epochs;
  out["test_epsilon"] = cfg.test_epsilon;
  out["test_mode"] = cfg.test_guided ? "guided" : "random";
  out["eval_checkpoint"] = cfg.eval_checkpoint;
  out["adv_test_subset_digest"] = store_ids_digest(adv_test);
  out["training"] = training;
  out["reports"] = reports;
  return out;
}

std::string format_report_table(const nlohmann::json& scenarios_json) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-12s %-12s %9s %8s %8s %8s %8s %8s %8s %12s\n", "model",
                "scenario", "accuracy", "prec(w)", "prec(m)", "rec(w)", "rec(m)", "f1(w)",
                "f1(m)", "s/sample");
  out << line;
  out << std::string(98, '-') << "\n";
  for (const auto& r : scenarios_json.at("reports")) {
    std::snprintf(line, sizeof(line),
                  "%-12s %-12s %9.5f %8.5f %8.5f %8.5f %8.5f %8.5f %8.5f %12.6f\n",
                  r.at("model_kind").get<std::string>().c_str(),
                  r.at("scenario").get<std::string>().c_str(), r.at("accuracy").get<double>(),
                  r.at("precision").at("weighted").get<double>(),
                  r.at("precision").at("macro").get<double>(),
                  r.at("recall").at("weighted").get<double>(),
                  r.at("recall").at("macro").get<double>(),
                  r.at("f1").at("weighted").get<double>(), r.at("f1").at("macro").get<double>(),
                  r.at("seconds_per_sample").get<double>());
    out << line;
  }
  return out.str();
}

nlohmann::json strip_timing(nlohmann::json j) {
  if (j.is_object()) {
    j.erase("seconds");
    j.erase("total_seconds");
    j.erase("seconds_per_sample");
    for (auto& [key, value] : j.items()) value = strip_timing(value);
  } else if (j.is_array()) {
    for (auto& value : j) value = strip_timing(value);
  }
  return j;
}

}  // namespace charphish
