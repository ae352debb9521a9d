#pragma once

#include <array>
#include <string>
#include <vector>

#include "charphish/attack.hpp"
#include "charphish/corpus.hpp"
#include "charphish/models.hpp"

#include <nlohmann/json.hpp>

namespace charphish {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 64;
  double learning_rate = 0.001;
  uint64_t seed = 42;
  bool include_subject = true;
  // adversarial augmentation (train_adversarial only)
  double adv_fraction = 0.4;
  double adv_epsilon = 0.2;
  bool adv_guided = false;

  void validate() const;
};

// rows = true label (0 clean, 1 phishing), cols = predicted label
struct Confusion {
  std::array<std::array<long long, 2>, 2> m{};
  long long total() const { return m[0][0] + m[0][1] + m[1][0] + m[1][1]; }
};

struct ClassMetrics {
  double precision = 0, recall = 0, f1 = 0;
  long long support = 0;
};

struct MetricBundle {
  double accuracy = 0;
  std::array<ClassMetrics, 2> per_class{};
  double precision_macro = 0, recall_macro = 0, f1_macro = 0;
  double precision_weighted = 0, recall_weighted = 0, f1_weighted = 0;
};

// Per-class precision/recall/F1 with the 0/0 -> 0 convention, macro
// (unweighted mean) and weighted (true-class-support mean) aggregates.
MetricBundle metrics(const Confusion& c);

struct EvalReport {
  std::string model_kind;
  std::string scenario;  // clean/clean | clean/adv | adv/adv
  std::string checkpoint_used;  // final | best_val
  std::string config_digest;
  std::string subset_digest;  // hash over evaluated email ids
  long long n_samples = 0;
  Confusion confusion;
  MetricBundle scores;
  double total_seconds = 0;
  double seconds_per_sample = 0;

  nlohmann::json to_json() const;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0;
  double val_accuracy = 0;
  double seconds = 0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  int best_epoch = -1;  // 1-based; -1 when no validation set was given
  double best_val_accuracy = 0;
  std::vector<std::vector<float>> best_values;  // weights at the best epoch
};

std::vector<EncodedEmail> encode_store(const EmailStore& store, int t_max,
                                       bool include_subject);

// Minibatch training with one optimizer step per batch (gradient averaged
// over the batch), a fresh seeded shuffle each epoch, and per-epoch
// validation accuracy. The model keeps its final weights; the best
// validation-epoch weights ride along in the result. A non-finite loss
// aborts with the learning rate and batch index in the message.
TrainResult train(Model<float>& model, const EmailStore& train_set, const EmailStore& val_set,
                  const TrainConfig& cfg);

// Same loop over an augmented train set: a seeded sample of the phishing
// emails is perturbed (epsilon = cfg.adv_epsilon) and the copies are added
// alongside the originals. Validation and test data are never touched.
TrainResult train_adversarial(Model<float>& model, const EmailStore& train_set,
                              const EmailStore& val_set, const TrainConfig& cfg,
                              const ScoreFn& oracle = {});

void save_epoch_log_csv(const std::string& path, const std::vector<EpochLog>& log);

struct EvalConfig {
  bool include_subject = true;
  int threads = 1;  // timing is honest only at 1
  std::string checkpoint_used = "final";
  std::string config_digest;
};

// Argmax predictions over the whole set, with wall-clock forward timing at
// batch size 1.
EvalReport evaluate(Model<float>& model, const EmailStore& test, const std::string& scenario,
                    const EvalConfig& cfg);

struct ScenarioConfig {
  std::vector<std::string> model_kinds = {"charcnn", "chargru", "charbilstm"};
  bool desk_scale = true;
  TrainConfig train_cfg;
  double test_epsilon = 0.1;
  bool test_guided = false;  // adversarial test set built in random mode by default
  std::string eval_checkpoint = "best_val";  // or "final"
  std::string config_digest;
};

// The three published scenarios per model: clean-trained/clean-test,
// clean-trained/adversarial-test, adversarially-trained/adversarial-test.
// The adversarial test set is built once and shared so both training
// regimes face identical perturbations.
nlohmann::json run_scenarios(const EmailStore& train_set, const EmailStore& val_set,
                             const EmailStore& test_set, const ScenarioConfig& cfg);

// Fixed-width text rendering of a run_scenarios() report.
std::string format_report_table(const nlohmann::json& scenarios_json);

// Copy with every wall-clock field removed, for determinism comparisons.
nlohmann::json strip_timing(nlohmann::json j);

}  // namespace charphish
