// charphish: train, attack, defend, and explain character-level phishing
// email classifiers from one executable.
//
// Settings resolve as: command-line flag > --section.key override > config
// file ([section] key = value, via --config or $CHARPHISH_CONFIG) > built-in
// default. The resolved configuration's digest is embedded in every
// artifact this tool writes.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "charphish/attack.hpp"
#include "charphish/config.hpp"
#include "charphish/corpus.hpp"
#include "charphish/encoder.hpp"
#include "charphish/fixtures.hpp"
#include "charphish/gradcam.hpp"
#include "charphish/llm.hpp"
#include "charphish/models.hpp"
#include "charphish/pipeline.hpp"

namespace fs = std::filesystem;
using namespace charphish;

namespace {

struct PreParse {
  RunConfig config;
  std::vector<std::string> args;  // remaining argv for CLI11, in original order
};

// Pulls out --config and all --section.key overrides before CLI11 sees the
// command line; CLI11 handles everything else.
PreParse preprocess(int argc, char** argv) {
  std::vector<std::string> raw(argv + 1, argv + argc);
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;
  std::vector<std::string> rest;
  for (size_t i = 0; i < raw.size(); ++i) {
    const std::string& a = raw[i];
    auto take_value = [&](const std::string& flag) -> std::string {
      const size_t eq = a.find('=');
      if (eq != std::string::npos) return a.substr(eq + 1);
      if (i + 1 >= raw.size()) {
        throw std::runtime_error("flag " + flag + " expects a value");
      }
      return raw[++i];
    };
    if (a == "--config" || a.rfind("--config=", 0) == 0) {
      config_path = take_value("--config");
      continue;
    }
    if (a.rfind("--", 0) == 0 && a.size() > 2) {
      const size_t eq = a.find('=');
      const std::string name = a.substr(2, eq == std::string::npos ? a.npos : eq - 2);
      if (name.find('.') != std::string::npos) {
        overrides.emplace_back(name, take_value("--" + name));
        continue;
      }
    }
    rest.push_back(a);
  }
  PreParse pre;
  if (config_path.empty()) {
    if (const char* env = std::getenv("CHARPHISH_CONFIG"); env != nullptr && *env != '\0') {
      config_path = env;
    }
  }
  if (!config_path.empty()) pre.config = RunConfig::load_file(config_path);
  for (const auto& [k, v] : overrides) pre.config.set(k, v);
  pre.args = std::move(rest);
  return pre;
}

std::string read_text_input(const std::string& path) {
  if (path == "-") {
    std::ostringstream ss;
    ss << std::cin.rdbuf();
    return ss.str();
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open input: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

Label parse_label_arg(const std::string& s) {
  if (s == "clean") return Label::kClean;
  if (s == "phishing") return Label::kPhishing;
  throw std::runtime_error("label must be clean or phishing, got: " + s);
}

ScoreFn model_oracle(std::shared_ptr<Model<float>> model) {
  return [model = std::move(model)](const std::string& text) {
    return static_cast<double>(model->forward(encode(text, model->spec().t_max)).probs[1]);
  };
}

}  // namespace

int main(int argc, char** argv) {
  PreParse pre;
  try {
    pre = preprocess(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  RunConfig& cfg = pre.config;

  CLI::App app{"charphish: character-level phishing classifiers - train, attack, defend, explain"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  // --config / --section.key are consumed in preprocessing; listed for help.
  std::string ignored;
  app.add_option("--config", ignored,
                 "Config file (INI-style [section] key=value); or $CHARPHISH_CONFIG")
      ->group("Configuration");

  int exit_code = 0;

  // ---- synth ---------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled email store");
  {
    const SyntheticSpec defaults;
    auto n = std::make_shared<int>(static_cast<int>(cfg.get_int("synth.n", defaults.n_samples)));
    auto t = std::make_shared<int>(static_cast<int>(cfg.get_int("synth.t", defaults.t)));
    auto noise = std::make_shared<double>(cfg.get_double("synth.noise", defaults.noise_rate));
    auto seed = std::make_shared<uint64_t>(cfg.get_seed("synth.seed", defaults.seed));
    auto out = std::make_shared<std::string>(cfg.get("synth.out", "synthetic.jsonl"));
    synth->add_option("--n", *n, "Email count");
    synth->add_option("--t", *t, "Average body length");
    synth->add_option("--noise", *noise, "Per-character noise rate");
    synth->add_option("--seed", *seed, "Generator seed");
    synth->add_option("--out", *out, "Output store path");
    synth->callback([=]() {
      SyntheticSpec spec;
      spec.n_samples = *n;
      spec.t = *t;
      spec.noise_rate = *noise;
      spec.seed = *seed;
      const EmailStore store = generate_synthetic(spec);
      store.save_jsonl(*out);
      std::cout << "wrote " << store.size() << " emails (" << store.count(Label::kClean)
                << " clean, " << store.count(Label::kPhishing) << " phishing) to " << *out
                << "\n";
    });
  }

  // ---- ingest --------------------------------------------------------------
  auto* ingest_cmd = app.add_subcommand("ingest", "Parse raw email files into the store");
  {
    auto format = std::make_shared<std::string>(cfg.get("ingest.format", "jsonl"));
    auto input = std::make_shared<std::string>("");
    auto source = std::make_shared<std::string>(cfg.get("ingest.source", ""));
    auto label = std::make_shared<std::string>(cfg.get("ingest.label", "phishing"));
    auto store_path = std::make_shared<std::string>(cfg.get("paths.store", "store.jsonl"));
    ingest_cmd->add_option("--format", *format, "jsonl | csv | eml | mbox")
        ->check(CLI::IsMember({"jsonl", "csv", "eml", "mbox"}));
    ingest_cmd->add_option("--input", *input, "File (or directory for eml)")->required();
    ingest_cmd->add_option("--source", *source, "Source tag recorded on each email");
    ingest_cmd->add_option("--label", *label, "Label for unlabeled formats (eml, mbox)")
        ->check(CLI::IsMember({"clean", "phishing"}));
    ingest_cmd->add_option("--store", *store_path, "Store to create or append to");
    ingest_cmd->callback([=]() {
      EmailStore store;
      if (fs::exists(*store_path)) store = EmailStore::load_jsonl(*store_path);
      const std::string tag = source->empty() ? *format : *source;
      const IngestStats stats =
          ingest(store, *format, *input, tag, parse_label_arg(*label));
      store.save_jsonl(*store_path);
      std::cout << "parsed " << stats.parsed << ", malformed " << stats.malformed
                << ", store now " << store.size() << " emails\n";
    });
  }

  // ---- dedupe --------------------------------------------------------------
  auto* dedupe_cmd = app.add_subcommand("dedupe", "Drop duplicate bodies from the store");
  {
    auto store_path = std::make_shared<std::string>(cfg.get("paths.store", "store.jsonl"));
    dedupe_cmd->add_option("--store", *store_path, "Store to rewrite in place");
    dedupe_cmd->callback([=]() {
      EmailStore store = EmailStore::load_jsonl(*store_path);
      const DedupResult r = deduplicate(store);
      store.save_jsonl(*store_path);
      std::cout << "removed " << r.removed << " duplicates (" << r.label_conflicts
                << " label conflicts), " << store.size() << " emails remain\n";
    });
  }

  // ---- split ---------------------------------------------------------------
  auto* split_cmd = app.add_subcommand("split", "Stratified train/val/test split");
  {
    auto store_path = std::make_shared<std::string>(cfg.get("paths.store", "store.jsonl"));
    auto out_dir = std::make_shared<std::string>(cfg.get("split.out_dir", "splits"));
    auto train_f = std::make_shared<double>(cfg.get_double("split.train", 0.7));
    auto val_f = std::make_shared<double>(cfg.get_double("split.val", 0.15));
    auto test_f = std::make_shared<double>(cfg.get_double("split.test", 0.15));
    auto seed = std::make_shared<uint64_t>(cfg.get_seed("split.seed", 42));
    split_cmd->add_option("--store", *store_path, "Input store");
    split_cmd->add_option("--out-dir", *out_dir, "Directory for train/val/test stores");
    split_cmd->add_option("--train", *train_f, "Train fraction");
    split_cmd->add_option("--val", *val_f, "Validation fraction");
    split_cmd->add_option("--test", *test_f, "Test fraction");
    split_cmd->add_option("--seed", *seed, "Shuffle seed");
    split_cmd->callback([=, &cfg]() {
      const EmailStore store = EmailStore::load_jsonl(*store_path);
      SplitResult split = stratified_split(store, *train_f, *val_f, *test_f, *seed);
      fs::create_directories(*out_dir);
      split.train.save_jsonl(*out_dir + "/train.jsonl");
      split.val.save_jsonl(*out_dir + "/val.jsonl");
      split.test.save_jsonl(*out_dir + "/test.jsonl");
      RunConfig resolved = cfg;
      resolved.set("split.train", std::to_string(*train_f));
      resolved.set("split.val", std::to_string(*val_f));
      resolved.set("split.test", std::to_string(*test_f));
      resolved.set("split.seed", std::to_string(*seed));
      split.manifest["config_digest"] = resolved.digest();
      split.manifest["config"] = resolved.to_json();
      write_json_file(*out_dir + "/manifest.json", split.manifest);
      std::cout << "split " << store.size() << " -> train " << split.train.size() << ", val "
                << split.val.size() << ", test " << split.test.size() << " (manifest in "
                << *out_dir << "/manifest.json)\n";
    });
  }

  // ---- train / train-adv ---------------------------------------------------
  struct TrainArgs {
    std::string train_path, val_path, model_kind, scale, out_dir;
    int epochs, batch_size, t_max;
    double lr;
    uint64_t seed;
    bool include_subject;
    double adv_fraction, adv_epsilon;
    std::string adv_mode, adv_oracle_ckpt;
  };
  auto add_train_options = [&cfg](CLI::App* cmd, std::shared_ptr<TrainArgs> a) {
    a->train_path = cfg.get("paths.train", "splits/train.jsonl");
    a->val_path = cfg.get("paths.val", "splits/val.jsonl");
    a->model_kind = cfg.get("train.model", "chargru");
    a->scale = cfg.get("train.scale", "table");
    a->out_dir = cfg.get("paths.checkpoint_dir", "checkpoints");
    a->epochs = static_cast<int>(cfg.get_int("train.epochs", 30));
    a->batch_size = static_cast<int>(cfg.get_int("train.batch_size", 64));
    a->lr = cfg.get_double("train.learning_rate", 0.001);
    a->seed = cfg.get_seed("train.seed", 42);
    a->t_max = static_cast<int>(cfg.get_int("encoder.t_max", 0));  // 0 = scale default
    a->include_subject = cfg.get_bool("encoder.include_subject", true);
    a->adv_fraction = cfg.get_double("adversarial.fraction", 0.4);
    a->adv_epsilon = cfg.get_double("adversarial.epsilon", 0.2);
    a->adv_mode = cfg.get("adversarial.mode", "random");
    cmd->add_option("--train", a->train_path, "Training store");
    cmd->add_option("--val", a->val_path, "Validation store");
    cmd->add_option("--model", a->model_kind, "charcnn | chargru | charbilstm")
        ->check(CLI::IsMember({"charcnn", "chargru", "charbilstm"}));
    cmd->add_option("--scale", a->scale, "table (published sizes) | desk (small, fast)")
        ->check(CLI::IsMember({"table", "desk"}));
    cmd->add_option("--out-dir", a->out_dir, "Checkpoint/log directory");
    cmd->add_option("--epochs", a->epochs, "Training epochs");
    cmd->add_option("--batch-size", a->batch_size, "Minibatch size");
    cmd->add_option("--lr", a->lr, "Learning rate");
    cmd->add_option("--seed", a->seed, "Training seed");
    cmd->add_option("--t-max", a->t_max, "Override input length (0 = architecture default)");
    cmd->add_flag("--no-subject{false}", a->include_subject, "Encode body only");
  };
  auto run_train = [&cfg](const TrainArgs& a, bool adversarial) {
    NetworkSpec spec = a.scale == "desk" ? NetworkSpec::desk_config(a.model_kind)
                                         : NetworkSpec::table_config(a.model_kind);
    if (a.t_max > 0) spec.t_max = a.t_max;
    TrainConfig tc;
    tc.epochs = a.epochs;
    tc.batch_size = a.batch_size;
    tc.learning_rate = a.lr;
    tc.seed = a.seed;
    tc.include_subject = a.include_subject;
    tc.adv_fraction = a.adv_fraction;
    tc.adv_epsilon = a.adv_epsilon;
    tc.adv_guided = a.adv_mode == "guided";

    RunConfig resolved = cfg;
    resolved.set("train.model", a.model_kind);
    resolved.set("train.scale", a.scale);
    resolved.set("train.epochs", std::to_string(a.epochs));
    resolved.set("train.batch_size", std::to_string(a.batch_size));
    resolved.set("train.learning_rate", std::to_string(a.lr));
    resolved.set("train.seed", std::to_string(a.seed));
    resolved.set("train.adversarial", adversarial ? "true" : "false");
    resolved.set("encoder.t_max", std::to_string(spec.t_max));
    resolved.set("encoder.include_subject", a.include_subject ? "true" : "false");
    if (adversarial) {
      resolved.set("adversarial.fraction", std::to_string(a.adv_fraction));
      resolved.set("adversarial.epsilon", std::to_string(a.adv_epsilon));
      resolved.set("adversarial.mode", a.adv_mode);
    }
    const std::string digest = resolved.digest();

    const EmailStore train_set = EmailStore::load_jsonl(a.train_path);
    const EmailStore val_set = EmailStore::load_jsonl(a.val_path);
    Model<float> model(spec, derive_seed(a.seed, "init"));
    std::cerr << "training " << a.model_kind << " (" << a.scale << " scale, "
              << model.param_count() << " parameters) for " << a.epochs << " epochs on "
              << train_set.size() << " emails\n";
    TrainResult tr;
    if (adversarial) {
      ScoreFn oracle;
      if (tc.adv_guided) {
        if (a.adv_oracle_ckpt.empty()) {
          throw std::runtime_error("guided augmentation needs --oracle <checkpoint>");
        }
        oracle = model_oracle(std::make_shared<Model<float>>(load_checkpoint(a.adv_oracle_ckpt)));
      }
      tr = train_adversarial(model, train_set, val_set, tc, oracle);
    } else {
      tr = train(model, train_set, val_set, tc);
    }
    fs::create_directories(a.out_dir);
    const std::string stem =
        a.out_dir + "/" + a.model_kind + (adversarial ? "-adv" : "");
    save_checkpoint(stem + ".final.ckpt", model, digest);
    Model<float> best = model.clone();
    best.restore_values(tr.best_values);
    save_checkpoint(stem + ".best.ckpt", best, digest);
    save_epoch_log_csv(stem + ".epochs.csv", tr.log);

    nlohmann::json report;
    report["model_kind"] = a.model_kind;
    report["scale"] = a.scale;
    report["adversarial"] = adversarial;
    report["param_count"] = model.param_count();
    report["best_epoch"] = tr.best_epoch;
    report["best_val_accuracy"] = tr.best_val_accuracy;
    report["final_train_loss"] = tr.log.back().train_loss;
    report["config_digest"] = digest;
    report["config"] = resolved.to_json();
    nlohmann::json log = nlohmann::json::array();
    for (const auto& e : tr.log) {
      log.push_back({{"epoch", e.epoch},
                     {"train_loss", e.train_loss},
                     {"val_accuracy", e.val_accuracy},
                     {"seconds", e.seconds}});
    }
    report["epochs"] = log;
    write_json_file(stem + ".train.json", report);
    std::cout << "final loss " << tr.log.back().train_loss << ", best val accuracy "
              << tr.best_val_accuracy << " (epoch " << tr.best_epoch << "); checkpoints at "
              << stem << ".{final,best}.ckpt\n";
  };
  {
    auto* train_cmd = app.add_subcommand("train", "Train a classifier");
    auto args = std::make_shared<TrainArgs>();
    add_train_options(train_cmd, args);
    train_cmd->callback([=]() { run_train(*args, false); });

    auto* adv_cmd =
        app.add_subcommand("train-adv", "Train with adversarially augmented data");
    auto adv_args = std::make_shared<TrainArgs>();
    add_train_options(adv_cmd, adv_args);
    adv_cmd->add_option("--adv-fraction", adv_args->adv_fraction,
                        "Share of phishing train emails to perturb");
    adv_cmd->add_option("--adv-epsilon", adv_args->adv_epsilon, "Augmentation edit budget");
    adv_cmd->add_option("--adv-mode", adv_args->adv_mode, "random | guided")
        ->check(CLI::IsMember({"random", "guided"}));
    adv_cmd->add_option("--oracle", adv_args->adv_oracle_ckpt,
                        "Checkpoint queried by guided augmentation");
    adv_cmd->callback([=]() { run_train(*adv_args, true); });
  }

  // ---- attack --------------------------------------------------------------
  auto* attack_cmd = app.add_subcommand("attack", "Perturb phishing emails against a model");
  {
    auto ckpt = std::make_shared<std::string>(cfg.get("attack.model", ""));
    auto store_path = std::make_shared<std::string>(cfg.get("paths.store", "store.jsonl"));
    auto out = std::make_shared<std::string>(cfg.get("attack.out", "campaign.jsonl"));
    auto epsilon = std::make_shared<double>(cfg.get_double("attack.epsilon", 0.1));
    auto fraction = std::make_shared<double>(cfg.get_double("attack.fraction", 1.0));
    auto mode = std::make_shared<std::string>(cfg.get("attack.mode", "guided"));
    auto seed = std::make_shared<uint64_t>(cfg.get_seed("attack.seed", 42));
    auto threads = std::make_shared<int>(static_cast<int>(cfg.get_int("attack.threads", 1)));
    auto include_subject =
        std::make_shared<bool>(cfg.get_bool("encoder.include_subject", true));
    attack_cmd->add_option("--model", *ckpt, "Checkpoint to query (guided mode)");
    attack_cmd->add_option("--store", *store_path, "Emails to attack");
    attack_cmd->add_option("--out", *out,
                           "Campaign JSONL (guided) or perturbed store (random)");
    attack_cmd->add_option("--epsilon", *epsilon, "Edit budget fraction");
    attack_cmd->add_option("--fraction", *fraction, "Share of phishing emails (random mode)");
    attack_cmd->add_option("--mode", *mode, "guided | random")
        ->check(CLI::IsMember({"guided", "random"}));
    attack_cmd->add_option("--seed", *seed, "Attack seed");
    attack_cmd->add_option("--threads", *threads, "Worker threads (guided mode)");
    attack_cmd->callback([=, &cfg]() {
      RunConfig resolved = cfg;
      resolved.set("attack.epsilon", std::to_string(*epsilon));
      resolved.set("attack.mode", *mode);
      resolved.set("attack.seed", std::to_string(*seed));
      const std::string digest = resolved.digest();
      const EmailStore store = EmailStore::load_jsonl(*store_path);
      if (*mode == "guided") {
        if (ckpt->empty()) throw std::runtime_error("guided mode needs --model <checkpoint>");
        const std::string path = *ckpt;
        auto factory = [path]() {
          return model_oracle(std::make_shared<Model<float>>(load_checkpoint(path)));
        };
        const auto records =
            run_campaign(store, factory, *epsilon, *seed, *threads, *include_subject);
        long long flips = 0;
        for (const auto& r : records) flips += r.ex.flipped ? 1 : 0;
        nlohmann::json meta;
        meta["config_digest"] = digest;
        meta["epsilon"] = *epsilon;
        meta["mode"] = "guided";
        meta["seed"] = *seed;
        save_campaign_jsonl(*out, records, meta);
        std::cout << "attacked " << records.size() << " phishing emails, flipped " << flips
                  << " (" << (records.empty() ? 0.0
                                              : 100.0 * static_cast<double>(flips) /
                                                    static_cast<double>(records.size()))
                  << "%), campaign in " << *out << "\n";
      } else {
        PerturbOptions opt;
        opt.fraction = *fraction;
        opt.epsilon = *epsilon;
        opt.seed = *seed;
        opt.guided = false;
        opt.retain_originals = false;
        const EmailStore perturbed = perturb_corpus(store, opt);
        perturbed.save_jsonl(*out);
        nlohmann::json meta;
        meta["config_digest"] = digest;
        meta["epsilon"] = *epsilon;
        meta["fraction"] = *fraction;
        meta["mode"] = "random";
        meta["seed"] = *seed;
        write_json_file(*out + ".meta.json", meta);
        std::cout << "perturbed store written to " << *out << "\n";
      }
    });
  }

  // ---- explain -------------------------------------------------------------
  auto* explain_cmd = app.add_subcommand("explain", "Render a character heatmap as HTML");
  {
    auto ckpt = std::make_shared<std::string>("");
    auto input = std::make_shared<std::string>("-");
    auto out = std::make_shared<std::string>(cfg.get("explain.out", "heatmap.html"));
    auto target = std::make_shared<std::string>(cfg.get("explain.target", "auto"));
    explain_cmd->add_option("--model", *ckpt, "Checkpoint")->required();
    explain_cmd->add_option("--input", *input, "Email text file, or - for stdin");
    explain_cmd->add_option("--out", *out, "HTML output path");
    explain_cmd->add_option("--target", *target, "auto | clean | phishing")
        ->check(CLI::IsMember({"auto", "clean", "phishing"}));
    explain_cmd->callback([=, &cfg]() {
      Model<float> model = load_checkpoint(*ckpt);
      const std::string text = read_text_input(*input);
      if (text.empty()) std::cerr << "warning: empty input, scoring all-padding text\n";
      EncodedEmail enc = encode(text, model.spec().t_max);
      const int target_class =
          *target == "auto" ? -1 : (*target == "phishing" ? 1 : 0);
      const Heatmap heat = explain(model, enc, target_class);
      char title[160];
      std::snprintf(title, sizeof(title),
                    "%s relevance | p(clean)=%.4f p(phishing)=%.4f",
                    heat.target_class == 1 ? "phishing" : "clean", heat.probs[0],
                    heat.probs[1]);
      std::string html = render_html(text.substr(0, heat.char_scores.size()),
                                     heat.char_scores, title);
      html += "<!-- config-digest: " + cfg.digest() + " -->\n";
      write_text_file(*out, html);
      std::cout << "wrote heatmap for " << heat.char_scores.size() << " characters to "
                << *out << "\n";
    });
  }

  // ---- eval ----------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a labeled store");
  {
    auto ckpt = std::make_shared<std::string>("");
    auto store_path = std::make_shared<std::string>(cfg.get("paths.test", "splits/test.jsonl"));
    auto scenario = std::make_shared<std::string>(cfg.get("eval.scenario", "clean/clean"));
    auto out = std::make_shared<std::string>(cfg.get("eval.out", ""));
    auto threads = std::make_shared<int>(static_cast<int>(cfg.get_int("eval.threads", 1)));
    auto include_subject =
        std::make_shared<bool>(cfg.get_bool("encoder.include_subject", true));
    eval_cmd->add_option("--model", *ckpt, "Checkpoint")->required();
    eval_cmd->add_option("--store", *store_path, "Labeled store to evaluate");
    eval_cmd->add_option("--scenario", *scenario, "Tag recorded in the report");
    eval_cmd->add_option("--out", *out, "Report JSON path (optional)");
    eval_cmd->add_option("--threads", *threads, "Eval shards (timing honest only at 1)");
    eval_cmd->callback([=, &cfg]() {
      Model<float> model = load_checkpoint(*ckpt);
      const EmailStore test = EmailStore::load_jsonl(*store_path);
      EvalConfig ecfg;
      ecfg.include_subject = *include_subject;
      ecfg.threads = *threads;
      ecfg.checkpoint_used = *ckpt;
      ecfg.config_digest = cfg.digest();
      const EvalReport rep = evaluate(model, test, *scenario, ecfg);
      const nlohmann::json j = rep.to_json();
      if (!out->empty()) write_json_file(*out, j);
      nlohmann::json table;
      table["reports"] = nlohmann::json::array({j});
      std::cout << format_report_table(table);
    });
  }

  // ---- scenarios -----------------------------------------------------------
  auto* scen_cmd =
      app.add_subcommand("scenarios", "Train and evaluate every model on all three scenarios");
  {
    auto train_path = std::make_shared<std::string>(cfg.get("paths.train", "splits/train.jsonl"));
    auto val_path = std::make_shared<std::string>(cfg.get("paths.val", "splits/val.jsonl"));
    auto test_path = std::make_shared<std::string>(cfg.get("paths.test", "splits/test.jsonl"));
    auto out_dir = std::make_shared<std::string>(cfg.get("paths.report_dir", "reports"));
    auto scale = std::make_shared<std::string>(cfg.get("scenarios.scale", "desk"));
    auto models = std::make_shared<std::vector<std::string>>();
    auto epochs = std::make_shared<int>(static_cast<int>(cfg.get_int("train.epochs", 5)));
    auto batch = std::make_shared<int>(static_cast<int>(cfg.get_int("train.batch_size", 64)));
    auto lr = std::make_shared<double>(cfg.get_double("train.learning_rate", 0.001));
    auto seed = std::make_shared<uint64_t>(cfg.get_seed("train.seed", 42));
    auto test_eps = std::make_shared<double>(cfg.get_double("scenarios.test_epsilon", 0.1));
    auto eval_ckpt =
        std::make_shared<std::string>(cfg.get("scenarios.eval_checkpoint", "best_val"));
    {
      std::stringstream ss(cfg.get("scenarios.models", "charcnn,chargru,charbilstm"));
      std::string item;
      while (std::getline(ss, item, ',')) models->push_back(item);
    }
    scen_cmd->add_option("--train", *train_path, "Training store");
    scen_cmd->add_option("--val", *val_path, "Validation store");
    scen_cmd->add_option("--test", *test_path, "Test store");
    scen_cmd->add_option("--out-dir", *out_dir, "Report directory");
    scen_cmd->add_option("--scale", *scale, "table | desk")
        ->check(CLI::IsMember({"table", "desk"}));
    scen_cmd->add_option("--models", *models, "Model kinds")->delimiter(',');
    scen_cmd->add_option("--epochs", *epochs, "Training epochs");
    scen_cmd->add_option("--batch-size", *batch, "Minibatch size");
    scen_cmd->add_option("--lr", *lr, "Learning rate");
    scen_cmd->add_option("--seed", *seed, "Run seed");
    scen_cmd->add_option("--test-epsilon", *test_eps, "Adversarial test edit budget");
    scen_cmd->add_option("--eval-checkpoint", *eval_ckpt, "best_val | final")
        ->check(CLI::IsMember({"best_val", "final"}));
    scen_cmd->callback([=, &cfg]() {
      ScenarioConfig sc;
      sc.model_kinds = *models;
      sc.desk_scale = *scale == "desk";
      sc.train_cfg.epochs = *epochs;
      sc.train_cfg.batch_size = *batch;
      sc.train_cfg.learning_rate = *lr;
      sc.train_cfg.seed = *seed;
      sc.test_epsilon = *test_eps;
      sc.eval_checkpoint = *eval_ckpt;
      RunConfig resolved = cfg;
      resolved.set("scenarios.scale", *scale);
      resolved.set("train.epochs", std::to_string(*epochs));
      resolved.set("train.batch_size", std::to_string(*batch));
      resolved.set("train.learning_rate", std::to_string(*lr));
      resolved.set("train.seed", std::to_string(*seed));
      resolved.set("scenarios.test_epsilon", std::to_string(*test_eps));
      resolved.set("scenarios.eval_checkpoint", *eval_ckpt);
      sc.config_digest = resolved.digest();
      nlohmann::json report = run_scenarios(EmailStore::load_jsonl(*train_path),
                                            EmailStore::load_jsonl(*val_path),
                                            EmailStore::load_jsonl(*test_path), sc);
      report["config"] = resolved.to_json();
      fs::create_directories(*out_dir);
      write_json_file(*out_dir + "/scenario_report.json", report);
      const std::string table = format_report_table(report);
      write_text_file(*out_dir + "/scenario_table.txt", table);
      std::cout << table;
    });
  }

  // ---- score ---------------------------------------------------------------
  auto* score_cmd = app.add_subcommand("score", "Classify one email (JSON on stdout)");
  {
    auto ckpt = std::make_shared<std::string>("");
    auto input = std::make_shared<std::string>("-");
    score_cmd->add_option("--model", *ckpt, "Checkpoint")->required();
    score_cmd->add_option("--input", *input, "Email text file, or - for stdin");
    score_cmd->callback([=, &cfg]() {
      Model<float> model = load_checkpoint(*ckpt);
      const std::string text = read_text_input(*input);
      if (text.empty()) std::cerr << "warning: empty input, scoring all-padding text\n";
      const EncodedEmail enc = encode(text, model.spec().t_max);
      const auto t0 = std::chrono::steady_clock::now();
      const auto r = model.forward(enc);
      const double seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      nlohmann::json j;
      j["label"] = r.probs[1] > r.probs[0] ? "phishing" : "clean";
      j["p_clean"] = r.probs[0];
      j["p_phish"] = r.probs[1];
      j["seconds"] = seconds;
      j["config_digest"] = cfg.digest();
      std::cout << j.dump() << "\n";
    });
  }

  // ---- llm-eval ------------------------------------------------------------
  auto* llm_cmd = app.add_subcommand("llm-eval", "Classify emails via a text-generation endpoint");
  {
    auto store_path = std::make_shared<std::string>(cfg.get("paths.test", "splits/test.jsonl"));
    auto out = std::make_shared<std::string>(cfg.get("llm.out", "llm_report.json"));
    auto compare_path = std::make_shared<std::string>("");
    auto threads = std::make_shared<int>(static_cast<int>(cfg.get_int("llm.threads", 1)));
    auto ecfg = std::make_shared<LlmEndpointConfig>();
    auto prompt_file = std::make_shared<std::string>(cfg.get("llm.prompt_file", ""));
    auto request_file = std::make_shared<std::string>(cfg.get("llm.request_template_file", ""));
    ecfg->base_url = cfg.get("llm.base_url", ecfg->base_url);
    ecfg->path = cfg.get("llm.path", ecfg->path);
    ecfg->model = cfg.get("llm.model", ecfg->model);
    ecfg->timeout_seconds = cfg.get_double("llm.timeout", ecfg->timeout_seconds);
    ecfg->max_emails = static_cast<int>(cfg.get_int("llm.max_emails", ecfg->max_emails));
    ecfg->truncate_chars =
        static_cast<int>(cfg.get_int("llm.truncate_chars", ecfg->truncate_chars));
    ecfg->response_pointer = cfg.get("llm.response_pointer", ecfg->response_pointer);
    llm_cmd->add_option("--store", *store_path, "Labeled store to classify");
    llm_cmd->add_option("--out", *out, "Report JSON path");
    llm_cmd->add_option("--base-url", ecfg->base_url, "Endpoint base URL");
    llm_cmd->add_option("--path", ecfg->path, "Endpoint request path");
    llm_cmd->add_option("--model-name", ecfg->model, "Model name sent in requests");
    llm_cmd->add_option("--timeout", ecfg->timeout_seconds, "Request timeout seconds");
    llm_cmd->add_option("--max-emails", ecfg->max_emails, "Cap on evaluated emails");
    llm_cmd->add_option("--truncate-chars", ecfg->truncate_chars, "Email truncation cap");
    llm_cmd->add_option("--prompt-file", *prompt_file, "File holding the prompt template");
    llm_cmd->add_option("--request-file", *request_file,
                        "File holding the request body template");
    llm_cmd->add_option("--response-pointer", ecfg->response_pointer,
                        "JSON pointer to the reply text");
    llm_cmd->add_option("--threads", *threads, "Parallel requests (invalidates timing)");
    llm_cmd->add_option("--compare", *compare_path,
                        "Classifier eval report to compare against");
    llm_cmd->callback([=, &cfg]() {
      if (!prompt_file->empty()) ecfg->prompt_template = read_text_input(*prompt_file);
      if (!request_file->empty()) ecfg->request_template = read_text_input(*request_file);
      RunConfig resolved = cfg;
      resolved.set("llm.base_url", ecfg->base_url);
      resolved.set("llm.model", ecfg->model);
      const EmailStore store = EmailStore::load_jsonl(*store_path);
      const LlmReport rep = run_llm_eval(*ecfg, store, resolved.digest(), *threads);
      write_json_file(*out, rep.to_json());
      std::cerr << "llm accuracy " << rep.accuracy << " over " << rep.n << " emails ("
                << rep.abstained << " abstained), mean latency " << rep.mean_latency_seconds
                << "s\n";
      if (!compare_path->empty()) {
        const nlohmann::json cls = nlohmann::json::parse(read_text_input(*compare_path));
        std::cout << compare_reports(cls, rep.to_json()).dump(2) << "\n";
      }
    });
  }

  try {
    std::vector<std::string> args(pre.args.rbegin(), pre.args.rend());  // parse() wants reversed argv
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return exit_code;
}
