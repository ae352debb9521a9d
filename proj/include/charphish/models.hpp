#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "charphish/encoder.hpp"
#include "charphish/nn/layers.hpp"
#include "charphish/nn/ops.hpp"
#include "charphish/rng.hpp"

#include <nlohmann/json.hpp>

namespace charphish {

// Architecture description. Serializes to JSON inside checkpoints and run
// reports so a classifier can be rebuilt exactly.
struct NetworkSpec {
  std::string kind;  // charcnn | chargru | charbilstm
  int t_max = 1500;
  int embed_dim = 128;
  // convolutional stack
  std::vector<int> kernels = {5, 3, 1};
  std::vector<int> pools = {3, 3, 0};  // 0 = no pooling after that block
  int filters = 64;
  bool use_se = true;
  int se_ratio = 16;
  double dropout = 0.3;
  double relu_theta = 1e-6;
  // recurrent stack
  int hidden = 64;
  bool mask_padding = false;
  std::string optimizer = "nadam";

  void validate() const;
  nlohmann::json to_json() const;
  static NetworkSpec from_json(const nlohmann::json& j);

  // Published full-size configurations.
  static NetworkSpec table_config(const std::string& kind);
  // Downscaled configurations for fast CPU smoke runs.
  static NetworkSpec desk_config(const std::string& kind);
};

template <typename T>
struct ForwardResult {
  std::array<T, 2> logits;
  std::array<T, 2> probs;
};

// A character-level classifier: embedding, a layer stack, and a softmax read
// of the two output logits. Not safe for concurrent use (layers cache
// forward state); use clone() to hand copies to worker threads.
template <typename T>
class Model {
 public:
  Model(const NetworkSpec& spec, uint64_t seed) : spec_(spec), embed_(96, spec.embed_dim) {
    spec_.validate();
    build_layers();
    init_params(seed);
  }

  const NetworkSpec& spec() const { return spec_; }

  // All trainable tensors, embedding table first, in registration order.
  std::vector<nn::Param<T>*> params() {
    std::vector<nn::Param<T>*> out{&embed_.table()};
    for (auto& l : layers_) {
      for (auto* p : l->params()) out.push_back(p);
    }
    return out;
  }

  // Trainable scalar count; the frozen pad row of the embedding is excluded.
  long long param_count() {
    long long n = 0;
    for (auto* p : params()) n += static_cast<long long>(p->count());
    return n - spec_.embed_dim;
  }

  void zero_grads() {
    for (auto* p : params()) p->zero_grad();
  }

  ForwardResult<T> forward(const std::vector<int>& indices, bool training = false,
                           Rng* rng = nullptr) {
    return forward_masked(indices, static_cast<int>(indices.size()), training, rng);
  }

  ForwardResult<T> forward(const EncodedEmail& email, bool training = false,
                           Rng* rng = nullptr) {
    return forward_masked(email.indices, email.original_length, training, rng);
  }

  // Backpropagates a gradient w.r.t. the two logits through the whole stack,
  // accumulating parameter gradients.
  void backward_from_logits(const std::array<T, 2>& dlogits) {
    nn::Seq<T> d(1, 2);
    d.at(0, 0) = dlogits[0];
    d.at(0, 1) = dlogits[1];
    for (int i = static_cast<int>(layers_.size()) - 1; i >= 0; --i) {
      d = layers_[i]->backward(d);
    }
    embed_.backward(d);
  }

  // Backward pass that stops at the attention-map layer and returns the
  // gradient of the logit combination w.r.t. that layer's output.
  nn::Seq<T> backward_to_capture(const std::array<T, 2>& dlogits) {
    nn::Seq<T> d(1, 2);
    d.at(0, 0) = dlogits[0];
    d.at(0, 1) = dlogits[1];
    for (int i = static_cast<int>(layers_.size()) - 1; i > capture_index_; --i) {
      d = layers_[i]->backward(d);
    }
    return d;
  }

  // When enabled, forward() keeps a copy of the capture layer's activations.
  void set_capture(bool on) { capture_enabled_ = on; }
  const nn::Seq<T>& captured_activations() const { return captured_; }

  // Temporal geometry (conv kernels, pool windows) between the input
  // characters and the capture layer, in forward order.
  std::vector<nn::TemporalStage> temporal_trace() const {
    std::vector<nn::TemporalStage> out;
    for (int i = 0; i <= capture_index_; ++i) {
      if (auto s = layers_[i]->temporal_stage()) out.push_back(*s);
    }
    return out;
  }

  Model clone() const {
    Model copy(spec_, 0);
    auto src = const_cast<Model*>(this)->params();
    auto dst = copy.params();
    for (size_t i = 0; i < src.size(); ++i) dst[i]->value = src[i]->value;
    return copy;
  }

  std::vector<std::vector<T>> snapshot_values() {
    std::vector<std::vector<T>> out;
    for (auto* p : params()) out.push_back(p->value);
    return out;
  }

  void restore_values(const std::vector<std::vector<T>>& snap) {
    auto ps = params();
    if (snap.size() != ps.size()) throw std::logic_error("restore: snapshot size mismatch");
    for (size_t i = 0; i < ps.size(); ++i) {
      if (snap[i].size() != ps[i]->value.size()) {
        throw std::logic_error("restore: tensor size mismatch at " + ps[i]->name);
      }
      ps[i]->value = snap[i];
    }
  }

 private:
  ForwardResult<T> forward_masked(const std::vector<int>& indices, int valid, bool training,
                                  Rng* rng) {
    nn::FwdCtx ctx;
    ctx.training = training;
    ctx.rng = rng;
    ctx.valid_steps = valid > 0 ? valid : static_cast<int>(indices.size());
    nn::Seq<T> a = embed_.forward(indices);
    for (size_t i = 0; i < layers_.size(); ++i) {
      a = layers_[i]->forward(a, ctx);
      if (capture_enabled_ && static_cast<int>(i) == capture_index_) captured_ = a;
    }
    ForwardResult<T> r;
    r.logits = {a.at(0, 0), a.at(0, 1)};
    r.probs = nn::softmax2(r.logits);
    return r;
  }

  void build_layers() {
    using namespace nn;
    if (spec_.kind == "charcnn") {
      int in_ch = spec_.embed_dim;
      for (size_t b = 0; b < spec_.kernels.size(); ++b) {
        const std::string tag = std::to_string(b + 1);
        layers_.push_back(std::make_unique<Conv1dLayer<T>>("conv" + tag, spec_.kernels[b],
                                                           in_ch, spec_.filters));
        layers_.push_back(std::make_unique<ThresholdedReluLayer<T>>(T(spec_.relu_theta)));
        layers_.push_back(std::make_unique<DropoutLayer<T>>(spec_.dropout));
        if (spec_.pools[b] > 1) {
          layers_.push_back(std::make_unique<MaxPool1dLayer<T>>(spec_.pools[b]));
        }
        if (spec_.use_se) {
          layers_.push_back(
              std::make_unique<SeBlockLayer<T>>("se" + tag, spec_.filters, spec_.se_ratio));
        }
        in_ch = spec_.filters;
      }
      head_width_ = spec_.filters;
    } else if (spec_.kind == "chargru") {
      layers_.push_back(std::make_unique<GruLayer<T>>("gru", spec_.embed_dim, spec_.hidden));
      head_width_ = spec_.hidden;
    } else if (spec_.kind == "charbilstm") {
      layers_.push_back(
          std::make_unique<BiLstmLayer<T>>("bilstm", spec_.embed_dim, spec_.hidden));
      head_width_ = 2 * spec_.hidden;
    } else {
      throw std::invalid_argument("unknown model kind: " + spec_.kind);
    }
    capture_index_ = static_cast<int>(layers_.size()) - 1;
    layers_.push_back(std::make_unique<GlobalAvgPoolLayer<T>>(spec_.mask_padding));
    layers_.push_back(std::make_unique<DenseLayer<T>>("dense", head_width_, 2));
  }

  // Embedding rows 1..95 from U(-0.05, 0.05); weight matrices from a
  // symmetric uniform with limit sqrt(6 / (fan_in + fan_out)); biases zero.
  // Draw order is fixed by parameter registration order.
  void init_params(uint64_t seed) {
    Rng rng(seed);
    auto& table = embed_.table();
    for (int r = 1; r < table.shape[0]; ++r) {
      T* row = table.row(r);
      for (int d = 0; d < spec_.embed_dim; ++d) {
        row[d] = static_cast<T>(rng.uniform(-0.05, 0.05));
      }
    }
    for (auto& l : layers_) {
      for (auto* p : l->params()) {
        if (p->shape.size() == 1) continue;  // bias, stays zero
        double fan_sum = 0;
        if (p->shape.size() == 2) {
          fan_sum = p->shape[0] + p->shape[1];
        } else {
          fan_sum = static_cast<double>(p->shape[0]) * (p->shape[1] + p->shape[2]);
        }
        const double limit = std::sqrt(6.0 / fan_sum);
        for (auto& v : p->value) v = static_cast<T>(rng.uniform(-limit, limit));
      }
    }
  }

  NetworkSpec spec_;
  nn::EmbeddingLayer<T> embed_;
  std::vector<std::unique_ptr<nn::Layer<T>>> layers_;
  int head_width_ = 0;
  int capture_index_ = 0;
  bool capture_enabled_ = false;
  nn::Seq<T> captured_;
};

// --- checkpoints ------------------------------------------------------------
// Binary container: magic, little-endian header length, JSON header (spec,
// alphabet tag, tensor manifest, payload digest), then raw float32 data.
// Round trips are bit exact. Loading detects bad magic, truncation, manifest
// mismatches, and payload corruption, each with a distinct error.

inline constexpr char kCheckpointMagic[8] = {'C', 'H', 'P', 'H', 'C', 'K', 'P', '1'};
inline constexpr const char* kAlphabetTag = "printable-ascii-95";

void save_checkpoint(const std::string& path, Model<float>& model,
                     const std::string& config_digest = "");
Model<float> load_checkpoint(const std::string& path);

}  // namespace charphish
