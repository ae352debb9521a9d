#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "charphish/nn/ops.hpp"
#include "charphish/nn/tensor.hpp"
#include "charphish/rng.hpp"

namespace charphish::nn {

// Per-call forward context. valid_steps tracks how many timesteps at the
// current depth stem from real (non-padding) input characters; temporal
// layers rewrite it as they shrink the sequence. 0 means "all".
struct FwdCtx {
  bool training = false;
  int valid_steps = 0;
  Rng* rng = nullptr;  // dropout draws, training only
};

// Temporal downsampling record, consumed by relevance-map alignment.
struct TemporalStage {
  enum Kind { kConv, kPool };
  Kind kind;
  int size;  // kernel width or pool window
};

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual const char* kind() const = 0;
  virtual Seq<T> forward(const Seq<T>& x, FwdCtx& ctx) = 0;
  // Returns gradient w.r.t. the layer input; accumulates parameter grads.
  virtual Seq<T> backward(const Seq<T>& dy) = 0;
  virtual std::vector<Param<T>*> params() { return {}; }
  virtual std::optional<TemporalStage> temporal_stage() const { return std::nullopt; }
};

namespace detail {

// y[i] += dot(m.row(i), x), m is rows x cols row-major.
template <typename T>
inline void matvec_acc(const T* m, const T* x, T* y, int rows, int cols) {
  for (int i = 0; i < rows; ++i) {
    const T* mr = m + static_cast<size_t>(i) * cols;
    T acc = T(0);
    for (int j = 0; j < cols; ++j) acc += mr[j] * x[j];
    y[i] += acc;
  }
}

// y[j] += sum_i m[i][j] * a[i]  (transposed matvec, axpy per row)
template <typename T>
inline void matvec_t_acc(const T* m, const T* a, T* y, int rows, int cols) {
  for (int i = 0; i < rows; ++i) {
    const T ai = a[i];
    if (ai == T(0)) continue;
    const T* mr = m + static_cast<size_t>(i) * cols;
    for (int j = 0; j < cols; ++j) y[j] += ai * mr[j];
  }
}

// grad.row(i) += a[i] * x
template <typename T>
inline void outer_acc(T* grad, const T* a, const T* x, int rows, int cols) {
  for (int i = 0; i < rows; ++i) {
    const T ai = a[i];
    if (ai == T(0)) continue;
    T* gr = grad + static_cast<size_t>(i) * cols;
    for (int j = 0; j < cols; ++j) gr[j] += ai * x[j];
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Embedding: index sequence -> T x D. Row 0 (pad/unknown) is frozen at zero.
// ---------------------------------------------------------------------------
template <typename T>
class EmbeddingLayer {
 public:
  EmbeddingLayer(int vocab_rows, int dim)
      : dim_(dim), table_("embedding.table", {vocab_rows, dim}) {}

  Seq<T> forward(const std::vector<int>& indices) {
    last_indices_ = indices;
    Seq<T> out(static_cast<int>(indices.size()), dim_);
    const int rows = table_.shape[0];
    for (size_t t = 0; t < indices.size(); ++t) {
      const int idx = indices[t];
      if (idx < 0 || idx >= rows) {
        throw std::out_of_range("embedding: index out of range: " + std::to_string(idx));
      }
      const T* src = table_.row(idx);
      T* dst = out.row(static_cast<int>(t));
      for (int d = 0; d < dim_; ++d) dst[d] = src[d];
    }
    return out;
  }

  void backward(const Seq<T>& dy) {
    for (size_t t = 0; t < last_indices_.size(); ++t) {
      const int idx = last_indices_[t];
      if (idx == 0) continue;  // frozen pad row
      T* g = table_.grad_row(idx);
      const T* d = dy.row(static_cast<int>(t));
      for (int j = 0; j < dim_; ++j) g[j] += d[j];
    }
  }

  Param<T>& table() { return table_; }
  const Param<T>& table() const { return table_; }
  int dim() const { return dim_; }
  // Trainable count excludes the frozen pad row.
  long long trainable_count() const {
    return static_cast<long long>(table_.count()) - dim_;
  }

 private:
  int dim_;
  Param<T> table_;
  std::vector<int> last_indices_;
};

// ---------------------------------------------------------------------------
// Valid convolution, stride 1: (T x C_in) -> (T-K+1 x C_out)
// ---------------------------------------------------------------------------
template <typename T>
class Conv1dLayer : public Layer<T> {
 public:
  Conv1dLayer(const std::string& name, int kernel, int in_ch, int out_ch)
      : k_(kernel), cin_(in_ch), cout_(out_ch),
        kernels_(name + ".kernels", {kernel, in_ch, out_ch}),
        bias_(name + ".bias", {out_ch}) {
    if (kernel < 1 || in_ch < 1 || out_ch < 1) {
      throw std::invalid_argument("conv1d: dimensions must be positive");
    }
  }

  const char* kind() const override { return "conv1d"; }

  Seq<T> forward(const Seq<T>& x, FwdCtx& ctx) override {
    if (x.steps < k_) throw std::invalid_argument("conv1d: sequence shorter than kernel");
    x_ = x;
    const int t_out = x.steps - k_ + 1;
    Seq<T> out(t_out, cout_);
    for (int t = 0; t < t_out; ++t) {
      T* orow = out.row(t);
      for (int o = 0; o < cout_; ++o) orow[o] = bias_.value[o];
      for (int k = 0; k < k_; ++k) {
        const T* xrow = x.row(t + k);
        const T* wk = kernels_.value.data() + static_cast<size_t>(k) * cin_ * cout_;
        for (int c = 0; c < cin_; ++c) {
          const T xv = xrow[c];
          if (xv == T(0)) continue;
          const T* wrow = wk + static_cast<size_t>(c) * cout_;
          for (int o = 0; o < cout_; ++o) orow[o] += xv * wrow[o];
        }
      }
    }
    if (ctx.valid_steps > 0) {
      ctx.valid_steps = std::min(std::max(ctx.valid_steps - k_ + 1, 1), t_out);
    }
    return out;
  }

  Seq<T> backward(const Seq<T>& dy) override {
    Seq<T> dx(x_.steps, cin_);
    const int t_out = dy.steps;
    for (int t = 0; t < t_out; ++t) {
      const T* dyrow = dy.row(t);
      for (int o = 0; o < cout_; ++o) bias_.grad[o] += dyrow[o];
      for (int k = 0; k < k_; ++k) {
        const T* xrow = x_.row(t + k);
        T* dxrow = dx.row(t + k);
        const size_t base = static_cast<size_t>(k) * cin_ * cout_;
        for (int c = 0; c < cin_; ++c) {
          const T* wrow = kernels_.value.data() + base + static_cast<size_t>(c) * cout_;
          T* gwrow = kernels_.grad.data() + base + static_cast<size_t>(c) * cout_;
          const T xv = xrow[c];
          T acc = T(0);
          for (int o = 0; o < cout_; ++o) {
            acc += dyrow[o] * wrow[o];
            gwrow[o] += xv * dyrow[o];
          }
          dxrow[c] += acc;
        }
      }
    }
    return dx;
  }

  std::vector<Param<T>*> params() override { return {&kernels_, &bias_}; }
  std::optional<TemporalStage> temporal_stage() const override {
    return TemporalStage{TemporalStage::kConv, k_};
  }

 private:
  int k_, cin_, cout_;
  Param<T> kernels_, bias_;
  Seq<T> x_;
};

// ---------------------------------------------------------------------------
// Thresholded ReLU: y = x if x > theta else 0
// ---------------------------------------------------------------------------
template <typename T>
class ThresholdedReluLayer : public Layer<T> {
 public:
  explicit ThresholdedReluLayer(T theta) : theta_(theta) {}
  const char* kind() const override { return "thresholded_relu"; }

  Seq<T> forward(const Seq<T>& x, FwdCtx&) override {
    x_ = x;
    Seq<T> out(x.steps, x.channels);
    for (size_t i = 0; i < x.v.size(); ++i) out.v[i] = thresholded_relu(x.v[i], theta_);
    return out;
  }

  Seq<T> backward(const Seq<T>& dy) override {
    Seq<T> dx(dy.steps, dy.channels);
    for (size_t i = 0; i < dy.v.size(); ++i) {
      dx.v[i] = x_.v[i] > theta_ ? dy.v[i] : T(0);
    }
    return dx;
  }

 private:
  T theta_;
  Seq<T> x_;
};

// ---------------------------------------------------------------------------
// Inverted dropout; identity outside training mode.
// ---------------------------------------------------------------------------
template <typename T>
class DropoutLayer : public Layer<T> {
 public:
  explicit DropoutLayer(double rate) : rate_(rate) {
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout rate must be in [0,1)");
  }
  const char* kind() const override { return "dropout"; }

  Seq<T> forward(const Seq<T>& x, FwdCtx& ctx) override {
    if (!ctx.training || rate_ == 0.0) {
      mask_.clear();
      return x;
    }
    if (ctx.rng == nullptr) throw std::logic_error("dropout: training forward needs an rng");
    const T scale = T(1.0 / (1.0 - rate_));
    mask_.resize(x.v.size());
    Seq<T> out(x.steps, x.channels);
    for (size_t i = 0; i < x.v.size(); ++i) {
      mask_[i] = ctx.rng->uniform() >= rate_ ? scale : T(0);
      out.v[i] = x.v[i] * mask_[i];
    }
    return out;
  }

  Seq<T> backward(const Seq<T>& dy) override {
    if (mask_.empty()) return dy;
    Seq<T> dx(dy.steps, dy.channels);
    for (size_t i = 0; i < dy.v.size(); ++i) dx.v[i] = dy.v[i] * mask_[i];
    return dx;
  }

 private:
  double rate_;
  std::vector<T> mask_;
};

// ---------------------------------------------------------------------------
// Non-overlapping max pooling over time: T x C -> floor(T/w) x C
// ---------------------------------------------------------------------------
template <typename T>
class MaxPool1dLayer : public Layer<T> {
 public:
  explicit MaxPool1dLayer(int window) : w_(window) {
    if (window < 1) throw std::invalid_argument("maxpool window must be >= 1");
  }
  const char* kind() const override { return "maxpool1d"; }

  Seq<T> forward(const Seq<T>& x, FwdCtx& ctx) override {
    if (w_ > x.steps) throw std::invalid_argument("maxpool: window larger than sequence");
    in_steps_ = x.steps;
    const int t_out = x.steps / w_;
    Seq<T> out(t_out, x.channels);
    argmax_.assign(static_cast<size_t>(t_out) * x.channels, 0);
    for (int t = 0; t < t_out; ++t) {
      T* orow = out.row(t);
      for (int c = 0; c < x.channels; ++c) {
        int best = t * w_;
        T bv = x.at(best, c);
        for (int j = 1; j < w_; ++j) {
          const T v = x.at(t * w_ + j, c);
          if (v > bv) {
            bv = v;
            best = t * w_ + j;
          }
        }
        orow[c] = bv;
        argmax_[static_cast<size_t>(t) * x.channels + c] = best;
      }
    }
    if (ctx.valid_steps > 0) {
      ctx.valid_steps = std::min(std::max(ctx.valid_steps / w_, 1), t_out);
    }
    return out;
  }

  Seq<T> backward(const Seq<T>& dy) override {
    Seq<T> dx(in_steps_, dy.channels);
    for (int t = 0; t < dy.steps; ++t) {
      for (int c = 0; c < dy.channels; ++c) {
        dx.at(argmax_[static_cast<size_t>(t) * dy.channels + c], c) += dy.at(t, c);
      }
    }
    return dx;
  }

  std::optional<TemporalStage> temporal_stage() const override {
    return TemporalStage{TemporalStage::kPool, w_};
  }

 private:
  int w_;
  int in_steps_ = 0;
  std::vector<int> argmax_;
};

// ---------------------------------------------------------------------------
// Squeeze-and-excitation channel attention. Squeeze pools each channel over
// time, a two-layer bottleneck (reduce by ratio r) produces sigmoid weights,
// and the input is rescaled channel-wise.
// ---------------------------------------------------------------------------
template <typename T>
class SeBlockLayer : public Layer<T> {
 public:
  SeBlockLayer(const std::string& name, int channels, int ratio)
      : c_(channels), cr_(channels / ratio),
        w1_(name + ".w1", {channels / ratio, channels}),
        b1_(name + ".b1", {channels / ratio}),
        w2_(name + ".w2", {channels, channels / ratio}),
        b2_(name + ".b2", {channels}) {
    if (ratio < 1 || channels % ratio != 0) {
      throw std::invalid_argument("se block: channel count not divisible by ratio");
    }
  }

  const char* kind() const override { return "se_block"; }

  Seq<T> forward(const Seq<T>& x, FwdCtx&) override {
    x_ = x;
    const int t_len = x.steps;
    squeeze_.assign(c_, T(0));
    for (int t = 0; t < t_len; ++t) {
      const T* xr = x.row(t);
      for (int c = 0; c < c_; ++c) squeeze_[c] += xr[c];
    }
    for (int c = 0; c < c_; ++c) squeeze_[c] /= T(t_len);

    u_pre_.assign(cr_, T(0));
    for (int j = 0; j < cr_; ++j) u_pre_[j] = b1_.value[j];
    detail::matvec_acc(w1_.value.data(), squeeze_.data(), u_pre_.data(), cr_, c_);
    u_.resize(cr_);
    for (int j = 0; j < cr_; ++j) u_[j] = relu(u_pre_[j]);

    std::vector<T> w_pre(c_);
    for (int c = 0; c < c_; ++c) w_pre[c] = b2_.value[c];
    detail::matvec_acc(w2_.value.data(), u_.data(), w_pre.data(), c_, cr_);
    weights_.resize(c_);
    for (int c = 0; c < c_; ++c) weights_[c] = sigmoid(w_pre[c]);

    Seq<T> out(t_len, c_);
    for (int t = 0; t < t_len; ++t) {
      const T* xr = x.row(t);
      T* orow = out.row(t);
      for (int c = 0; c < c_; ++c) orow[c] = xr[c] * weights_[c];
    }
    return out;
  }

  Seq<T> backward(const Seq<T>& dy) override {
    const int t_len = x_.steps;
    std::vector<T> dw(c_, T(0));
    Seq<T> dx(t_len, c_);
    for (int t = 0; t < t_len; ++t) {
      const T* dyr = dy.row(t);
      const T* xr = x_.row(t);
      T* dxr = dx.row(t);
      for (int c = 0; c < c_; ++c) {
        dw[c] += dyr[c] * xr[c];
        dxr[c] = dyr[c] * weights_[c];
      }
    }
    std::vector<T> da2(c_);
    for (int c = 0; c < c_; ++c) da2[c] = dw[c] * weights_[c] * (T(1) - weights_[c]);
    detail::outer_acc(w2_.grad.data(), da2.data(), u_.data(), c_, cr_);
    for (int c = 0; c < c_; ++c) b2_.grad[c] += da2[c];
    std::vector<T> du(cr_, T(0));
    detail::matvec_t_acc(w2_.value.data(), da2.data(), du.data(), c_, cr_);
    std::vector<T> da1(cr_);
    for (int j = 0; j < cr_; ++j) da1[j] = u_pre_[j] > T(0) ? du[j] : T(0);
    detail::outer_acc(w1_.grad.data(), da1.data(), squeeze_.data(), cr_, c_);
    for (int j = 0; j < cr_; ++j) b1_.grad[j] += da1[j];
    std::vector<T> ds(c_, T(0));
    detail::matvec_t_acc(w1_.value.data(), da1.data(), ds.data(), cr_, c_);
    const T inv_t = T(1) / T(t_len);
    for (int t = 0; t < t_len; ++t) {
      T* dxr = dx.row(t);
      for (int c = 0; c < c_; ++c) dxr[c] += ds[c] * inv_t;
    }
    return dx;
  }

  std::vector<Param<T>*> params() override { return {&w1_, &b1_, &w2_, &b2_}; }
  const std::vector<T>& excitation_weights() const { return weights_; }

 private:
  int c_, cr_;
  Param<T> w1_, b1_, w2_, b2_;
  Seq<T> x_;
  std::vector<T> squeeze_, u_pre_, u_, weights_;
};

// ---------------------------------------------------------------------------
// Mean over the temporal axis: T x C -> 1 x C. When masking is on and the
// context carries a valid length, only the leading valid rows are averaged.
// ---------------------------------------------------------------------------
template <typename T>
class GlobalAvgPoolLayer : public Layer<T> {
 public:
  explicit GlobalAvgPoolLayer(bool mask_padding) : mask_(mask_padding) {}
  const char* kind() const override { return "global_avg_pool"; }

  Seq<T> forward(const Seq<T>& x, FwdCtx& ctx) override {
    in_steps_ = x.steps;
    len_ = (mask_ && ctx.valid_steps > 0) ? std::min(ctx.valid_steps, x.steps) : x.steps;
    Seq<T> out(1, x.channels);
    T* orow = out.row(0);
    for (int t = 0; t < len_; ++t) {
      const T* xr = x.row(t);
      for (int c = 0; c < x.channels; ++c) orow[c] += xr[c];
    }
    for (int c = 0; c < x.channels; ++c) orow[c] /= T(len_);
    ctx.valid_steps = 1;
    return out;
  }

  Seq<T> backward(const Seq<T>& dy) override {
    Seq<T> dx(in_steps_, dy.channels);
    const T inv = T(1) / T(len_);
    for (int t = 0; t < len_; ++t) {
      T* dxr = dx.row(t);
      for (int c = 0; c < dy.channels; ++c) dxr[c] = dy.at(0, c) * inv;
    }
    return dx;
  }

 private:
  bool mask_;
  int in_steps_ = 0;
  int len_ = 0;
};

// ---------------------------------------------------------------------------
// Fully connected head: 1 x in -> 1 x out, W stored in x out.
// ---------------------------------------------------------------------------
template <typename T>
class DenseLayer : public Layer<T> {
 public:
  DenseLayer(const std::string& name, int in, int out)
      : in_(in), out_(out), w_(name + ".w", {in, out}), b_(name + ".b", {out}) {}

  const char* kind() const override { return "dense"; }

  Seq<T> forward(const Seq<T>& x, FwdCtx&) override {
    if (x.steps != 1 || x.channels != in_) {
      throw std::invalid_argument("dense: expected 1x" + std::to_string(in_) + " input");
    }
    x_ = x;
    Seq<T> out(1, out_);
    T* orow = out.row(0);
    for (int j = 0; j < out_; ++j) orow[j] = b_.value[j];
    const T* xr = x.row(0);
    for (int i = 0; i < in_; ++i) {
      const T xv = xr[i];
      if (xv == T(0)) continue;
      const T* wr = w_.row(i);
      for (int j = 0; j < out_; ++j) orow[j] += xv * wr[j];
    }
    return out;
  }

  Seq<T> backward(const Seq<T>& dy) override {
    Seq<T> dx(1, in_);
    const T* dyr = dy.row(0);
    const T* xr = x_.row(0);
    T* dxr = dx.row(0);
    for (int i = 0; i < in_; ++i) {
      const T* wr = w_.row(i);
      T* gr = w_.grad.data() + static_cast<size_t>(i) * out_;
      T acc = T(0);
      for (int j = 0; j < out_; ++j) {
        acc += wr[j] * dyr[j];
        gr[j] += xr[i] * dyr[j];
      }
      dxr[i] = acc;
    }
    for (int j = 0; j < out_; ++j) b_.grad[j] += dyr[j];
    return dx;
  }

  std::vector<Param<T>*> params() override { return {&w_, &b_}; }

 private:
  int in_, out_;
  Param<T> w_, b_;
  Seq<T> x_;
};

// ---------------------------------------------------------------------------
// GRU over the full sequence, h_0 = 0, emits every hidden state.
//   z_t = sigmoid(W_z x_t + U_z h_{t-1} + b)
//   r_t = sigmoid(W_r x_t + U_r h_{t-1} + b)
//   hc_t = tanh(W_h x_t + U_h (r_t . h_{t-1}) + b)
//   h_t = (1 - z_t) . h_{t-1} + z_t . hc_t
// Each gate carries an input-side and a recurrent-side bias.
// ---------------------------------------------------------------------------
template <typename T>
class GruLayer : public Layer<T> {
 public:
  GruLayer(const std::string& name, int in_dim, int hidden)
      : d_(in_dim), h_(hidden),
        wz_(name + ".wz", {hidden, in_dim}), uz_(name + ".uz", {hidden, hidden}),
        bzx_(name + ".bzx", {hidden}), bzh_(name + ".bzh", {hidden}),
        wr_(name + ".wr", {hidden, in_dim}), ur_(name + ".ur", {hidden, hidden}),
        brx_(name + ".brx", {hidden}), brh_(name + ".brh", {hidden}),
        wh_(name + ".wh", {hidden, in_dim}), uh_(name + ".uh", {hidden, hidden}),
        bhx_(name + ".bhx", {hidden}), bhh_(name + ".bhh", {hidden}) {}

  const char* kind() const override { return "gru"; }

  Seq<T> forward(const Seq<T>& x, FwdCtx&) override {
    if (x.channels != d_) throw std::invalid_argument("gru: input width mismatch");
    const int t_len = x.steps;
    x_ = x;
    z_ = Seq<T>(t_len, h_);
    r_ = Seq<T>(t_len, h_);
    hc_ = Seq<T>(t_len, h_);
    rh_ = Seq<T>(t_len, h_);
    hs_ = Seq<T>(t_len, h_);

    std::vector<T> az(h_), ar(h_), ah(h_);
    std::vector<T> h_prev(h_, T(0));
    for (int t = 0; t < t_len; ++t) {
      const T* xt = x.row(t);
      for (int i = 0; i < h_; ++i) {
        az[i] = bzx_.value[i] + bzh_.value[i];
        ar[i] = brx_.value[i] + brh_.value[i];
      }
      detail::matvec_acc(wz_.value.data(), xt, az.data(), h_, d_);
      detail::matvec_acc(uz_.value.data(), h_prev.data(), az.data(), h_, h_);
      detail::matvec_acc(wr_.value.data(), xt, ar.data(), h_, d_);
      detail::matvec_acc(ur_.value.data(), h_prev.data(), ar.data(), h_, h_);
      T* zt = z_.row(t);
      T* rt = r_.row(t);
      T* rht = rh_.row(t);
      for (int i = 0; i < h_; ++i) {
        zt[i] = sigmoid(az[i]);
        rt[i] = sigmoid(ar[i]);
        rht[i] = rt[i] * h_prev[i];
      }
      for (int i = 0; i < h_; ++i) ah[i] = bhx_.value[i] + bhh_.value[i];
      detail::matvec_acc(wh_.value.data(), xt, ah.data(), h_, d_);
      detail::matvec_acc(uh_.value.data(), rht, ah.data(), h_, h_);
      T* hct = hc_.row(t);
      T* ht = hs_.row(t);
      for (int i = 0; i < h_; ++i) {
        hct[i] = std::tanh(ah[i]);
        ht[i] = (T(1) - zt[i]) * h_prev[i] + zt[i] * hct[i];
        h_prev[i] = ht[i];
      }
    }
    return hs_;
  }

  Seq<T> backward(const Seq<T>& dy) override {
    const int t_len = x_.steps;
    Seq<T> dx(t_len, d_);
    std::vector<T> dh(h_), dz(h_), dhc(h_), dhprev(h_), daz(h_), dar(h_), dah(h_),
        drh(h_), dr(h_);
    std::vector<T> carry(h_, T(0));
    std::vector<T> zero_prev(h_, T(0));
    for (int t = t_len - 1; t >= 0; --t) {
      const T* h_prev = t > 0 ? hs_.row(t - 1) : zero_prev.data();
      const T* zt = z_.row(t);
      const T* rt = r_.row(t);
      const T* hct = hc_.row(t);
      const T* rht = rh_.row(t);
      const T* xt = x_.row(t);
      const T* dyt = dy.row(t);

      for (int i = 0; i < h_; ++i) {
        dh[i] = dyt[i] + carry[i];
        dz[i] = dh[i] * (hct[i] - h_prev[i]);
        dhc[i] = dh[i] * zt[i];
        dhprev[i] = dh[i] * (T(1) - zt[i]);
        dah[i] = dhc[i] * (T(1) - hct[i] * hct[i]);
      }
      detail::outer_acc(wh_.grad.data(), dah.data(), xt, h_, d_);
      detail::outer_acc(uh_.grad.data(), dah.data(), rht, h_, h_);
      for (int i = 0; i < h_; ++i) {
        bhx_.grad[i] += dah[i];
        bhh_.grad[i] += dah[i];
      }
      std::fill(drh.begin(), drh.end(), T(0));
      detail::matvec_t_acc(uh_.value.data(), dah.data(), drh.data(), h_, h_);
      detail::matvec_t_acc(wh_.value.data(), dah.data(), dx.row(t), h_, d_);
      for (int i = 0; i < h_; ++i) {
        dr[i] = drh[i] * h_prev[i];
        dhprev[i] += drh[i] * rt[i];
        daz[i] = dz[i] * zt[i] * (T(1) - zt[i]);
        dar[i] = dr[i] * rt[i] * (T(1) - rt[i]);
      }
      detail::outer_acc(wz_.grad.data(), daz.data(), xt, h_, d_);
      detail::outer_acc(uz_.grad.data(), daz.data(), h_prev, h_, h_);
      detail::outer_acc(wr_.grad.data(), dar.data(), xt, h_, d_);
      detail::outer_acc(ur_.grad.data(), dar.data(), h_prev, h_, h_);
      for (int i = 0; i < h_; ++i) {
        bzx_.grad[i] += daz[i];
        bzh_.grad[i] += daz[i];
        brx_.grad[i] += dar[i];
        brh_.grad[i] += dar[i];
      }
      detail::matvec_t_acc(wz_.value.data(), daz.data(), dx.row(t), h_, d_);
      detail::matvec_t_acc(wr_.value.data(), dar.data(), dx.row(t), h_, d_);
      detail::matvec_t_acc(uz_.value.data(), daz.data(), dhprev.data(), h_, h_);
      detail::matvec_t_acc(ur_.value.data(), dar.data(), dhprev.data(), h_, h_);
      carry = dhprev;
    }
    return dx;
  }

  std::vector<Param<T>*> params() override {
    return {&wz_, &uz_, &bzx_, &bzh_, &wr_, &ur_, &brx_, &brh_, &wh_, &uh_, &bhx_, &bhh_};
  }

 private:
  int d_, h_;
  Param<T> wz_, uz_, bzx_, bzh_;
  Param<T> wr_, ur_, brx_, brh_;
  Param<T> wh_, uh_, bhx_, bhh_;
  Seq<T> x_, z_, r_, hc_, rh_, hs_;
};

// ---------------------------------------------------------------------------
// Bidirectional LSTM, h_0 = c_0 = 0 per direction, output [fwd_t ; bwd_t].
// ---------------------------------------------------------------------------
template <typename T>
class BiLstmLayer : public Layer<T> {
 public:
  BiLstmLayer(const std::string& name, int in_dim, int hidden)
      : d_(in_dim), h_(hidden),
        fwd_(name + ".fwd", in_dim, hidden),
        bwd_(name + ".bwd", in_dim, hidden) {}

  const char* kind() const override { return "bilstm"; }

  Seq<T> forward(const Seq<T>& x, FwdCtx&) override {
    if (x.channels != d_) throw std::invalid_argument("bilstm: input width mismatch");
    x_ = x;
    const int t_len = x.steps;
    Seq<T> out(t_len, 2 * h_);
    fwd_.run(x, /*reverse=*/false);
    bwd_.run(x, /*reverse=*/true);
    for (int t = 0; t < t_len; ++t) {
      T* orow = out.row(t);
      const T* hf = fwd_.hs.row(t);
      const T* hb = bwd_.hs.row(t);
      for (int i = 0; i < h_; ++i) orow[i] = hf[i];
      for (int i = 0; i < h_; ++i) orow[h_ + i] = hb[i];
    }
    return out;
  }

  Seq<T> backward(const Seq<T>& dy) override {
    const int t_len = x_.steps;
    Seq<T> dy_f(t_len, h_), dy_b(t_len, h_);
    for (int t = 0; t < t_len; ++t) {
      const T* dyr = dy.row(t);
      for (int i = 0; i < h_; ++i) dy_f.at(t, i) = dyr[i];
      for (int i = 0; i < h_; ++i) dy_b.at(t, i) = dyr[h_ + i];
    }
    Seq<T> dx(t_len, d_);
    fwd_.backprop(x_, dy_f, dx, /*reverse=*/false);
    bwd_.backprop(x_, dy_b, dx, /*reverse=*/true);
    return dx;
  }

  std::vector<Param<T>*> params() override {
    auto p = fwd_.params();
    auto q = bwd_.params();
    p.insert(p.end(), q.begin(), q.end());
    return p;
  }

  int hidden() const { return h_; }

 private:
  // One LSTM direction with its own parameters and step caches.
  struct Direction {
    int d, h;
    Param<T> wi, ui, bix, bih;
    Param<T> wf, uf, bfx, bfh;
    Param<T> wg, ug, bgx, bgh;
    Param<T> wo, uo, box, boh;
    Seq<T> ig, fg, gg, og, cs, tc, hs;  // gates, cell, tanh(cell), hidden; indexed by time

    Direction(const std::string& name, int in_dim, int hidden)
        : d(in_dim), h(hidden),
          wi(name + ".wi", {hidden, in_dim}), ui(name + ".ui", {hidden, hidden}),
          bix(name + ".bix", {hidden}), bih(name + ".bih", {hidden}),
          wf(name + ".wf", {hidden, in_dim}), uf(name + ".uf", {hidden, hidden}),
          bfx(name + ".bfx", {hidden}), bfh(name + ".bfh", {hidden}),
          wg(name + ".wg", {hidden, in_dim}), ug(name + ".ug", {hidden, hidden}),
          bgx(name + ".bgx", {hidden}), bgh(name + ".bgh", {hidden}),
          wo(name + ".wo", {hidden, in_dim}), uo(name + ".uo", {hidden, hidden}),
          box(name + ".box", {hidden}), boh(name + ".boh", {hidden}) {}

    std::vector<Param<T>*> params() {
      return {&wi, &ui, &bix, &bih, &wf, &uf, &bfx, &bfh,
              &wg, &ug, &bgx, &bgh, &wo, &uo, &box, &boh};
    }

    void run(const Seq<T>& x, bool reverse) {
      const int t_len = x.steps;
      ig = Seq<T>(t_len, h);
      fg = Seq<T>(t_len, h);
      gg = Seq<T>(t_len, h);
      og = Seq<T>(t_len, h);
      cs = Seq<T>(t_len, h);
      tc = Seq<T>(t_len, h);
      hs = Seq<T>(t_len, h);
      std::vector<T> ai(h), af(h), ag(h), ao(h);
      std::vector<T> h_prev(h, T(0)), c_prev(h, T(0));
      for (int s = 0; s < t_len; ++s) {
        const int t = reverse ? t_len - 1 - s : s;
        const T* xt = x.row(t);
        for (int i = 0; i < h; ++i) {
          ai[i] = bix.value[i] + bih.value[i];
          af[i] = bfx.value[i] + bfh.value[i];
          ag[i] = bgx.value[i] + bgh.value[i];
          ao[i] = box.value[i] + boh.value[i];
        }
        detail::matvec_acc(wi.value.data(), xt, ai.data(), h, d);
        detail::matvec_acc(ui.value.data(), h_prev.data(), ai.data(), h, h);
        detail::matvec_acc(wf.value.data(), xt, af.data(), h, d);
        detail::matvec_acc(uf.value.data(), h_prev.data(), af.data(), h, h);
        detail::matvec_acc(wg.value.data(), xt, ag.data(), h, d);
        detail::matvec_acc(ug.value.data(), h_prev.data(), ag.data(), h, h);
        detail::matvec_acc(wo.value.data(), xt, ao.data(), h, d);
        detail::matvec_acc(uo.value.data(), h_prev.data(), ao.data(), h, h);
        T* it = ig.row(t);
        T* ft = fg.row(t);
        T* gt = gg.row(t);
        T* ot = og.row(t);
        T* ct = cs.row(t);
        T* tct = tc.row(t);
        T* ht = hs.row(t);
        for (int i = 0; i < h; ++i) {
          it[i] = sigmoid(ai[i]);
          ft[i] = sigmoid(af[i]);
          gt[i] = std::tanh(ag[i]);
          ot[i] = sigmoid(ao[i]);
          ct[i] = ft[i] * c_prev[i] + it[i] * gt[i];
          tct[i] = std::tanh(ct[i]);
          ht[i] = ot[i] * tct[i];
          h_prev[i] = ht[i];
          c_prev[i] = ct[i];
        }
      }
    }

    void backprop(const Seq<T>& x, const Seq<T>& dy, Seq<T>& dx, bool reverse) {
      const int t_len = x.steps;
      std::vector<T> dh(h), dc(h), di(h), df(h), dg(h), do_(h),
          dai(h), daf(h), dag(h), dao(h), dhprev(h);
      std::vector<T> h_carry(h, T(0)), c_carry(h, T(0));
      std::vector<T> zeros(h, T(0));
      for (int s = t_len - 1; s >= 0; --s) {
        const int t = reverse ? t_len - 1 - s : s;
        const int t_prev = reverse ? t + 1 : t - 1;
        const bool has_prev = s > 0;
        const T* h_prev = has_prev ? hs.row(t_prev) : zeros.data();
        const T* c_prev = has_prev ? cs.row(t_prev) : zeros.data();
        const T* it = ig.row(t);
        const T* ft = fg.row(t);
        const T* gt = gg.row(t);
        const T* ot = og.row(t);
        const T* tct = tc.row(t);
        const T* xt = x.row(t);
        const T* dyt = dy.row(t);
        for (int i = 0; i < h; ++i) {
          dh[i] = dyt[i] + h_carry[i];
          do_[i] = dh[i] * tct[i];
          dc[i] = dh[i] * ot[i] * (T(1) - tct[i] * tct[i]) + c_carry[i];
          di[i] = dc[i] * gt[i];
          dg[i] = dc[i] * it[i];
          df[i] = dc[i] * c_prev[i];
          c_carry[i] = dc[i] * ft[i];
          dai[i] = di[i] * it[i] * (T(1) - it[i]);
          daf[i] = df[i] * ft[i] * (T(1) - ft[i]);
          dag[i] = dg[i] * (T(1) - gt[i] * gt[i]);
          dao[i] = do_[i] * ot[i] * (T(1) - ot[i]);
        }
        detail::outer_acc(wi.grad.data(), dai.data(), xt, h, d);
        detail::outer_acc(ui.grad.data(), dai.data(), h_prev, h, h);
        detail::outer_acc(wf.grad.data(), daf.data(), xt, h, d);
        detail::outer_acc(uf.grad.data(), daf.data(), h_prev, h, h);
        detail::outer_acc(wg.grad.data(), dag.data(), xt, h, d);
        detail::outer_acc(ug.grad.data(), dag.data(), h_prev, h, h);
        detail::outer_acc(wo.grad.data(), dao.data(), xt, h, d);
        detail::outer_acc(uo.grad.data(), dao.data(), h_prev, h, h);
        for (int i = 0; i < h; ++i) {
          bix.grad[i] += dai[i];
          bih.grad[i] += dai[i];
          bfx.grad[i] += daf[i];
          bfh.grad[i] += daf[i];
          bgx.grad[i] += dag[i];
          bgh.grad[i] += dag[i];
          box.grad[i] += dao[i];
          boh.grad[i] += dao[i];
        }
        T* dxt = dx.row(t);
        detail::matvec_t_acc(wi.value.data(), dai.data(), dxt, h, d);
        detail::matvec_t_acc(wf.value.data(), daf.data(), dxt, h, d);
        detail::matvec_t_acc(wg.value.data(), dag.data(), dxt, h, d);
        detail::matvec_t_acc(wo.value.data(), dao.data(), dxt, h, d);
        std::fill(dhprev.begin(), dhprev.end(), T(0));
        detail::matvec_t_acc(ui.value.data(), dai.data(), dhprev.data(), h, h);
        detail::matvec_t_acc(uf.value.data(), daf.data(), dhprev.data(), h, h);
        detail::matvec_t_acc(ug.value.data(), dag.data(), dhprev.data(), h, h);
        detail::matvec_t_acc(uo.value.data(), dao.data(), dhprev.data(), h, h);
        h_carry = dhprev;
      }
    }
  };

  int d_, h_;
  Direction fwd_, bwd_;
  Seq<T> x_;
};

}  // namespace charphish::nn
