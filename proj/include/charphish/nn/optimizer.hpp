#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "charphish/nn/tensor.hpp"

namespace charphish::nn {

// First-moment / second-moment state for one parameter tensor.
template <typename T>
struct MomentSlot {
  std::vector<T> m, v;
};

template <typename T>
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual const char* kind() const = 0;
  // Applies one update from the accumulated grads, then leaves grads intact
  // (callers zero them). Parameter order must be stable across calls.
  virtual void step(const std::vector<Param<T>*>& params) = 0;
  virtual void reset() = 0;
};

template <typename T>
class AdamOptimizer : public Optimizer<T> {
 public:
  explicit AdamOptimizer(double lr = 0.001, double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  const char* kind() const override { return "adam"; }

  void step(const std::vector<Param<T>*>& params) override {
    ensure_slots(params);
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_);
    const double c2 = 1.0 - std::pow(b2_, t_);
    for (size_t p = 0; p < params.size(); ++p) {
      auto& slot = slots_[p];
      auto& par = *params[p];
      for (size_t i = 0; i < par.value.size(); ++i) {
        const double g = static_cast<double>(par.grad[i]);
        double m = b1_ * static_cast<double>(slot.m[i]) + (1.0 - b1_) * g;
        double v = b2_ * static_cast<double>(slot.v[i]) + (1.0 - b2_) * g * g;
        slot.m[i] = static_cast<T>(m);
        slot.v[i] = static_cast<T>(v);
        const double mhat = m / c1;
        const double vhat = v / c2;
        par.value[i] = static_cast<T>(static_cast<double>(par.value[i]) -
                                      lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

  void reset() override {
    slots_.clear();
    t_ = 0;
  }

 private:
  void ensure_slots(const std::vector<Param<T>*>& params) {
    if (slots_.empty()) {
      slots_.resize(params.size());
      for (size_t p = 0; p < params.size(); ++p) {
        slots_[p].m.assign(params[p]->value.size(), T(0));
        slots_[p].v.assign(params[p]->value.size(), T(0));
      }
    } else if (slots_.size() != params.size()) {
      throw std::logic_error("adam: parameter list changed between steps");
    }
  }

  double lr_, b1_, b2_, eps_;
  long long t_ = 0;
  std::vector<MomentSlot<T>> slots_;
};

// Adam with Nesterov momentum. The first-moment estimate blends the updated
// momentum (corrected one step ahead) with the raw gradient:
//   mhat = b1*m/(1-b1^{t+1}) + (1-b1)*g/(1-b1^t)
template <typename T>
class NadamOptimizer : public Optimizer<T> {
 public:
  explicit NadamOptimizer(double lr = 0.001, double beta1 = 0.9, double beta2 = 0.999,
                          double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  const char* kind() const override { return "nadam"; }

  void step(const std::vector<Param<T>*>& params) override {
    ensure_slots(params);
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_);
    const double c1_next = 1.0 - std::pow(b1_, t_ + 1);
    const double c2 = 1.0 - std::pow(b2_, t_);
    for (size_t p = 0; p < params.size(); ++p) {
      auto& slot = slots_[p];
      auto& par = *params[p];
      for (size_t i = 0; i < par.value.size(); ++i) {
        const double g = static_cast<double>(par.grad[i]);
        double m = b1_ * static_cast<double>(slot.m[i]) + (1.0 - b1_) * g;
        double v = b2_ * static_cast<double>(slot.v[i]) + (1.0 - b2_) * g * g;
        slot.m[i] = static_cast<T>(m);
        slot.v[i] = static_cast<T>(v);
        const double mhat = b1_ * m / c1_next + (1.0 - b1_) * g / c1;
        const double vhat = v / c2;
        par.value[i] = static_cast<T>(static_cast<double>(par.value[i]) -
                                      lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

  void reset() override {
    slots_.clear();
    t_ = 0;
  }

 private:
  void ensure_slots(const std::vector<Param<T>*>& params) {
    if (slots_.empty()) {
      slots_.resize(params.size());
      for (size_t p = 0; p < params.size(); ++p) {
        slots_[p].m.assign(params[p]->value.size(), T(0));
        slots_[p].v.assign(params[p]->value.size(), T(0));
      }
    } else if (slots_.size() != params.size()) {
      throw std::logic_error("nadam: parameter list changed between steps");
    }
  }

  double lr_, b1_, b2_, eps_;
  long long t_ = 0;
  std::vector<MomentSlot<T>> slots_;
};

template <typename T>
std::unique_ptr<Optimizer<T>> make_optimizer(const std::string& name, double lr) {
  if (name == "adam") return std::make_unique<AdamOptimizer<T>>(lr);
  if (name == "nadam") return std::make_unique<NadamOptimizer<T>>(lr);
  throw std::invalid_argument("unknown optimizer: " + name);
}

}  // namespace charphish::nn
