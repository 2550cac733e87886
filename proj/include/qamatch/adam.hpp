#pragma once

#include <cmath>
#include <cstdint>
#include <unordered_map>

#include "qamatch/graph.hpp"

namespace qamatch::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam. Moment buffers are keyed by parameter name and
/// created lazily on the first step.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  std::int64_t steps() const { return step_; }

  /// In-place update of every parameter from its gradient buffer.
  void step(ParameterSet& params, double lr) {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (Parameter& p : params) {
      Moments& mo = slots_[p.name];
      if (mo.m.size() != p.value.size()) {
        mo.m = Tensor::zeros(p.value.shape);
        mo.v = Tensor::zeros(p.value.shape);
      }
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i];
        mo.m[i] = cfg_.beta1 * mo.m[i] + (1.0 - cfg_.beta1) * g;
        mo.v[i] = cfg_.beta2 * mo.v[i] + (1.0 - cfg_.beta2) * g * g;
        const double mhat = mo.m[i] / bc1;
        const double vhat = mo.v[i] / bc2;
        p.value[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

 private:
  struct Moments {
    Tensor m, v;
  };

  AdamConfig cfg_;
  std::unordered_map<std::string, Moments> slots_;
  std::int64_t step_ = 0;
};

}  // namespace qamatch::nn
