#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "oneshot/autodiff/tensor.hpp"
#include "oneshot/error.hpp"

namespace oneshot::ad {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment accumulators for an ordered parameter list. Moments are allocated
/// on the first step and must stay shape-congruent afterwards.
class AdamState {
 public:
  explicit AdamState(AdamConfig config = {}) : config_(config) {}

  const AdamConfig& config() const noexcept { return config_; }
  std::uint64_t t() const noexcept { return t_; }
  const std::vector<Tensor>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor>& second_moments() const noexcept { return v_; }

 private:
  friend void adam_step(std::span<Tensor* const>, std::span<const Tensor>, AdamState&);
  AdamConfig config_;
  std::uint64_t t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

/// One bias-corrected ADAM update. A parameter whose gradient is exactly zero
/// everywhere is left untouched, moments included; the step counter still advances.
inline void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state) {
  if (params.size() != grads.size()) throw DimensionError("adam_step: parameter and gradient counts differ");
  if (state.m_.empty()) {
    for (const Tensor* p : params) {
      state.m_.emplace_back(p->shape());
      state.v_.emplace_back(p->shape());
    }
  }
  if (state.m_.size() != params.size()) throw DimensionError("adam_step: state tracks a different parameter count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i].shape() || params[i]->shape() != state.m_[i].shape())
      throw DimensionError("adam_step: shape mismatch at parameter " + std::to_string(i) + ": " +
                           to_string(params[i]->shape()) + " vs gradient " + to_string(grads[i].shape()));
  }

  const AdamConfig& c = state.config_;
  state.t_ += 1;
  const double t = static_cast<double>(state.t_);
  const double corr1 = 1.0 - std::pow(c.beta1, t);
  const double corr2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& g = grads[i];
    if (g.all_zero()) continue;
    auto p = params[i]->values();
    auto m = state.m_[i].values();
    auto v = state.v_[i].values();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
      const double mhat = m[j] / corr1;
      const double vhat = v[j] / corr2;
      p[j] -= c.lr * mhat / (std::sqrt(vhat) + c.epsilon);
    }
  }
}

}  // namespace oneshot::ad
