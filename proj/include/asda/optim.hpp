#pragma once

// Adam with bias correction and decoupled weight decay, plus the
// linear-warmup cosine learning-rate schedule.

#include "asda/objective.hpp"
#include "asda/ops.hpp"

namespace asda {

struct OptimConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 0.05;  // decoupled
  double peak_lr = 5e-4;
  double eps = 1e-8;
  double warmup_epochs = 2.5;
  std::size_t total_epochs = 5;
  std::size_t batch_size = 4;

  void validate() const {
    detail::require(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0,
                    "OptimConfig: betas must lie in (0, 1)");
    detail::require(peak_lr > 0.0, "OptimConfig: peak learning rate must be positive");
  }
};

struct AdamState {
  std::vector<std::vector<double>> m, v;  // aligned with the parameter list
  std::size_t t = 0;

  void reset(const ParamMap& params) {
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(p.tensor.numel(), 0.0);
      v.emplace_back(p.tensor.numel(), 0.0);
    }
    t = 0;
  }
};

// One Adam step over `params`, reading each tensor's grad buffer. Decoupled
// weight decay (p -= lr * wd * p) applies only to decay-flagged parameters
// and is independent of the moment estimates.
inline void adam_step(ParamMap& params, AdamState& state, double lr, const OptimConfig& cfg) {
  cfg.validate();
  detail::require(state.m.size() == params.size(),
                  "adam_step: state tracks " + std::to_string(state.m.size()) +
                      " tensors, got " + std::to_string(params.size()));
  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].tensor;
    detail::require(state.m[i].size() == p.numel(),
                    "adam_step: state shape drifted at " + params[i].name);
    const std::vector<double>& g = p.grad();
    auto& data = p.data();
    for (std::size_t j = 0; j < data.size(); ++j) {
      state.m[i][j] = cfg.beta1 * state.m[i][j] + (1.0 - cfg.beta1) * g[j];
      state.v[i][j] = cfg.beta2 * state.v[i][j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double m_hat = state.m[i][j] / bc1;
      const double v_hat = state.v[i][j] / bc2;
      data[j] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
    if (params[i].decay && cfg.weight_decay > 0.0)
      for (double& v : data) v -= lr * cfg.weight_decay * v;
  }
}

// Linear ramp 0 -> peak over warmup_steps, then cosine decay to 0 at
// total_steps.
inline double cosine_warmup_lr(std::size_t step, std::size_t total_steps,
                               std::size_t warmup_steps, double peak) {
  detail::require(warmup_steps <= total_steps,
                  "cosine_warmup_lr: warmup " + std::to_string(warmup_steps) +
                      " exceeds total " + std::to_string(total_steps));
  detail::require(step <= total_steps, "cosine_warmup_lr: step " + std::to_string(step) +
                                           " beyond total " + std::to_string(total_steps));
  if (step < warmup_steps)
    return peak * static_cast<double>(step) / static_cast<double>(warmup_steps);
  if (total_steps == warmup_steps) return peak;
  const double progress = static_cast<double>(step - warmup_steps) /
                          static_cast<double>(total_steps - warmup_steps);
  return peak * 0.5 * (1.0 + std::cos(M_PI * progress));
}

}  // namespace asda
