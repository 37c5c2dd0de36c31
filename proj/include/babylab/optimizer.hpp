#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "babylab/error.hpp"
#include "babylab/model.hpp"

namespace babylab {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
  double warmup_fraction = 0.1;
};

template <typename Real>
struct AdamWState {
  AlignedVector<Real> m;
  AlignedVector<Real> v;
  std::size_t steps = 0;
};

inline std::size_t warmup_steps(std::size_t total_steps, double warmup_fraction) {
  return static_cast<std::size_t>(std::ceil(warmup_fraction * static_cast<double>(total_steps)));
}

// Linear warmup over the first ceil(fraction * total) steps, then constant.
// step_index is zero-based.
inline double scheduled_lr(double base_lr, std::size_t step_index, std::size_t total_steps,
                           double warmup_fraction) {
  const std::size_t warmup = warmup_steps(total_steps, warmup_fraction);
  if (warmup == 0 || step_index >= warmup) return base_lr;
  return base_lr * static_cast<double>(step_index + 1) / static_cast<double>(warmup);
}

// One AdamW update with decoupled weight decay. Decay applies only to tensors
// flagged `decay` in the layout; biases and layer-norm parameters are exempt.
template <typename Real>
void adamw_step(std::span<Real> params, std::span<const Real> grads, AdamWState<Real>& state,
                std::span<const TensorInfo> layout, double lr, const AdamWConfig& cfg) {
  if (params.size() != grads.size()) throw Error("parameter and gradient sizes differ");
  if (state.m.empty()) {
    state.m.assign(params.size(), Real(0));
    state.v.assign(params.size(), Real(0));
  }
  if (state.m.size() != params.size()) throw Error("optimizer state does not match parameters");
  ++state.steps;
  const double t = static_cast<double>(state.steps);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (const auto& tensor : layout) {
    const double decay = tensor.decay ? cfg.weight_decay : 0.0;
    const std::size_t end = tensor.offset + tensor.size;
    for (std::size_t i = tensor.offset; i < end; ++i) {
      const double g = grads[i];
      const double m = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
      const double v = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
      state.m[i] = static_cast<Real>(m);
      state.v[i] = static_cast<Real>(v);
      double p = params[i];
      p -= lr * decay * p;
      p -= lr * (m / correction1) / (std::sqrt(v / correction2) + cfg.epsilon);
      params[i] = static_cast<Real>(p);
    }
  }
}

}  // namespace babylab
