#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "denseseg/arch/param_store.hpp"
#include "denseseg/core/tensor.hpp"
#include "denseseg/train/config.hpp"

namespace dseg {

/// lr0 * gamma^floor(iter / step_size)
inline double lr_at(std::size_t iter, const TrainConfig& cfg) {
  return cfg.lr0 * std::pow(cfg.gamma, static_cast<double>(iter / cfg.step_size));
}

struct AdamConfig {
  double beta1 = 0.97;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  bool decoupled = false;

  static AdamConfig from(const TrainConfig& c) {
    return {c.beta1, c.beta2, c.eps, c.weight_decay, c.decoupled_weight_decay};
  }
};

/// A trainable tensor; `decay` selects whether weight decay applies to it.
template <typename T>
struct ParamRef {
  std::string name;
  BasicTensor<T> tensor;
  bool decay = true;
};

struct OptimState {
  std::map<std::string, std::vector<double>> m, v;
  std::size_t t = 0;
};

/// Learned tensors of `store`; BN gamma/beta are exempt from weight decay.
template <typename T>
std::vector<ParamRef<T>> trainable_params(ParamStore<T>& store) {
  std::vector<ParamRef<T>> out;
  store.for_each([&](const std::string& layer, ParamRole role, BasicTensor<T>& t) {
    if (is_running_stat(role)) return;
    const bool decay = role == ParamRole::weight || role == ParamRole::bias;
    out.push_back({layer + "/" + to_string(role), t, decay});
  });
  return out;
}

/// One bias-corrected Adam update. Classic mode folds weight decay into the
/// gradient before the moments; decoupled mode shrinks the weights directly.
/// Throws NumericError, leaving every parameter untouched, if a gradient is
/// not finite.
template <typename T>
void adam_step(std::vector<ParamRef<T>>& params, OptimState& state, double lr, const AdamConfig& cfg) {
  for (const auto& p : params) {
    if (p.tensor.has_grad() && !all_finite<T>(p.tensor.grad())) {
      throw NumericError("adam_step: non-finite gradient in " + p.name);
    }
  }
  const std::size_t t = state.t + 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (auto& p : params) {
    auto& m = state.m[p.name];
    auto& v = state.v[p.name];
    const std::size_t n = p.tensor.numel();
    if (m.size() != n) {
      m.assign(n, 0.0);
      v.assign(n, 0.0);
    }
    const auto grad = p.tensor.grad();
    const bool has_grad = !grad.empty();
    const double lambda = p.decay ? cfg.weight_decay : 0.0;
    auto data = p.tensor.data();
    for (std::size_t i = 0; i < n; ++i) {
      const double w = data[i];
      double g = has_grad ? static_cast<double>(grad[i]) : 0.0;
      if (!cfg.decoupled) g += lambda * w;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      double next = w - lr * mhat / (std::sqrt(vhat) + cfg.eps);
      if (cfg.decoupled) next -= lr * lambda * w;
      data[i] = static_cast<T>(next);
    }
  }
  state.t = t;
}

}  // namespace dseg
