#pragma once

#include <cmath>
#include <cstddef>
#include <random>

#include "denseseg/arch/network_spec.hpp"
#include "denseseg/arch/param_store.hpp"
#include "denseseg/core/tensor.hpp"

namespace dseg {

/// I.i.d. N(0, 2 / fan_in) samples, the rectifier-aware initialization.
template <typename T = float>
BasicTensor<T> he_init(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  if (fan_in == 0) throw ShapeError("he_init: fan_in must be positive");
  auto t = BasicTensor<T>::zeros(std::move(shape));
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (auto& v : t.data()) v = static_cast<T>(normal(rng));
  return t;
}

/// Fresh parameters for every learnable layer of `spec`: He-initialized conv
/// weights, zero biases, BN gamma = 1, beta = 0, running mean 0 / var 1.
template <typename T = float>
ParamStore<T> init_params(const NetworkSpec& spec, std::mt19937_64& rng) {
  ParamStore<T> store;
  for (const auto& [layer, roles] : expected_param_shapes(spec)) {
    auto& g = store.insert(layer);
    for (const auto& [role, shape] : roles) {
      BasicTensor<T> t;
      switch (role) {
        case ParamRole::weight: {
          // conv: [C_out, C_in, k^3] -> C_in k^3; transposed: [C_in, C_out, k^3] -> C_in
          const auto& d = spec.at(layer);
          const std::size_t fan_in = d.kind == LayerKind::conv_transpose
                                         ? shape[0]
                                         : shape[1] * shape[2] * shape[3] * shape[4];
          t = he_init<T>(shape, fan_in, rng);
          break;
        }
        case ParamRole::gamma:
        case ParamRole::running_var: t = BasicTensor<T>::full(shape, T(1)); break;
        default: t = BasicTensor<T>::zeros(shape); break;
      }
      if (!is_running_stat(role)) t.set_requires_grad(true);
      g.get(role) = std::move(t);
    }
  }
  return store;
}

}  // namespace dseg
