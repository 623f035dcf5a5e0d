#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "denseseg/core/tape.hpp"
#include "denseseg/core/tensor.hpp"
#include "denseseg/nn/batch_norm.hpp"

namespace dseg {

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  auto out = BasicTensor<T>::zeros(x.shape());
  const T* p = x.ptr();
  T* o = out.ptr();
  for (std::size_t i = 0; i < x.numel(); ++i) o[i] = p[i] > T(0) ? p[i] : T(0);
  if (auto& log = detail::kink_log(); log.active) {
    for (std::size_t i = 0; i < x.numel(); ++i) detail::note_branch(log, p[i] > T(0));
  }
  detail::check_finite(out, "relu");
  auto& tape = Tape<T>::current();
  if (tape.wants({&x})) {
    auto nx = x.node();
    tape.record("relu", {x}, out, [nx](std::span<const T> g) {
      auto gx = detail::grad_sink(nx);
      const auto& in = nx->data;
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (in[i] > T(0)) gx[i] += g[i];
      }
    });
  }
  return out;
}

// Uniform draw in [0, 1) from the top 53 bits; identical on every platform.
inline double unit_draw(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Inverted dropout: in train mode each element is zeroed with probability
/// `rate` and survivors are scaled by 1 / (1 - rate). Infer mode and rate 0
/// return `x` unchanged.
template <typename T>
BasicTensor<T> dropout(const BasicTensor<T>& x, double rate, Mode mode, std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ShapeError("dropout: rate must lie in [0, 1)");
  if (mode == Mode::infer || rate == 0.0) return x;

  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<std::uint8_t> keep(x.numel());
  auto out = BasicTensor<T>::zeros(x.shape());
  const T* p = x.ptr();
  T* o = out.ptr();
  for (std::size_t i = 0; i < x.numel(); ++i) {
    keep[i] = unit_draw(rng) >= rate ? 1 : 0;
    o[i] = keep[i] ? p[i] * scale : T(0);
  }
  auto& tape = Tape<T>::current();
  if (tape.wants({&x})) {
    auto nx = x.node();
    tape.record("dropout", {x}, out, [nx, keep = std::move(keep), scale](std::span<const T> g) {
      auto gx = detail::grad_sink(nx);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (keep[i]) gx[i] += g[i] * scale;
      }
    });
  }
  return out;
}

}  // namespace dseg
