#pragma once

#include <algorithm>
#include <cstring>
#include <span>
#include <vector>

#include "denseseg/core/tape.hpp"
#include "denseseg/core/tensor.hpp"

namespace dseg {

enum class BinaryKind { add, sub, mul, max };

namespace detail {

template <typename T>
T apply_binary(BinaryKind kind, T a, T b) {
  switch (kind) {
    case BinaryKind::add: return a + b;
    case BinaryKind::sub: return a - b;
    case BinaryKind::mul: return a * b;
    case BinaryKind::max: return a > b ? a : b;
  }
  return a;
}

inline const char* binary_name(BinaryKind kind) {
  switch (kind) {
    case BinaryKind::add: return "add";
    case BinaryKind::sub: return "sub";
    case BinaryKind::mul: return "mul";
    case BinaryKind::max: return "max";
  }
  return "?";
}

}  // namespace detail

/// out[i] = kind(a[i], b[i]); shapes must match exactly (no broadcasting).
/// For `max`, a tie routes the gradient to `a`.
template <typename T>
BasicTensor<T> elementwise(const BasicTensor<T>& a, const BasicTensor<T>& b, BinaryKind kind) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(detail::binary_name(kind)) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  auto out = BasicTensor<T>::zeros(a.shape());
  const T* pa = a.ptr();
  const T* pb = b.ptr();
  T* po = out.ptr();
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) po[i] = detail::apply_binary(kind, pa[i], pb[i]);
  if (auto& log = detail::kink_log(); log.active && kind == BinaryKind::max) {
    for (std::size_t i = 0; i < n; ++i) detail::note_branch(log, pa[i] >= pb[i]);
  }
  detail::check_finite(out, detail::binary_name(kind));

  auto& tape = Tape<T>::current();
  if (tape.wants({&a, &b})) {
    auto na = a.node();
    auto nb = b.node();
    tape.record(detail::binary_name(kind), {a, b}, out, [na, nb, kind](std::span<const T> g) {
      auto ga = detail::grad_sink(na);
      auto gb = detail::grad_sink(nb);
      const auto& va = na->data;
      const auto& vb = nb->data;
      for (std::size_t i = 0; i < g.size(); ++i) {
        switch (kind) {
          case BinaryKind::add:
            if (!ga.empty()) ga[i] += g[i];
            if (!gb.empty()) gb[i] += g[i];
            break;
          case BinaryKind::sub:
            if (!ga.empty()) ga[i] += g[i];
            if (!gb.empty()) gb[i] -= g[i];
            break;
          case BinaryKind::mul:
            if (!ga.empty()) ga[i] += g[i] * vb[i];
            if (!gb.empty()) gb[i] += g[i] * va[i];
            break;
          case BinaryKind::max:
            if (va[i] >= vb[i]) {
              if (!ga.empty()) ga[i] += g[i];
            } else if (!gb.empty()) {
              gb[i] += g[i];
            }
            break;
        }
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> elementwise(const BasicTensor<T>& a, T b, BinaryKind kind) {
  auto out = BasicTensor<T>::zeros(a.shape());
  const T* pa = a.ptr();
  T* po = out.ptr();
  for (std::size_t i = 0; i < a.numel(); ++i) po[i] = detail::apply_binary(kind, pa[i], b);
  if (auto& log = detail::kink_log(); log.active && kind == BinaryKind::max) {
    for (std::size_t i = 0; i < a.numel(); ++i) detail::note_branch(log, pa[i] >= b);
  }
  detail::check_finite(out, detail::binary_name(kind));

  auto& tape = Tape<T>::current();
  if (tape.wants({&a})) {
    auto na = a.node();
    tape.record(detail::binary_name(kind), {a}, out, [na, b, kind](std::span<const T> g) {
      auto ga = detail::grad_sink(na);
      if (ga.empty()) return;
      const auto& va = na->data;
      for (std::size_t i = 0; i < g.size(); ++i) {
        switch (kind) {
          case BinaryKind::add:
          case BinaryKind::sub: ga[i] += g[i]; break;
          case BinaryKind::mul: ga[i] += g[i] * b; break;
          case BinaryKind::max:
            if (va[i] >= b) ga[i] += g[i];
            break;
        }
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> operator+(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(a, b, BinaryKind::add);
}
template <typename T>
BasicTensor<T> operator-(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(a, b, BinaryKind::sub);
}
template <typename T>
BasicTensor<T> operator*(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(a, b, BinaryKind::mul);
}
template <typename T>
BasicTensor<T> operator*(const BasicTensor<T>& a, T s) {
  return elementwise(a, s, BinaryKind::mul);
}
template <typename T>
BasicTensor<T> operator+(const BasicTensor<T>& a, T s) {
  return elementwise(a, s, BinaryKind::add);
}

/// Sum of all elements as a one-element tensor (64-bit accumulator).
template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  double acc = 0.0;
  for (T v : x.data()) acc += static_cast<double>(v);
  auto out = BasicTensor<T>::scalar(static_cast<T>(acc));
  detail::check_finite(out, "sum");
  auto& tape = Tape<T>::current();
  if (tape.wants({&x})) {
    auto nx = x.node();
    tape.record("sum", {x}, out, [nx](std::span<const T> g) {
      auto gx = detail::grad_sink(nx);
      for (auto& v : gx) v += g[0];
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
  return elementwise(sum(x), static_cast<T>(1.0 / static_cast<double>(x.numel())),
                     BinaryKind::mul);
}

/// Concatenates [N, C_i, D, H, W] tensors along the channel axis, in order.
template <typename T>
BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels: empty input list");
  for (const auto& x : xs) require_rank5(x.shape(), "concat_channels");
  const auto& ref = xs.front().shape();
  std::size_t channels = 0;
  for (const auto& x : xs) {
    const auto& s = x.shape();
    if (s[0] != ref[0] || s[2] != ref[2] || s[3] != ref[3] || s[4] != ref[4]) {
      throw ShapeError("concat_channels: batch/spatial mismatch " + shape_str(s) + " vs " +
                       shape_str(ref));
    }
    channels += s[1];
  }
  if (xs.size() == 1) return xs.front();

  const std::size_t batch = ref[0];
  const std::size_t spatial = ref[2] * ref[3] * ref[4];
  auto out = BasicTensor<T>::zeros({batch, channels, ref[2], ref[3], ref[4]});
  T* po = out.ptr();
  for (std::size_t n = 0; n < batch; ++n) {
    std::size_t offset = 0;
    for (const auto& x : xs) {
      const std::size_t block = x.dim(1) * spatial;
      std::memcpy(po + (n * channels * spatial) + offset, x.ptr() + n * block, block * sizeof(T));
      offset += block;
    }
  }

  auto& tape = Tape<T>::current();
  if (tape.wants(xs)) {
    std::vector<NodePtr<T>> nodes;
    for (const auto& x : xs) nodes.push_back(x.node());
    tape.record("concat_channels", xs, out,
                [nodes, batch, channels, spatial](std::span<const T> g) {
                  for (std::size_t n = 0; n < batch; ++n) {
                    std::size_t offset = n * channels * spatial;
                    for (const auto& node : nodes) {
                      const std::size_t block = node->shape[1] * spatial;
                      auto gx = detail::grad_sink(node);
                      if (!gx.empty()) {
                        T* dst = gx.data() + n * block;
                        const T* src = g.data() + offset;
                        for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                      }
                      offset += block;
                    }
                  }
                });
  }
  return out;
}

/// Channels [begin, end) of a [N, C, D, H, W] tensor.
template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& x, std::size_t begin, std::size_t end) {
  require_rank5(x.shape(), "slice_channels");
  if (begin >= end || end > x.dim(1)) {
    throw ShapeError("slice_channels: invalid range for " + shape_str(x.shape()));
  }
  const std::size_t batch = x.dim(0);
  const std::size_t channels = x.dim(1);
  const std::size_t spatial = x.spatial_numel();
  const std::size_t width = end - begin;
  auto out = BasicTensor<T>::zeros({batch, width, x.dim(2), x.dim(3), x.dim(4)});
  for (std::size_t n = 0; n < batch; ++n) {
    std::memcpy(out.ptr() + n * width * spatial, x.ptr() + (n * channels + begin) * spatial,
                width * spatial * sizeof(T));
  }
  auto& tape = Tape<T>::current();
  if (tape.wants({&x})) {
    auto nx = x.node();
    tape.record("slice_channels", {x}, out,
                [nx, batch, channels, spatial, begin, width](std::span<const T> g) {
                  auto gx = detail::grad_sink(nx);
                  for (std::size_t n = 0; n < batch; ++n) {
                    T* dst = gx.data() + (n * channels + begin) * spatial;
                    const T* src = g.data() + n * width * spatial;
                    for (std::size_t i = 0; i < width * spatial; ++i) dst[i] += src[i];
                  }
                });
  }
  return out;
}

}  // namespace dseg
