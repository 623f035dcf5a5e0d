#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "denseseg/core/tape.hpp"
#include "denseseg/core/tensor.hpp"

namespace dseg {

/// Per-voxel softmax over the channel axis of [N, C, D, H, W].
template <typename T>
BasicTensor<T> softmax_channels(const BasicTensor<T>& x) {
  require_rank5(x.shape(), "softmax_channels");
  const std::size_t batch = x.dim(0);
  const std::size_t channels = x.dim(1);
  const std::size_t spatial = x.spatial_numel();
  auto out = BasicTensor<T>::zeros(x.shape());
  for (std::size_t n = 0; n < batch; ++n) {
    const T* in = x.ptr() + n * channels * spatial;
    T* o = out.ptr() + n * channels * spatial;
    for (std::size_t v = 0; v < spatial; ++v) {
      double peak = in[v];
      for (std::size_t c = 1; c < channels; ++c) peak = std::max<double>(peak, in[c * spatial + v]);
      double z = 0.0;
      for (std::size_t c = 0; c < channels; ++c) z += std::exp(in[c * spatial + v] - peak);
      for (std::size_t c = 0; c < channels; ++c) {
        o[c * spatial + v] = static_cast<T>(std::exp(in[c * spatial + v] - peak) / z);
      }
    }
  }
  detail::check_finite(out, "softmax_channels");

  auto& tape = Tape<T>::current();
  if (tape.wants({&x})) {
    auto nx = x.node();
    auto probs = out.node()->data;
    tape.record("softmax_channels", {x}, out,
                [nx, probs = std::move(probs), batch, channels, spatial](std::span<const T> g) {
                  auto gx = detail::grad_sink(nx);
                  for (std::size_t n = 0; n < batch; ++n) {
                    const std::size_t base = n * channels * spatial;
                    for (std::size_t v = 0; v < spatial; ++v) {
                      double dot = 0.0;
                      for (std::size_t c = 0; c < channels; ++c) {
                        const std::size_t i = base + c * spatial + v;
                        dot += static_cast<double>(g[i]) * probs[i];
                      }
                      for (std::size_t c = 0; c < channels; ++c) {
                        const std::size_t i = base + c * spatial + v;
                        gx[i] += static_cast<T>(probs[i] * (g[i] - dot));
                      }
                    }
                  }
                });
  }
  return out;
}

/// Mean over all voxels of -log softmax(logits)[label]. `labels` is the
/// [N, D, H, W] class grid flattened row-major.
template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, std::span<const std::uint8_t> labels) {
  require_rank5(logits.shape(), "cross_entropy");
  const std::size_t batch = logits.dim(0);
  const std::size_t channels = logits.dim(1);
  const std::size_t spatial = logits.spatial_numel();
  if (labels.size() != batch * spatial) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(batch * spatial) + " voxels");
  }
  for (auto l : labels) {
    if (l >= channels) {
      throw ShapeError("cross_entropy: label " + std::to_string(l) + " outside [0, " +
                       std::to_string(channels) + ")");
    }
  }

  const double voxels = static_cast<double>(batch * spatial);
  std::vector<T> probs(logits.numel());
  double total = 0.0;
  for (std::size_t n = 0; n < batch; ++n) {
    const std::size_t base = n * channels * spatial;
    const T* in = logits.ptr() + base;
    for (std::size_t v = 0; v < spatial; ++v) {
      double peak = in[v];
      for (std::size_t c = 1; c < channels; ++c) peak = std::max<double>(peak, in[c * spatial + v]);
      double z = 0.0;
      for (std::size_t c = 0; c < channels; ++c) z += std::exp(in[c * spatial + v] - peak);
      const double log_z = std::log(z) + peak;
      const std::size_t label = labels[n * spatial + v];
      total += log_z - in[label * spatial + v];
      for (std::size_t c = 0; c < channels; ++c) {
        probs[base + c * spatial + v] = static_cast<T>(std::exp(in[c * spatial + v] - log_z));
      }
    }
  }
  auto out = BasicTensor<T>::scalar(static_cast<T>(total / voxels));
  detail::check_finite(out, "cross_entropy");

  auto& tape = Tape<T>::current();
  if (tape.wants({&logits})) {
    auto nl = logits.node();
    std::vector<std::uint8_t> lab(labels.begin(), labels.end());
    tape.record("cross_entropy", {logits}, out,
                [nl, probs = std::move(probs), lab = std::move(lab), batch, channels, spatial,
                 voxels](std::span<const T> g) {
                  auto gx = detail::grad_sink(nl);
                  const double scale = static_cast<double>(g[0]) / voxels;
                  for (std::size_t n = 0; n < batch; ++n) {
                    const std::size_t base = n * channels * spatial;
                    for (std::size_t c = 0; c < channels; ++c) {
                      for (std::size_t v = 0; v < spatial; ++v) {
                        const std::size_t i = base + c * spatial + v;
                        const double onehot = lab[n * spatial + v] == c ? 1.0 : 0.0;
                        gx[i] += static_cast<T>((probs[i] - onehot) * scale);
                      }
                    }
                  }
                });
  }
  return out;
}

}  // namespace dseg
