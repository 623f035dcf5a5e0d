#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "denseseg/core/tape.hpp"
#include "denseseg/core/tensor.hpp"

namespace dseg {

enum class Mode { train, infer };

/// Per-channel batch-norm parameters and running statistics. Handles share
/// storage with the owning ParamStore, so running-stat updates persist.
template <typename T>
struct BnState {
  BasicTensor<T> gamma;         // [C], learned
  BasicTensor<T> beta;          // [C], learned
  BasicTensor<T> running_mean;  // [C]
  BasicTensor<T> running_var;   // [C], unbiased batch variance average
  double momentum = 0.9;        // weight kept by the running average per update
  double eps = 1e-5;

  static BnState identity(std::size_t channels) {
    BnState s;
    s.gamma = BasicTensor<T>::full({channels}, T(1));
    s.beta = BasicTensor<T>::zeros({channels});
    s.running_mean = BasicTensor<T>::zeros({channels});
    s.running_var = BasicTensor<T>::full({channels}, T(1));
    return s;
  }
};

/// Train mode normalizes with batch statistics over (N, D, H, W) and folds
/// them into the running averages; infer mode uses the running averages and
/// leaves the state untouched.
template <typename T>
BasicTensor<T> batch_norm(const BasicTensor<T>& x, BnState<T>& st, Mode mode) {
  require_rank5(x.shape(), "batch_norm");
  const std::size_t batch = x.dim(0);
  const std::size_t channels = x.dim(1);
  const std::size_t spatial = x.spatial_numel();
  if (st.gamma.numel() != channels || st.beta.numel() != channels ||
      st.running_mean.numel() != channels || st.running_var.numel() != channels) {
    throw ShapeError("batch_norm: state extent does not match " + std::to_string(channels) +
                     " channels");
  }
  const std::size_t count = batch * spatial;
  if (mode == Mode::train && count < 2) {
    throw ShapeError("batch_norm: train mode needs at least 2 values per channel");
  }

  std::vector<double> mean(channels), invstd(channels);
  if (mode == Mode::train) {
    for (std::size_t c = 0; c < channels; ++c) {
      double s = 0.0;
      for (std::size_t n = 0; n < batch; ++n) {
        const T* p = x.ptr() + (n * channels + c) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t n = 0; n < batch; ++n) {
        const T* p = x.ptr() + (n * channels + c) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) {
          const double d = p[i] - mu;
          ss += d * d;
        }
      }
      const double var = ss / static_cast<double>(count);
      mean[c] = mu;
      invstd[c] = 1.0 / std::sqrt(var + st.eps);
      const double unbiased = ss / static_cast<double>(count - 1);
      st.running_mean[c] =
          static_cast<T>(st.momentum * st.running_mean[c] + (1.0 - st.momentum) * mu);
      st.running_var[c] =
          static_cast<T>(st.momentum * st.running_var[c] + (1.0 - st.momentum) * unbiased);
    }
  } else {
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = st.running_mean[c];
      invstd[c] = 1.0 / std::sqrt(static_cast<double>(st.running_var[c]) + st.eps);
    }
  }

  auto out = BasicTensor<T>::zeros(x.shape());
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const T* p = x.ptr() + (n * channels + c) * spatial;
      T* o = out.ptr() + (n * channels + c) * spatial;
      const double scale = st.gamma[c] * invstd[c];
      const double shift = st.beta[c] - mean[c] * scale;
      for (std::size_t i = 0; i < spatial; ++i) o[i] = static_cast<T>(p[i] * scale + shift);
    }
  }
  detail::check_finite(out, "batch_norm");

  auto& tape = Tape<T>::current();
  if (tape.wants({&x, &st.gamma, &st.beta})) {
    auto nx = x.node();
    auto ng = st.gamma.node();
    auto nb = st.beta.node();
    const bool train = mode == Mode::train;
    tape.record("batch_norm", {x, st.gamma, st.beta}, out,
                [nx, ng, nb, mean, invstd, train, batch, channels, spatial](std::span<const T> g) {
                  auto gx = detail::grad_sink(nx);
                  auto ggamma = detail::grad_sink(ng);
                  auto gbeta = detail::grad_sink(nb);
                  const double m = static_cast<double>(batch * spatial);
                  for (std::size_t c = 0; c < channels; ++c) {
                    double sum_g = 0.0, sum_gx = 0.0;
                    for (std::size_t n = 0; n < batch; ++n) {
                      const std::size_t off = (n * channels + c) * spatial;
                      const T* p = nx->data.data() + off;
                      const T* gp = g.data() + off;
                      for (std::size_t i = 0; i < spatial; ++i) {
                        sum_g += gp[i];
                        sum_gx += gp[i] * ((p[i] - mean[c]) * invstd[c]);
                      }
                    }
                    if (!ggamma.empty()) ggamma[c] += static_cast<T>(sum_gx);
                    if (!gbeta.empty()) gbeta[c] += static_cast<T>(sum_g);
                    if (gx.empty()) continue;
                    const double scale = ng->data[c] * invstd[c];
                    for (std::size_t n = 0; n < batch; ++n) {
                      const std::size_t off = (n * channels + c) * spatial;
                      const T* p = nx->data.data() + off;
                      const T* gp = g.data() + off;
                      T* dx = gx.data() + off;
                      if (train) {
                        const double mg = sum_g / m;
                        const double mgx = sum_gx / m;
                        for (std::size_t i = 0; i < spatial; ++i) {
                          const double xhat = (p[i] - mean[c]) * invstd[c];
                          dx[i] += static_cast<T>(scale * (gp[i] - mg - xhat * mgx));
                        }
                      } else {
                        for (std::size_t i = 0; i < spatial; ++i) {
                          dx[i] += static_cast<T>(scale * gp[i]);
                        }
                      }
                    }
                  }
                });
  }
  return out;
}

}  // namespace dseg
