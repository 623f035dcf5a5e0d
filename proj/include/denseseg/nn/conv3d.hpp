#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstring>
#include <string>
#include <vector>

#include "denseseg/core/gemm.hpp"
#include "denseseg/core/tape.hpp"
#include "denseseg/core/tensor.hpp"

namespace dseg {

/// Weights of a cubic-kernel 3D convolution. `bias` may be left undefined.
template <typename T>
struct ConvParams {
  BasicTensor<T> weight;  // [C_out, C_in, k, k, k]
  BasicTensor<T> bias;    // [C_out] or undefined
  std::size_t stride = 1;
  std::size_t padding = 0;
};

inline std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                                   std::size_t padding) {
  const auto padded = static_cast<long long>(in + 2 * padding);
  const auto span = padded - static_cast<long long>(kernel);
  if (span < 0 || stride == 0) return 0;
  return static_cast<std::size_t>(span) / stride + 1;
}

namespace detail {

// Geometry of a convolution mapping `in` extents to `out` extents.
struct ConvGeometry {
  std::size_t channels = 0;  // channels of the im2col source
  std::array<std::size_t, 3> in{};
  std::array<std::size_t, 3> out{};
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t in_numel() const { return in[0] * in[1] * in[2]; }
  std::size_t out_plane() const { return out[1] * out[2]; }
  std::size_t out_numel() const { return out[0] * out_plane(); }
  std::size_t rows() const { return channels * kernel * kernel * kernel; }
};

// Output index range [lo, hi) whose tap `kt` lands inside [0, in).
inline void valid_range(std::size_t out, std::size_t in, std::size_t kt, std::size_t stride,
                        std::size_t padding, std::size_t& lo, std::size_t& hi) {
  // o*stride + kt - padding in [0, in)
  const long long s = static_cast<long long>(stride);
  const long long off = static_cast<long long>(kt) - static_cast<long long>(padding);
  long long first = off >= 0 ? 0 : (-off + s - 1) / s;
  long long last = (static_cast<long long>(in) - 1 - off);  // o*s <= last
  long long end = last < 0 ? 0 : last / s + 1;
  first = std::min<long long>(first, static_cast<long long>(out));
  end = std::clamp<long long>(end, first, static_cast<long long>(out));
  lo = static_cast<std::size_t>(first);
  hi = static_cast<std::size_t>(end);
}

// Writes rows × (output slices [d0, d1)) of the unfolded input into `col`.
template <typename T>
void im2col(const T* src, const ConvGeometry& g, std::size_t d0, std::size_t d1, T* col) {
  const std::size_t k = g.kernel;
  const std::size_t cols = (d1 - d0) * g.out_plane();
  const std::size_t in_plane = g.in[1] * g.in[2];
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* chan = src + c * g.in_numel();
    for (std::size_t kd = 0; kd < k; ++kd) {
      for (std::size_t kh = 0; kh < k; ++kh) {
        std::size_t h_lo, h_hi;
        valid_range(g.out[1], g.in[1], kh, g.stride, g.padding, h_lo, h_hi);
        for (std::size_t kw = 0; kw < k; ++kw, ++row) {
          std::size_t w_lo, w_hi;
          valid_range(g.out[2], g.in[2], kw, g.stride, g.padding, w_lo, w_hi);
          T* dst = col + row * cols;
          for (std::size_t od = d0; od < d1; ++od) {
            T* plane = dst + (od - d0) * g.out_plane();
            const long long id = static_cast<long long>(od * g.stride + kd) -
                                 static_cast<long long>(g.padding);
            if (id < 0 || id >= static_cast<long long>(g.in[0])) {
              std::fill(plane, plane + g.out_plane(), T(0));
              continue;
            }
            const T* in_plane_ptr = chan + static_cast<std::size_t>(id) * in_plane;
            for (std::size_t oh = 0; oh < g.out[1]; ++oh) {
              T* line = plane + oh * g.out[2];
              if (oh < h_lo || oh >= h_hi) {
                std::fill(line, line + g.out[2], T(0));
                continue;
              }
              const std::size_t ih = oh * g.stride + kh - g.padding;
              const T* in_line = in_plane_ptr + ih * g.in[2];
              std::fill(line, line + w_lo, T(0));
              if (g.stride == 1) {
                const std::size_t iw0 = w_lo + kw - g.padding;
                std::memcpy(line + w_lo, in_line + iw0, (w_hi - w_lo) * sizeof(T));
              } else {
                for (std::size_t ow = w_lo; ow < w_hi; ++ow) {
                  line[ow] = in_line[ow * g.stride + kw - g.padding];
                }
              }
              std::fill(line + w_hi, line + g.out[2], T(0));
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds `col` back onto `dst`.
template <typename T>
void col2im(const T* col, const ConvGeometry& g, std::size_t d0, std::size_t d1, T* dst) {
  const std::size_t k = g.kernel;
  const std::size_t cols = (d1 - d0) * g.out_plane();
  const std::size_t in_plane = g.in[1] * g.in[2];
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* chan = dst + c * g.in_numel();
    for (std::size_t kd = 0; kd < k; ++kd) {
      for (std::size_t kh = 0; kh < k; ++kh) {
        std::size_t h_lo, h_hi;
        valid_range(g.out[1], g.in[1], kh, g.stride, g.padding, h_lo, h_hi);
        for (std::size_t kw = 0; kw < k; ++kw, ++row) {
          std::size_t w_lo, w_hi;
          valid_range(g.out[2], g.in[2], kw, g.stride, g.padding, w_lo, w_hi);
          const T* src = col + row * cols;
          for (std::size_t od = d0; od < d1; ++od) {
            const long long id = static_cast<long long>(od * g.stride + kd) -
                                 static_cast<long long>(g.padding);
            if (id < 0 || id >= static_cast<long long>(g.in[0])) continue;
            const T* plane = src + (od - d0) * g.out_plane();
            T* out_plane_ptr = chan + static_cast<std::size_t>(id) * in_plane;
            for (std::size_t oh = h_lo; oh < h_hi; ++oh) {
              const std::size_t ih = oh * g.stride + kh - g.padding;
              const T* line = plane + oh * g.out[2];
              T* out_line = out_plane_ptr + ih * g.in[2];
              for (std::size_t ow = w_lo; ow < w_hi; ++ow) {
                out_line[ow * g.stride + kw - g.padding] += line[ow];
              }
            }
          }
        }
      }
    }
  }
}

// Output depth slices per im2col chunk, bounding the buffer to ~16 MB.
template <typename T>
std::size_t slices_per_chunk(const ConvGeometry& g) {
  constexpr std::size_t budget = (std::size_t{16} << 20) / sizeof(T);
  const std::size_t per_slice = std::max<std::size_t>(1, g.rows() * g.out_plane());
  return std::clamp<std::size_t>(budget / per_slice, 1, g.out[0]);
}

inline bool is_pointwise(const ConvGeometry& g) {
  return g.kernel == 1 && g.stride == 1 && g.padding == 0;
}

// out_n[C_out][S_out] (=|+=) W[C_out][rows] x unfold(x_n)
template <typename T>
void conv_forward_sample(const T* x, const T* w, std::size_t c_out, const ConvGeometry& g,
                         T* out, std::vector<T>& col) {
  using Eigen::Index;
  const Index rows = static_cast<Index>(g.rows());
  const Index s_out = static_cast<Index>(g.out_numel());
  if (is_pointwise(g)) {
    gemm<T>(Trans::no, Trans::no, static_cast<Index>(c_out), s_out, rows, w, rows, x, s_out, false,
            out, s_out);
    return;
  }
  const std::size_t chunk = slices_per_chunk<T>(g);
  for (std::size_t d0 = 0; d0 < g.out[0]; d0 += chunk) {
    const std::size_t d1 = std::min(g.out[0], d0 + chunk);
    const Index cols = static_cast<Index>((d1 - d0) * g.out_plane());
    col.resize(static_cast<std::size_t>(rows * cols));
    im2col(x, g, d0, d1, col.data());
    gemm<T>(Trans::no, Trans::no, static_cast<Index>(c_out), cols, rows, w, rows, col.data(), cols,
            false, out + d0 * g.out_plane(), s_out);
  }
}

// grad_w[C_out][rows] += gout_n x unfold(x_n)^T ; grad_x_n += fold(W^T x gout_n)
template <typename T>
void conv_backward_sample(const T* x, const T* w, const T* gout, std::size_t c_out,
                          const ConvGeometry& g, T* grad_w, T* grad_x, std::vector<T>& col,
                          std::vector<T>& gcol) {
  using Eigen::Index;
  const Index rows = static_cast<Index>(g.rows());
  const Index s_out = static_cast<Index>(g.out_numel());
  const Index co = static_cast<Index>(c_out);
  if (is_pointwise(g)) {
    if (grad_w) gemm<T>(Trans::no, Trans::yes, co, rows, s_out, gout, s_out, x, s_out, true, grad_w, rows);
    if (grad_x) gemm<T>(Trans::yes, Trans::no, rows, s_out, co, w, rows, gout, s_out, true, grad_x, s_out);
    return;
  }
  const std::size_t chunk = slices_per_chunk<T>(g);
  for (std::size_t d0 = 0; d0 < g.out[0]; d0 += chunk) {
    const std::size_t d1 = std::min(g.out[0], d0 + chunk);
    const Index cols = static_cast<Index>((d1 - d0) * g.out_plane());
    const T* gchunk = gout + d0 * g.out_plane();
    if (grad_w) {
      col.resize(static_cast<std::size_t>(rows * cols));
      im2col(x, g, d0, d1, col.data());
      gemm<T>(Trans::no, Trans::yes, co, rows, cols, gchunk, s_out, col.data(), cols, true, grad_w,
              rows);
    }
    if (grad_x) {
      gcol.resize(static_cast<std::size_t>(rows * cols));
      gemm<T>(Trans::yes, Trans::no, rows, cols, co, w, rows, gchunk, s_out, false, gcol.data(),
              cols);
      col2im(gcol.data(), g, d0, d1, grad_x);
    }
  }
}

}  // namespace detail

/// Zero-padded 3D cross-correlation over [N, C_in, D, H, W] with a cubic
/// kernel. Output extent per axis is floor((D + 2p - k) / s) + 1.
template <typename T>
BasicTensor<T> conv3d(const BasicTensor<T>& x, const ConvParams<T>& p) {
  require_rank5(x.shape(), "conv3d");
  const auto& w = p.weight;
  if (!w.defined() || w.rank() != 5 || w.dim(2) != w.dim(3) || w.dim(3) != w.dim(4)) {
    throw ShapeError("conv3d: weight must be [C_out, C_in, k, k, k]");
  }
  const std::size_t c_out = w.dim(0);
  const std::size_t c_in = w.dim(1);
  if (x.dim(1) != c_in) {
    throw ShapeError("conv3d: input has " + std::to_string(x.dim(1)) + " channels, weight expects " +
                     std::to_string(c_in));
  }
  if (p.bias.defined() && p.bias.numel() != c_out) {
    throw ShapeError("conv3d: bias extent does not match C_out");
  }
  if (p.stride == 0) throw ShapeError("conv3d: stride must be >= 1");

  detail::ConvGeometry g;
  g.channels = c_in;
  g.kernel = w.dim(2);
  g.stride = p.stride;
  g.padding = p.padding;
  for (int a = 0; a < 3; ++a) {
    g.in[a] = x.dim(2 + a);
    g.out[a] = conv_out_extent(g.in[a], g.kernel, g.stride, g.padding);
    if (g.out[a] == 0) throw ShapeError("conv3d: non-positive output extent for " + shape_str(x.shape()));
  }

  const std::size_t batch = x.dim(0);
  auto out = BasicTensor<T>::zeros({batch, c_out, g.out[0], g.out[1], g.out[2]});
  const std::size_t in_stride = c_in * g.in_numel();
  const std::size_t out_stride = c_out * g.out_numel();
  std::vector<T> col;
  for (std::size_t n = 0; n < batch; ++n) {
    detail::conv_forward_sample(x.ptr() + n * in_stride, w.ptr(), c_out, g, out.ptr() + n * out_stride,
                                col);
  }
  if (p.bias.defined()) {
    for (std::size_t n = 0; n < batch; ++n) {
      for (std::size_t c = 0; c < c_out; ++c) {
        T* o = out.ptr() + n * out_stride + c * g.out_numel();
        const T b = p.bias[c];
        for (std::size_t i = 0; i < g.out_numel(); ++i) o[i] += b;
      }
    }
  }
  detail::check_finite(out, "conv3d");

  auto& tape = Tape<T>::current();
  if (tape.wants({&x, &p.weight, &p.bias})) {
    auto nx = x.node();
    auto nw = w.node();
    auto nb = p.bias.defined() ? p.bias.node() : NodePtr<T>{};
    std::vector<BasicTensor<T>> inputs{x, w};
    if (nb) inputs.push_back(p.bias);
    tape.record("conv3d", std::move(inputs), out,
                [nx, nw, nb, g, batch, c_out, in_stride, out_stride](std::span<const T> gout) {
                  auto gx = detail::grad_sink(nx);
                  auto gw = detail::grad_sink(nw);
                  if (nb && nb->requires_grad) {
                    auto gb = nb->ensure_grad();
                    for (std::size_t n = 0; n < batch; ++n) {
                      for (std::size_t c = 0; c < c_out; ++c) {
                        const T* src = gout.data() + n * out_stride + c * g.out_numel();
                        double acc = 0.0;
                        for (std::size_t i = 0; i < g.out_numel(); ++i) acc += src[i];
                        gb[c] += static_cast<T>(acc);
                      }
                    }
                  }
                  if (gx.empty() && gw.empty()) return;
                  std::vector<T> col, gcol;
                  for (std::size_t n = 0; n < batch; ++n) {
                    detail::conv_backward_sample(
                        nx->data.data() + n * in_stride, nw->data.data(),
                        gout.data() + n * out_stride, c_out, g, gw.empty() ? nullptr : gw.data(),
                        gx.empty() ? nullptr : gx.data() + n * in_stride, col, gcol);
                  }
                });
  }
  return out;
}

/// Learned up-sampling: transposed convolution with kernel = stride = factor
/// and no padding, so every input voxel owns a disjoint factor^3 output block.
/// weight is [C_in, C_out, f, f, f].
template <typename T>
BasicTensor<T> conv_transpose3d(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                                const BasicTensor<T>& bias, std::size_t factor) {
  require_rank5(x.shape(), "conv_transpose3d");
  if (factor == 0 || weight.rank() != 5 || weight.dim(0) != x.dim(1) || weight.dim(2) != factor ||
      weight.dim(3) != factor || weight.dim(4) != factor) {
    throw ShapeError("conv_transpose3d: weight must be [C_in, C_out, f, f, f]");
  }
  const std::size_t c_in = x.dim(1);
  const std::size_t c_out = weight.dim(1);
  if (bias.defined() && bias.numel() != c_out) {
    throw ShapeError("conv_transpose3d: bias extent does not match C_out");
  }
  // Geometry of the adjoint convolution: output volume -> input volume.
  detail::ConvGeometry g;
  g.channels = c_out;
  g.kernel = factor;
  g.stride = factor;
  g.padding = 0;
  for (int a = 0; a < 3; ++a) {
    g.out[a] = x.dim(2 + a);
    g.in[a] = x.dim(2 + a) * factor;
  }
  const std::size_t batch = x.dim(0);
  auto out = BasicTensor<T>::zeros({batch, c_out, g.in[0], g.in[1], g.in[2]});
  const std::size_t x_stride = c_in * g.out_numel();
  const std::size_t o_stride = c_out * g.in_numel();
  {
    std::vector<T> col;
    for (std::size_t n = 0; n < batch; ++n) {
      using Eigen::Index;
      col.assign(g.rows() * g.out_numel(), T(0));
      detail::gemm<T>(detail::Trans::yes, detail::Trans::no, static_cast<Index>(g.rows()),
                      static_cast<Index>(g.out_numel()), static_cast<Index>(c_in), weight.ptr(),
                      static_cast<Index>(g.rows()), x.ptr() + n * x_stride,
                      static_cast<Index>(g.out_numel()), false, col.data(),
                      static_cast<Index>(g.out_numel()));
      detail::col2im(col.data(), g, 0, g.out[0], out.ptr() + n * o_stride);
    }
  }
  if (bias.defined()) {
    for (std::size_t n = 0; n < batch; ++n) {
      for (std::size_t c = 0; c < c_out; ++c) {
        T* o = out.ptr() + n * o_stride + c * g.in_numel();
        for (std::size_t i = 0; i < g.in_numel(); ++i) o[i] += bias[c];
      }
    }
  }
  detail::check_finite(out, "conv_transpose3d");

  auto& tape = Tape<T>::current();
  if (tape.wants({&x, &weight, &bias})) {
    auto nx = x.node();
    auto nw = weight.node();
    auto nb = bias.defined() ? bias.node() : NodePtr<T>{};
    std::vector<BasicTensor<T>> inputs{x, weight};
    if (nb) inputs.push_back(bias);
    tape.record("conv_transpose3d", std::move(inputs), out,
                [nx, nw, nb, g, batch, c_in, c_out, x_stride, o_stride](std::span<const T> gout) {
                  using Eigen::Index;
                  auto gx = detail::grad_sink(nx);
                  auto gw = detail::grad_sink(nw);
                  if (nb && nb->requires_grad) {
                    auto gb = nb->ensure_grad();
                    for (std::size_t n = 0; n < batch; ++n) {
                      for (std::size_t c = 0; c < c_out; ++c) {
                        const T* src = gout.data() + n * o_stride + c * g.in_numel();
                        double acc = 0.0;
                        for (std::size_t i = 0; i < g.in_numel(); ++i) acc += src[i];
                        gb[c] += static_cast<T>(acc);
                      }
                    }
                  }
                  std::vector<T> col(g.rows() * g.out_numel());
                  const auto rows = static_cast<Index>(g.rows());
                  const auto s = static_cast<Index>(g.out_numel());
                  for (std::size_t n = 0; n < batch; ++n) {
                    detail::im2col(gout.data() + n * o_stride, g, 0, g.out[0], col.data());
                    if (!gx.empty()) {
                      detail::gemm<T>(detail::Trans::no, detail::Trans::no,
                                      static_cast<Index>(c_in), s, rows, nw->data.data(), rows,
                                      col.data(), s, true, gx.data() + n * x_stride, s);
                    }
                    if (!gw.empty()) {
                      detail::gemm<T>(detail::Trans::no, detail::Trans::yes,
                                      static_cast<Index>(c_in), rows, s,
                                      nx->data.data() + n * x_stride, s, col.data(), s, true,
                                      gw.data(), rows);
                    }
                  }
                });
  }
  return out;
}

}  // namespace dseg
