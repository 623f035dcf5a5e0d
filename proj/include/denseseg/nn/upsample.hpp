#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "denseseg/core/tape.hpp"
#include "denseseg/core/tensor.hpp"

namespace dseg {

enum class UpsampleMode { nearest, trilinear };

inline const char* to_string(UpsampleMode m) {
  return m == UpsampleMode::nearest ? "nearest" : "trilinear";
}

namespace detail {

// Two source taps and weights per output coordinate along one axis
// (half-pixel centres, clamped at the border).
struct AxisTaps {
  std::vector<std::size_t> lo, hi;
  std::vector<double> w_lo, w_hi;
};

inline AxisTaps make_taps(std::size_t in, std::size_t factor, UpsampleMode mode) {
  const std::size_t out = in * factor;
  AxisTaps t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.w_lo.resize(out);
  t.w_hi.resize(out);
  for (std::size_t o = 0; o < out; ++o) {
    if (mode == UpsampleMode::nearest) {
      t.lo[o] = t.hi[o] = o / factor;
      t.w_lo[o] = 1.0;
      t.w_hi[o] = 0.0;
      continue;
    }
    double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
    src = std::max(src, 0.0);
    auto i0 = static_cast<std::size_t>(std::floor(src));
    i0 = std::min(i0, in - 1);
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    const double frac = i1 == i0 ? 0.0 : src - static_cast<double>(i0);
    t.lo[o] = i0;
    t.hi[o] = i1;
    t.w_lo[o] = 1.0 - frac;
    t.w_hi[o] = frac;
  }
  return t;
}

}  // namespace detail

/// Parameter-free spatial up-sampling of [N, C, d, h, w] by an integer factor.
/// The gradient is the exact adjoint of the interpolation.
template <typename T>
BasicTensor<T> upsample(const BasicTensor<T>& x, std::size_t factor, UpsampleMode mode) {
  require_rank5(x.shape(), "upsample");
  if (factor == 0) throw ShapeError("upsample: factor must be >= 1");
  if (factor == 1) return x;

  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::array<std::size_t, 3> in{x.dim(2), x.dim(3), x.dim(4)};
  const std::array<std::size_t, 3> out_ext{in[0] * factor, in[1] * factor, in[2] * factor};
  const std::array<detail::AxisTaps, 3> taps{detail::make_taps(in[0], factor, mode),
                                             detail::make_taps(in[1], factor, mode),
                                             detail::make_taps(in[2], factor, mode)};
  const std::size_t in_vol = in[0] * in[1] * in[2];
  const std::size_t out_vol = out_ext[0] * out_ext[1] * out_ext[2];

  auto out = BasicTensor<T>::zeros({x.dim(0), x.dim(1), out_ext[0], out_ext[1], out_ext[2]});

  // Visits (output index, input index, weight) for every nonzero tap.
  auto for_each_tap = [taps, planes, in, out_ext, in_vol, out_vol](auto&& fn) {
    for (std::size_t pl = 0; pl < planes; ++pl) {
      std::size_t oi = pl * out_vol;
      const std::size_t base = pl * in_vol;
      for (std::size_t z = 0; z < out_ext[0]; ++z) {
        for (std::size_t y = 0; y < out_ext[1]; ++y) {
          for (std::size_t xo = 0; xo < out_ext[2]; ++xo, ++oi) {
            for (int a = 0; a < 2; ++a) {
              const double wz = a ? taps[0].w_hi[z] : taps[0].w_lo[z];
              if (wz == 0.0) continue;
              const std::size_t iz = a ? taps[0].hi[z] : taps[0].lo[z];
              for (int b = 0; b < 2; ++b) {
                const double wy = b ? taps[1].w_hi[y] : taps[1].w_lo[y];
                if (wy == 0.0) continue;
                const std::size_t iy = b ? taps[1].hi[y] : taps[1].lo[y];
                for (int c = 0; c < 2; ++c) {
                  const double wx = c ? taps[2].w_hi[xo] : taps[2].w_lo[xo];
                  if (wx == 0.0) continue;
                  const std::size_t ix = c ? taps[2].hi[xo] : taps[2].lo[xo];
                  fn(oi, base + (iz * in[1] + iy) * in[2] + ix, wz * wy * wx);
                }
              }
            }
          }
        }
      }
    }
  };

  if (mode == UpsampleMode::nearest) {
    const T* src = x.ptr();
    T* dst = out.ptr();
    for (std::size_t pl = 0; pl < planes; ++pl) {
      for (std::size_t z = 0; z < out_ext[0]; ++z) {
        for (std::size_t y = 0; y < out_ext[1]; ++y) {
          const T* line = src + pl * in_vol + ((z / factor) * in[1] + y / factor) * in[2];
          T* o = dst + pl * out_vol + (z * out_ext[1] + y) * out_ext[2];
          for (std::size_t xo = 0; xo < out_ext[2]; ++xo) o[xo] = line[xo / factor];
        }
      }
    }
  } else {
    const T* src = x.ptr();
    T* dst = out.ptr();
    for_each_tap([&](std::size_t oi, std::size_t ii, double w) {
      dst[oi] += static_cast<T>(w * src[ii]);
    });
  }
  detail::check_finite(out, "upsample");

  auto& tape = Tape<T>::current();
  if (tape.wants({&x})) {
    auto nx = x.node();
    tape.record("upsample", {x}, out,
                [nx, for_each_tap, mode, planes, in, out_ext, factor, in_vol,
                 out_vol](std::span<const T> g) {
                  auto gx = detail::grad_sink(nx);
                  if (mode == UpsampleMode::nearest) {
                    for (std::size_t pl = 0; pl < planes; ++pl) {
                      for (std::size_t z = 0; z < out_ext[0]; ++z) {
                        for (std::size_t y = 0; y < out_ext[1]; ++y) {
                          T* line = gx.data() + pl * in_vol +
                                    ((z / factor) * in[1] + y / factor) * in[2];
                          const T* go = g.data() + pl * out_vol + (z * out_ext[1] + y) * out_ext[2];
                          for (std::size_t xo = 0; xo < out_ext[2]; ++xo) line[xo / factor] += go[xo];
                        }
                      }
                    }
                  } else {
                    for_each_tap([&](std::size_t oi, std::size_t ii, double w) {
                      gx[ii] += static_cast<T>(w * g[oi]);
                    });
                  }
                });
  }
  return out;
}

}  // namespace dseg
