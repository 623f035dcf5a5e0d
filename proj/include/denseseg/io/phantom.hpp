#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "denseseg/io/volume.hpp"

namespace dseg {

// Generator constants: per-class intensities with complementary T1/T2 contrast.
inline constexpr std::array<float, 4> kPhantomT1 = {0.0f, 0.3f, 0.6f, 0.9f};
inline constexpr std::array<float, 4> kPhantomT2 = {0.0f, 0.9f, 0.5f, 0.3f};
inline constexpr std::size_t kPhantomMinExtent = 32;

/// Nested ellipsoids standing in for a head scan: a WM core with a wavy
/// boundary inside a GM shell inside a CSF shell, on background. Every
/// geometric parameter is jittered from `seed`; T1 and T2 get independent
/// Gaussian noise of `noise_sigma`. Pure function of its arguments.
inline Sample gen_phantom(std::uint64_t seed, Dims3 dims, double noise_sigma) {
  for (auto d : dims) {
    if (d < kPhantomMinExtent) {
      throw ShapeError("gen_phantom: every extent must be >= " + std::to_string(kPhantomMinExtent) +
                       ", got " + dims_str(dims));
    }
  }
  if (!(noise_sigma >= 0.0)) throw ShapeError("gen_phantom: noise_sigma must be >= 0");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto jitter = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  std::array<double, 3> center{}, radius{}, freq{}, phase{};
  for (int a = 0; a < 3; ++a) {
    const double e = static_cast<double>(dims[a]);
    center[a] = 0.5 * (e - 1.0) + jitter(-0.03, 0.03) * e;
    radius[a] = jitter(0.36, 0.42) * e;
  }
  const double gm_ratio = jitter(0.74, 0.82);
  const double wm_ratio = jitter(0.48, 0.56);
  const double wave = jitter(0.05, 0.10);
  for (int a = 0; a < 3; ++a) {
    freq[a] = jitter(2.0, 4.0);
    phase[a] = jitter(0.0, 6.283185307179586);
  }

  Sample s;
  s.id = "phantom-" + std::to_string(seed);
  s.labels.dims = dims;
  s.labels.labels.resize(dims_numel(dims));
  Volume t1{dims, {1.0f, 1.0f, 1.0f}, std::vector<float>(dims_numel(dims))};
  Volume t2 = t1;

  for (std::size_t z = 0; z < dims[0]; ++z) {
    for (std::size_t y = 0; y < dims[1]; ++y) {
      for (std::size_t x = 0; x < dims[2]; ++x) {
        const std::array<double, 3> u{(static_cast<double>(z) - center[0]) / radius[0],
                                      (static_cast<double>(y) - center[1]) / radius[1],
                                      (static_cast<double>(x) - center[2]) / radius[2]};
        const double rho = std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
        const double folds = 1.0 + wave * std::sin(freq[0] * u[0] + phase[0]) *
                                       std::sin(freq[1] * u[1] + phase[1]) *
                                       std::sin(freq[2] * u[2] + phase[2]);
        std::uint8_t label = 0;
        if (rho <= 1.0) label = 1;
        if (rho <= gm_ratio) label = 2;
        if (rho <= wm_ratio * folds) label = 3;
        const std::size_t i = s.labels.index(z, y, x);
        s.labels.labels[i] = label;
        t1.data[i] = kPhantomT1[label];
        t2.data[i] = kPhantomT2[label];
      }
    }
  }
  if (noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, noise_sigma);
    for (auto& v : t1.data) v = static_cast<float>(v + noise(rng));
    for (auto& v : t2.data) v = static_cast<float>(v + noise(rng));
  }
  s.modalities = {std::move(t1), std::move(t2)};
  return s;
}

}  // namespace dseg
