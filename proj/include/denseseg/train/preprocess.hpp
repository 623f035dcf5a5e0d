#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "denseseg/core/tensor.hpp"
#include "denseseg/io/volume.hpp"

namespace dseg {

/// Whole-volume standardization to zero mean and unit (population) variance.
/// A volume whose std is below 1e-8 maps to all zeros.
inline Volume normalize_volume(const Volume& v) {
  if (v.data.size() < 2) throw ShapeError("normalize_volume: need at least 2 voxels");
  double s = 0.0;
  for (float x : v.data) s += x;
  const double mean = s / static_cast<double>(v.data.size());
  double ss = 0.0;
  for (float x : v.data) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(v.data.size()));
  Volume out{v.dims, v.spacing, std::vector<float>(v.data.size(), 0.0f)};
  if (sd < 1e-8) return out;
  for (std::size_t i = 0; i < v.data.size(); ++i) {
    out.data[i] = static_cast<float>((v.data[i] - mean) / sd);
  }
  return out;
}

inline Sample normalize_sample(const Sample& s) {
  Sample out = s;
  for (auto& m : out.modalities) m = normalize_volume(m);
  return out;
}

/// Unbiased draw from [0, n) using raw 64-bit output (portable across
/// standard libraries, unlike uniform_int_distribution).
inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  const std::uint64_t range = n;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return static_cast<std::size_t>(r % range);
}

struct Patch {
  Tensor input;                       // [1, modalities, s, s, s]
  std::vector<std::uint8_t> labels;   // s^3, row-major
  std::array<std::size_t, 3> corner{};
};

/// Copies the cube of edge `size` at `corner` out of every modality and the labels.
inline Patch extract_patch(const Sample& s, std::size_t size, std::array<std::size_t, 3> corner) {
  const auto dims = s.dims();
  for (int a = 0; a < 3; ++a) {
    if (corner[a] + size > dims[a]) throw ShapeError("extract_patch: crop leaves the volume");
  }
  const std::size_t m = s.modalities.size();
  Patch p;
  p.corner = corner;
  p.input = Tensor::zeros({1, m, size, size, size});
  p.labels.resize(size * size * size);
  const std::size_t vol = size * size * size;
  for (std::size_t z = 0; z < size; ++z) {
    for (std::size_t y = 0; y < size; ++y) {
      const std::size_t src = s.labels.index(corner[0] + z, corner[1] + y, corner[2]);
      const std::size_t dst = (z * size + y) * size;
      for (std::size_t c = 0; c < m; ++c) {
        std::copy_n(s.modalities[c].data.data() + src, size, p.input.ptr() + c * vol + dst);
      }
      std::copy_n(s.labels.labels.data() + src, size, p.labels.data() + dst);
    }
  }
  return p;
}

/// Corner of a uniformly random cube of edge `size` inside `dims`.
inline std::array<std::size_t, 3> random_corner(const Dims3& dims, std::size_t size, std::mt19937_64& rng) {
  std::array<std::size_t, 3> corner{};
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < size) {
      throw ShapeError("sample_patch: volume " + dims_str(dims) + " smaller than patch " +
                       std::to_string(size));
    }
    corner[a] = uniform_index(rng, dims[a] - size + 1);
  }
  return corner;
}

/// Uniformly random crop; modalities become channels in order.
inline Patch sample_patch(const Sample& s, std::size_t size, std::mt19937_64& rng) {
  return extract_patch(s, size, random_corner(s.dims(), size, rng));
}

}  // namespace dseg
