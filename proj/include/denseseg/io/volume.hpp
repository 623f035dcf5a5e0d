#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "denseseg/core/error.hpp"

namespace dseg {

using Dims3 = std::array<std::size_t, 3>;      // D, H, W
using Spacing3 = std::array<float, 3>;         // mm per axis, same order

inline std::size_t dims_numel(const Dims3& d) { return d[0] * d[1] * d[2]; }

inline std::string dims_str(const Dims3& d) {
  return std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" + std::to_string(d[2]);
}

/// Single-modality intensity grid, row-major over (D, H, W).
struct Volume {
  Dims3 dims{};
  Spacing3 spacing{1.0f, 1.0f, 1.0f};
  std::vector<float> data;

  std::size_t numel() const { return data.size(); }
  std::size_t index(std::size_t z, std::size_t y, std::size_t x) const {
    return (z * dims[1] + y) * dims[2] + x;
  }
};

enum class Tissue : std::uint8_t { background = 0, csf = 1, gm = 2, wm = 3 };

inline constexpr std::size_t kNumTissueClasses = 4;

inline const char* tissue_name(std::size_t label) {
  switch (label) {
    case 0: return "BG";
    case 1: return "CSF";
    case 2: return "GM";
    case 3: return "WM";
  }
  return "?";
}

/// Integer class grid: 0 = BG, 1 = CSF, 2 = GM, 3 = WM.
struct LabelVolume {
  Dims3 dims{};
  Spacing3 spacing{1.0f, 1.0f, 1.0f};
  std::vector<std::uint8_t> labels;

  std::size_t numel() const { return labels.size(); }
  std::size_t index(std::size_t z, std::size_t y, std::size_t x) const {
    return (z * dims[1] + y) * dims[2] + x;
  }
};

/// Co-registered modalities (T1 then T2) with their ground-truth labels.
struct Sample {
  std::string id;
  std::vector<Volume> modalities;
  LabelVolume labels;

  Dims3 dims() const { return labels.dims; }

  void validate(std::size_t num_classes = kNumTissueClasses) const {
    if (modalities.empty()) throw ShapeError("sample '" + id + "' has no modalities");
    for (const auto& m : modalities) {
      if (m.dims != labels.dims || m.spacing != labels.spacing) {
        throw ShapeError("sample '" + id + "': modality " + dims_str(m.dims) +
                         " disagrees with labels " + dims_str(labels.dims) + " in dims or spacing");
      }
      if (m.data.size() != dims_numel(m.dims)) throw ShapeError("sample '" + id + "': bad payload");
    }
    if (labels.labels.size() != dims_numel(labels.dims)) {
      throw ShapeError("sample '" + id + "': bad label payload");
    }
    for (auto l : labels.labels) {
      if (l >= num_classes) {
        throw ShapeError("sample '" + id + "': label " + std::to_string(l) + " out of range");
      }
    }
  }
};

}  // namespace dseg
