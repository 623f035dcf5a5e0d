#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "denseseg/core/error.hpp"

namespace dseg {

/// How each fusion path brings a coarse block output back to full resolution.
enum class FusionUpsample { nearest, trilinear, learned };

inline const char* to_string(FusionUpsample m) {
  switch (m) {
    case FusionUpsample::nearest: return "nearest";
    case FusionUpsample::trilinear: return "trilinear";
    case FusionUpsample::learned: return "learned";
  }
  return "?";
}

inline FusionUpsample parse_fusion_upsample(const std::string& s) {
  if (s == "nearest") return FusionUpsample::nearest;
  if (s == "trilinear") return FusionUpsample::trilinear;
  if (s == "learned") return FusionUpsample::learned;
  throw ConfigError("unknown upsample mode '" + s + "' (nearest|trilinear|learned)");
}

struct HyperParams {
  std::size_t growth_rate = 16;
  std::size_t stem_channels = 32;
  double compression = 0.5;
  std::size_t num_blocks = 4;
  std::size_t layers_per_block = 4;
  double dropout_rate = 0.2;
  std::size_t num_classes = 4;
  std::size_t num_modalities = 2;
  std::size_t upsample_path_channels = 16;
  FusionUpsample upsample_mode = FusionUpsample::nearest;

  // floor(m * theta); the tiny epsilon keeps exact products like 96 * 0.5 exact.
  std::size_t compressed(std::size_t m) const {
    return static_cast<std::size_t>(std::floor(static_cast<double>(m) * compression + 1e-9));
  }

  std::size_t block_output_channels(std::size_t block_in) const {
    return block_in + layers_per_block * growth_rate;
  }

  // Every spatial extent of a network input must be a multiple of this.
  std::size_t spatial_divisor() const { return std::size_t{1} << num_blocks; }

  void validate() const {
    auto positive = [](std::size_t v, const char* name) {
      if (v == 0) throw ConfigError(std::string("hyperparameter ") + name + " must be positive");
    };
    positive(growth_rate, "growth_rate");
    positive(stem_channels, "stem_channels");
    positive(num_blocks, "num_blocks");
    positive(layers_per_block, "layers_per_block");
    positive(num_classes, "num_classes");
    positive(num_modalities, "num_modalities");
    positive(upsample_path_channels, "upsample_path_channels");
    if (!(compression > 0.0 && compression <= 1.0)) {
      throw ConfigError("hyperparameter compression must lie in (0, 1]");
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
      throw ConfigError("hyperparameter dropout_rate must lie in [0, 1)");
    }
    if (num_blocks > 8) throw ConfigError("hyperparameter num_blocks must be <= 8");
    std::size_t c = stem_channels;
    for (std::size_t b = 0; b + 1 < num_blocks; ++b) {
      c = compressed(block_output_channels(c));
      if (c == 0) throw ConfigError("compression leaves a transition with zero channels");
    }
  }
};

}  // namespace dseg
