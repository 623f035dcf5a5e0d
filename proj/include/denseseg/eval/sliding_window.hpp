#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "denseseg/arch/network.hpp"
#include "denseseg/core/tape.hpp"
#include "denseseg/io/volume.hpp"
#include "denseseg/nn/softmax.hpp"

namespace dseg {

enum class VoteMode { majority, mean_prob };

inline const char* to_string(VoteMode m) { return m == VoteMode::majority ? "majority" : "mean_prob"; }

inline VoteMode parse_vote_mode(const std::string& s) {
  if (s == "majority") return VoteMode::majority;
  if (s == "mean_prob") return VoteMode::mean_prob;
  throw ConfigError("unknown vote mode '" + s + "' (expected majority or mean_prob)");
}

/// Tile origins along one axis: multiples of `stride`, with the last one
/// moved back so the final tile ends at the edge.
inline std::vector<std::size_t> tile_origins(std::size_t extent, std::size_t patch, std::size_t stride) {
  if (stride == 0 || stride > patch) throw ShapeError("tile_origins: stride must lie in [1, patch]");
  if (patch > extent) {
    throw ShapeError("tile_origins: patch " + std::to_string(patch) + " exceeds extent " +
                     std::to_string(extent));
  }
  std::vector<std::size_t> out;
  for (std::size_t c = 0;; c += stride) {
    if (c + patch >= extent) {
      out.push_back(extent - patch);
      break;
    }
    out.push_back(c);
  }
  return out;
}

/// Per-voxel, per-class accumulator laid out [class][voxel].
struct VoteGrid {
  Dims3 dims{};
  std::size_t classes = 0;
  std::vector<double> votes;
  std::vector<std::uint32_t> coverage;

  VoteGrid(Dims3 d, std::size_t c)
      : dims(d), classes(c), votes(c * dims_numel(d), 0.0), coverage(dims_numel(d), 0) {}

  /// Argmax per voxel; ties go to the lowest class.
  std::vector<std::uint8_t> finalize() const {
    const std::size_t n = dims_numel(dims);
    for (std::size_t i = 0; i < n; ++i) {
      if (coverage[i] == 0) throw ShapeError("VoteGrid: voxel " + std::to_string(i) + " not covered");
    }
    std::vector<std::uint8_t> out(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      double best = votes[i];
      for (std::size_t c = 1; c < classes; ++c) {
        if (votes[c * n + i] > best) {
          best = votes[c * n + i];
          out[i] = static_cast<std::uint8_t>(c);
        }
      }
    }
    return out;
  }
};

/// Full-volume labels from overlapping patches. Each tile is one inference
/// forward pass; `majority` counts each tile's argmax, `mean_prob` sums the
/// softmax probabilities. Modalities should already be normalized.
template <typename T = float>
LabelVolume sliding_window_predict(const NetworkSpec& spec, ParamStore<T>& params,
                                   const std::vector<Volume>& modalities, std::size_t patch,
                                   std::size_t stride, VoteMode mode) {
  if (modalities.size() != spec.hp.num_modalities) {
    throw ShapeError("sliding_window_predict: expected " + std::to_string(spec.hp.num_modalities) +
                     " modalities, got " + std::to_string(modalities.size()));
  }
  const Dims3 dims = modalities.front().dims;
  for (const auto& m : modalities) {
    if (m.dims != dims) {
      throw ShapeError("sliding_window_predict: modality dims " + dims_str(m.dims) + " vs " +
                       dims_str(dims));
    }
  }
  std::array<std::vector<std::size_t>, 3> origins;
  for (int a = 0; a < 3; ++a) origins[a] = tile_origins(dims[a], patch, stride);

  NoGradGuard<T> no_grad;
  const std::size_t classes = spec.hp.num_classes;
  const std::size_t mods = modalities.size();
  const std::size_t pv = patch * patch * patch;
  const std::size_t n = dims_numel(dims);
  VoteGrid grid(dims, classes);
  auto input = BasicTensor<T>::zeros({1, mods, patch, patch, patch});

  for (auto oz : origins[0]) {
    for (auto oy : origins[1]) {
      for (auto ox : origins[2]) {
        T* dst = input.ptr();
        for (std::size_t c = 0; c < mods; ++c) {
          const auto& src = modalities[c].data;
          for (std::size_t z = 0; z < patch; ++z) {
            for (std::size_t y = 0; y < patch; ++y) {
              const std::size_t s = ((oz + z) * dims[1] + oy + y) * dims[2] + ox;
              T* row = dst + c * pv + (z * patch + y) * patch;
              for (std::size_t x = 0; x < patch; ++x) row[x] = static_cast<T>(src[s + x]);
            }
          }
        }
        auto logits = forward_full(spec, params, input, Mode::infer);
        if (mode == VoteMode::mean_prob) logits = softmax_channels(logits);
        const T* out = logits.ptr();
        for (std::size_t z = 0; z < patch; ++z) {
          for (std::size_t y = 0; y < patch; ++y) {
            const std::size_t g0 = ((oz + z) * dims[1] + oy + y) * dims[2] + ox;
            const std::size_t p0 = (z * patch + y) * patch;
            for (std::size_t x = 0; x < patch; ++x) {
              const std::size_t g = g0 + x;
              const std::size_t p = p0 + x;
              ++grid.coverage[g];
              if (mode == VoteMode::mean_prob) {
                for (std::size_t c = 0; c < classes; ++c) grid.votes[c * n + g] += out[c * pv + p];
              } else {
                std::size_t best = 0;
                for (std::size_t c = 1; c < classes; ++c) {
                  if (out[c * pv + p] > out[best * pv + p]) best = c;
                }
                grid.votes[best * n + g] += 1.0;
              }
            }
          }
        }
      }
    }
  }
  LabelVolume res;
  res.dims = dims;
  res.spacing = modalities.front().spacing;
  res.labels = grid.finalize();
  return res;
}

/// Per-voxel argmax of logits [1, C, D, H, W]; ties go to the lowest class.
template <typename T>
std::vector<std::uint8_t> argmax_channels(const BasicTensor<T>& logits) {
  require_rank5(logits.shape(), "argmax_channels");
  const std::size_t classes = logits.dim(1);
  const std::size_t v = logits.spatial_numel();
  const T* p = logits.ptr();
  std::vector<std::uint8_t> out(v, 0);
  for (std::size_t i = 0; i < v; ++i) {
    for (std::size_t c = 1; c < classes; ++c) {
      if (p[c * v + i] > p[out[i] * v + i]) out[i] = static_cast<std::uint8_t>(c);
    }
  }
  return out;
}

}  // namespace dseg
