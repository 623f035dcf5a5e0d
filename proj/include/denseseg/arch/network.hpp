#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "denseseg/arch/network_spec.hpp"
#include "denseseg/arch/param_store.hpp"
#include "denseseg/core/ops.hpp"
#include "denseseg/nn/activation.hpp"
#include "denseseg/nn/batch_norm.hpp"
#include "denseseg/nn/conv3d.hpp"
#include "denseseg/nn/upsample.hpp"
#include "denseseg/train/init.hpp"

namespace dseg {

template <typename T = float>
struct Network {
  NetworkSpec spec;
  ParamStore<T> params;
};

/// Topology for `hp` plus freshly initialized parameters.
template <typename T = float>
Network<T> build_network(const HyperParams& hp, std::mt19937_64& rng) {
  Network<T> net;
  net.spec = build_spec(hp);
  validate_closure(net.spec);
  net.params = init_params<T>(net.spec, rng);
  return net;
}

/// Evaluates a contiguous range of layer descriptors. Outputs of layers
/// outside the range must be supplied with `provide`; in inference the
/// executor drops each activation after its last consumer.
template <typename T>
class Executor {
 public:
  Executor(const NetworkSpec& spec, ParamStore<T>& params, Mode mode, std::mt19937_64* rng)
      : spec_(spec), params_(params), mode_(mode), rng_(rng), outputs_(spec.layers.size()),
        last_use_(spec.layers.size(), 0) {
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
      for (auto s : spec.layers[i].sources) last_use_[s] = i;
    }
  }

  void provide(std::size_t layer, BasicTensor<T> value) { outputs_.at(layer) = std::move(value); }

  /// Runs layers first..last inclusive and returns the output of `last`.
  /// When `first_input` is given it replaces the concatenated sources of `first`.
  BasicTensor<T> run(std::size_t first, std::size_t last,
                     const std::optional<BasicTensor<T>>& first_input = std::nullopt) {
    for (std::size_t i = first; i <= last; ++i) {
      const auto& d = spec_.layers[i];
      BasicTensor<T> in;
      if (i == first && first_input) {
        in = *first_input;
        if (d.kind != LayerKind::input && in.dim(1) != d.in_channels) {
          throw ShapeError("layer '" + d.name + "' expects " + std::to_string(d.in_channels) +
                           " input channels, got " + std::to_string(in.dim(1)));
        }
      } else {
        in = gather(i);
      }
      outputs_[i] = apply(d, in);
      for (auto s : d.sources) {
        if (last_use_[s] == i && s >= first && s != last) outputs_[s] = BasicTensor<T>{};
      }
    }
    return outputs_[last];
  }

 private:
  BasicTensor<T> gather(std::size_t i) {
    const auto& d = spec_.layers[i];
    std::vector<BasicTensor<T>> parts;
    parts.reserve(d.sources.size());
    for (auto s : d.sources) {
      if (!outputs_[s].defined()) {
        throw ShapeError("layer '" + d.name + "' needs the output of '" + spec_.layers[s].name +
                         "', which was not computed");
      }
      parts.push_back(outputs_[s]);
    }
    return concat_channels(parts);
  }

  BasicTensor<T> apply(const LayerDesc& d, const BasicTensor<T>& x) {
    switch (d.kind) {
      case LayerKind::input:
      case LayerKind::concat: return x;
      case LayerKind::conv: {
        const auto& g = params_.group(d.name);
        return conv3d(x, ConvParams<T>{g.weight, g.bias, d.stride, d.padding});
      }
      case LayerKind::conv_transpose: {
        const auto& g = params_.group(d.name);
        return conv_transpose3d(x, g.weight, g.bias, d.factor);
      }
      case LayerKind::batch_norm: {
        auto st = params_.group(d.name).bn_state();
        return batch_norm(x, st, mode_);
      }
      case LayerKind::relu: return relu(x);
      case LayerKind::dropout: {
        if (mode_ == Mode::infer) return x;
        if (!rng_) throw ShapeError("layer '" + d.name + "': train-mode dropout needs a generator");
        return dropout(x, d.dropout_rate, mode_, *rng_);
      }
      case LayerKind::upsample: return upsample(x, d.factor, d.interp);
    }
    return x;
  }

  const NetworkSpec& spec_;
  ParamStore<T>& params_;
  Mode mode_;
  std::mt19937_64* rng_;
  std::vector<BasicTensor<T>> outputs_;
  std::vector<std::size_t> last_use_;
};

/// Full forward pass of [N, modalities, D, H, W] to logits [N, classes, D, H, W].
/// Train mode uses batch statistics and dropout drawn from `rng`.
template <typename T>
BasicTensor<T> forward_full(const NetworkSpec& spec, ParamStore<T>& params, const BasicTensor<T>& x,
                            Mode mode, std::mt19937_64* rng = nullptr) {
  require_rank5(x.shape(), "forward_full");
  if (x.dim(1) != spec.hp.num_modalities) {
    throw ShapeError("forward_full: expected " + std::to_string(spec.hp.num_modalities) +
                     " input channels, got " + std::to_string(x.dim(1)));
  }
  const std::size_t div = spec.hp.spatial_divisor();
  for (int a = 2; a < 5; ++a) {
    if (x.dim(a) % div != 0) {
      throw ShapeError("forward_full: spatial extents " + shape_str(x.shape()) +
                       " must be multiples of " + std::to_string(div));
    }
  }
  Executor<T> exec(spec, params, mode, rng);
  exec.provide(0, x);
  return exec.run(1, spec.output_index());
}

/// One BN-ReLU-Conv1-BN-ReLU-Conv3-dropout unit applied to its already
/// concatenated input.
template <typename T>
BasicTensor<T> composite_layer(const NetworkSpec& spec, ParamStore<T>& params, std::size_t block,
                               std::size_t layer, const BasicTensor<T>& x, Mode mode,
                               std::mt19937_64* rng = nullptr) {
  const std::string p = composite_prefix(block, layer);
  Executor<T> exec(spec, params, mode, rng);
  return exec.run(spec.index_of(p + ".bn1"), spec.index_of(p + ".drop"), x);
}

/// Runs every composite layer of `block` on input `x` and returns the full
/// concatenation [x, h_1, ..., h_L].
template <typename T>
BasicTensor<T> dense_block(const NetworkSpec& spec, ParamStore<T>& params, std::size_t block,
                           const BasicTensor<T>& x, Mode mode, std::mt19937_64* rng = nullptr) {
  const std::size_t first = spec.index_of(composite_prefix(block, 1) + ".bn1");
  const std::size_t last = spec.index_of("block" + std::to_string(block) + ".out");
  const std::size_t src = spec.layers[first].sources.front();
  if (x.dim(1) != spec.layers[src].out_channels) {
    throw ShapeError("dense_block: block " + std::to_string(block) + " expects " +
                     std::to_string(spec.layers[src].out_channels) + " channels");
  }
  Executor<T> exec(spec, params, mode, rng);
  exec.provide(src, x);
  return exec.run(first, last);
}

/// 1x1x1 compression to floor(m * theta) channels, then a stride-2 3x3x3 conv.
template <typename T>
BasicTensor<T> transition_block(const NetworkSpec& spec, ParamStore<T>& params,
                                std::size_t index, const BasicTensor<T>& x, Mode mode) {
  require_rank5(x.shape(), "transition_block");
  for (int a = 2; a < 5; ++a) {
    if (x.dim(a) % 2 != 0) {
      throw ShapeError("transition_block: odd spatial extent in " + shape_str(x.shape()));
    }
  }
  const std::string t = "trans" + std::to_string(index);
  Executor<T> exec(spec, params, mode, nullptr);
  return exec.run(spec.index_of(t + ".conv"), spec.index_of(t + ".down"), x);
}

}  // namespace dseg
