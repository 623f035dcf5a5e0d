#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "denseseg/arch/network.hpp"
#include "denseseg/core/tape.hpp"
#include "denseseg/nn/softmax.hpp"
#include "denseseg/train/adam.hpp"
#include "denseseg/train/config.hpp"
#include "denseseg/train/preprocess.hpp"

namespace dseg {

struct LossRecord {
  std::size_t iter = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct TrainResult {
  Network<float> net;
  OptimState optim;
  std::vector<LossRecord> trace;
};

struct TrainHooks {
  std::function<void(const LossRecord&)> on_iteration;
  /// Called every `checkpoint_every` iterations and once at the end.
  std::function<void(std::size_t iter, const Network<float>&)> on_checkpoint;
};

/// Independent streams for initialization, patch sampling and dropout.
struct TrainRngs {
  std::mt19937_64 init, data, dropout;

  explicit TrainRngs(std::uint64_t seed) {
    std::seed_seq seq{seed, seed >> 32};
    std::uint64_t s[3];
    std::uint32_t raw[6];
    seq.generate(raw, raw + 6);
    for (int i = 0; i < 3; ++i) s[i] = (std::uint64_t{raw[2 * i]} << 32) | raw[2 * i + 1];
    init.seed(s[0]);
    data.seed(s[1]);
    dropout.seed(s[2]);
  }
};

struct Batch {
  Tensor input;
  std::vector<std::uint8_t> labels;
};

/// `batch_size` patches, each from a sample drawn uniformly with replacement.
inline Batch draw_batch(const std::vector<Sample>& data, std::size_t batch_size, std::size_t patch,
                        std::mt19937_64& rng) {
  const std::size_t m = data.front().modalities.size();
  const std::size_t vox = patch * patch * patch;
  Batch b;
  b.input = Tensor::zeros({batch_size, m, patch, patch, patch});
  b.labels.resize(batch_size * vox);
  for (std::size_t n = 0; n < batch_size; ++n) {
    const auto& s = data[uniform_index(rng, data.size())];
    auto p = sample_patch(s, patch, rng);
    std::copy_n(p.input.ptr(), m * vox, b.input.ptr() + n * m * vox);
    std::copy(p.labels.begin(), p.labels.end(), b.labels.begin() + n * vox);
  }
  return b;
}

/// Patch-based mini-batch training with Adam and step decay. Samples are
/// normalized per modality before the first iteration.
inline TrainResult train(const std::vector<Sample>& dataset, const TrainConfig& cfg,
                         const HyperParams& hp, const TrainHooks& hooks = {}) {
  if (dataset.empty()) throw ConfigError("train: empty dataset");
  hp.validate();
  cfg.validate(hp);
  std::vector<Sample> data;
  data.reserve(dataset.size());
  for (const auto& s : dataset) {
    s.validate();
    if (s.modalities.size() != hp.num_modalities) {
      throw ShapeError("train: sample '" + s.id + "' has " + std::to_string(s.modalities.size()) +
                       " modalities, network expects " + std::to_string(hp.num_modalities));
    }
    for (auto d : s.dims()) {
      if (d < cfg.patch_size) {
        throw ShapeError("train: sample '" + s.id + "' " + dims_str(s.dims()) +
                         " is smaller than patch " + std::to_string(cfg.patch_size));
      }
    }
    data.push_back(normalize_sample(s));
  }

  TrainRngs rngs(cfg.seed);
  TrainResult res;
  res.net = build_network<float>(hp, rngs.init);
  auto params = trainable_params(res.net.params);
  const auto adam = AdamConfig::from(cfg);

  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    auto batch = draw_batch(data, cfg.batch_size, cfg.patch_size, rngs.data);
    res.net.params.zero_grad();
    auto logits = forward_full(res.net.spec, res.net.params, batch.input, Mode::train, &rngs.dropout);
    auto loss = cross_entropy<float>(logits, batch.labels);
    logits = Tensor{};
    const double value = loss.item();
    if (!std::isfinite(value)) {
      Tape<float>::current().clear();
      throw NumericError("train: non-finite loss at iteration " + std::to_string(it));
    }
    backward(loss);
    const double lr = lr_at(it, cfg);
    adam_step(params, res.optim, lr, adam);
    LossRecord rec{it, lr, value};
    res.trace.push_back(rec);
    if (hooks.on_iteration) hooks.on_iteration(rec);
    const bool last = it + 1 == cfg.max_iters;
    if (hooks.on_checkpoint && !last && cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0) {
      hooks.on_checkpoint(it + 1, res.net);
    }
  }
  res.net.params.zero_grad();
  if (hooks.on_checkpoint) hooks.on_checkpoint(cfg.max_iters, res.net);
  return res;
}

inline std::string loss_trace_csv(const std::vector<LossRecord>& trace) {
  std::ostringstream os;
  os.precision(9);
  os << "iter,lr,loss\n";
  for (const auto& r : trace) os << r.iter << ',' << r.lr << ',' << r.loss << '\n';
  return os.str();
}

}  // namespace dseg
