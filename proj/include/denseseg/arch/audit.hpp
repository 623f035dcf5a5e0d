#pragma once

#include <cstddef>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "denseseg/arch/network_spec.hpp"

namespace dseg {

// Depth and learned-parameter figures reported for the reference design and
// the DenseVoxNet baseline it is compared against.
inline constexpr std::size_t kReferenceDepth = 47;
inline constexpr double kReferenceParams = 1.55e6;
inline constexpr double kDenseVoxNetParams = 4.34e6;

struct LayerParamCount {
  std::string name;
  LayerKind kind;
  std::size_t params = 0;
};

struct StageTrace {
  std::string stage;
  std::size_t channels = 0;
  std::size_t scale = 1;
};

// Measured input channels of composite layer `layer` in `block` next to
// block_in + (layer - 1) * growth_rate.
struct CompositeInputCheck {
  std::size_t block = 0;
  std::size_t layer = 0;
  std::size_t measured = 0;
  std::size_t expected = 0;
};

struct AuditReport {
  std::size_t weighted_layer_count = 0;
  std::vector<StageTrace> stages;
  std::vector<LayerParamCount> layers;
  std::vector<CompositeInputCheck> composite_inputs;
  std::size_t total_params = 0;

  double deviation_from_reference() const {
    return (static_cast<double>(total_params) - kReferenceParams) / kReferenceParams;
  }

  // "32->96->48->..." over block inputs/outputs and transitions.
  std::string channel_trace() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < stages.size(); ++i) {
      if (i) os << "->";
      os << stages[i].channels;
    }
    return os.str();
  }
};

inline std::size_t layer_params(const LayerDesc& d) {
  switch (d.kind) {
    case LayerKind::conv:
    case LayerKind::conv_transpose:
      return d.out_channels * d.in_channels * d.kernel * d.kernel * d.kernel +
             (d.bias ? d.out_channels : 0);
    case LayerKind::batch_norm: return 2 * d.in_channels;
    default: return 0;
  }
}

/// Depth (convolutions only), per-layer learned parameters (BN running
/// statistics excluded) and the channel trace through the dense stages.
inline AuditReport audit(const NetworkSpec& spec) {
  validate_closure(spec);
  AuditReport r;
  for (const auto& d : spec.layers) {
    if (d.kind == LayerKind::conv || d.kind == LayerKind::conv_transpose) ++r.weighted_layer_count;
    if (d.learnable()) {
      r.layers.push_back({d.name, d.kind, layer_params(d)});
      r.total_params += r.layers.back().params;
    }
  }

  const auto& hp = spec.hp;
  for (std::size_t b = 1; b <= hp.num_blocks; ++b) {
    const auto& first = spec.at(composite_prefix(b, 1) + ".bn1");
    const std::size_t block_in = spec.layers[first.sources.front()].out_channels;
    r.stages.push_back({"block" + std::to_string(b) + ".in", block_in, first.scale});
    for (std::size_t l = 1; l <= hp.layers_per_block; ++l) {
      const auto& d = spec.at(composite_prefix(b, l) + ".bn1");
      r.composite_inputs.push_back({b, l, d.in_channels, block_in + (l - 1) * hp.growth_rate});
    }
    const auto& out = spec.at("block" + std::to_string(b) + ".out");
    r.stages.push_back({out.name, out.out_channels, out.scale});
  }
  // Transition outputs equal the next block's input, already in the trace.
  return r;
}

inline void print_audit(std::ostream& os, const AuditReport& r, bool per_layer = false) {
  os << "layers: " << r.weighted_layer_count << '\n';
  os << "reference layers: " << kReferenceDepth << '\n';
  os << "params: " << r.total_params << '\n';
  os << std::fixed << std::setprecision(2);
  os << "reference params: " << kReferenceParams / 1e6 << "M (deviation "
     << (r.deviation_from_reference() * 100.0) << "%)\n";
  os << "below DenseVoxNet (" << kDenseVoxNetParams / 1e6 << "M): "
     << (static_cast<double>(r.total_params) < kDenseVoxNetParams ? "yes" : "no") << '\n';
  os << "channel trace: " << r.channel_trace() << '\n';
  for (const auto& c : r.composite_inputs) {
    os << "  block" << c.block << " layer" << c.layer << " input channels " << c.measured
       << " (expected " << c.expected << ")\n";
  }
  if (per_layer) {
    for (const auto& l : r.layers) {
      os << "  " << std::left << std::setw(24) << l.name << std::right << std::setw(10) << l.params
         << '\n';
    }
  }
  os.unsetf(std::ios::fixed);
}

}  // namespace dseg
