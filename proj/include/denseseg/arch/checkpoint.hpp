#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "denseseg/arch/hyperparams.hpp"
#include "denseseg/arch/network_spec.hpp"
#include "denseseg/arch/param_store.hpp"
#include "denseseg/io/binary.hpp"

namespace dseg {

// Checkpoint layout (little-endian):
//   "DSGC" | u16 version | u64 spec hash | u32 record count
//   per record: u16 name length | name | u8 flags | u8 rank | u32 extents[rank] | f32 payload
// Record names are "<layer>/<role>". Flag bit 0 marks BN running statistics,
// bit 1 the hyperparameter record "__hyperparams__".
inline constexpr char kCheckpointMagic[4] = {'D', 'S', 'G', 'C'};
inline constexpr std::uint16_t kCheckpointVersion = 1;
inline constexpr std::uint8_t kFlagRunningStat = 1;
inline constexpr std::uint8_t kFlagMetadata = 2;
inline constexpr const char* kHyperParamsRecord = "__hyperparams__";

struct CheckpointData {
  std::uint64_t spec_hash = 0;
  std::optional<HyperParams> hp;
  ParamStore<float> params;
};

namespace detail {

inline std::vector<float> encode_hp(const HyperParams& hp) {
  return {static_cast<float>(hp.growth_rate),
          static_cast<float>(hp.stem_channels),
          static_cast<float>(hp.compression),
          static_cast<float>(hp.num_blocks),
          static_cast<float>(hp.layers_per_block),
          static_cast<float>(hp.dropout_rate),
          static_cast<float>(hp.num_classes),
          static_cast<float>(hp.num_modalities),
          static_cast<float>(hp.upsample_path_channels),
          static_cast<float>(static_cast<int>(hp.upsample_mode))};
}

inline HyperParams decode_hp(const std::vector<float>& v) {
  if (v.size() != 10) throw FormatError("checkpoint: malformed hyperparameter record");
  HyperParams hp;
  hp.growth_rate = static_cast<std::size_t>(v[0]);
  hp.stem_channels = static_cast<std::size_t>(v[1]);
  hp.compression = v[2];
  hp.num_blocks = static_cast<std::size_t>(v[3]);
  hp.layers_per_block = static_cast<std::size_t>(v[4]);
  hp.dropout_rate = v[5];
  hp.num_classes = static_cast<std::size_t>(v[6]);
  hp.num_modalities = static_cast<std::size_t>(v[7]);
  hp.upsample_path_channels = static_cast<std::size_t>(v[8]);
  const int mode = static_cast<int>(v[9]);
  if (mode < 0 || mode > 2) throw FormatError("checkpoint: unknown upsample mode");
  hp.upsample_mode = static_cast<FusionUpsample>(mode);
  return hp;
}

inline ParamRole parse_role(const std::string& s) {
  for (auto r : kAllRoles) {
    if (s == to_string(r)) return r;
  }
  throw FormatError("checkpoint: unknown parameter role '" + s + "'");
}

inline void put_record(io::ByteWriter& w, const std::string& name, std::uint8_t flags,
                       const Shape& shape, std::span<const float> values) {
  if (name.size() > 0xFFFF) throw FormatError("checkpoint: record name too long");
  w.put(static_cast<std::uint16_t>(name.size()));
  w.put_string(name);
  w.put(flags);
  w.put(static_cast<std::uint8_t>(shape.size()));
  for (auto e : shape) w.put(static_cast<std::uint32_t>(e));
  for (float v : values) w.put_f32(v);
}

}  // namespace detail

/// Serializes every tensor of `params` (running statistics flagged) together
/// with the topology hash and hyperparameters of `spec`.
inline std::vector<std::uint8_t> encode_checkpoint(const NetworkSpec& spec,
                                                   const ParamStore<float>& params) {
  io::ByteWriter w;
  w.put_bytes(kCheckpointMagic, 4);
  w.put(kCheckpointVersion);
  w.put(spec_hash(spec));
  std::uint32_t count = 1;
  params.for_each([&](const std::string&, ParamRole, const Tensor&) { ++count; });
  w.put(count);
  const auto hp = detail::encode_hp(spec.hp);
  detail::put_record(w, kHyperParamsRecord, kFlagMetadata, {hp.size()}, hp);
  params.for_each([&](const std::string& layer, ParamRole role, const Tensor& t) {
    detail::put_record(w, layer + "/" + to_string(role),
                       is_running_stat(role) ? kFlagRunningStat : std::uint8_t{0}, t.shape(),
                       t.data());
  });
  return std::move(w.bytes());
}

inline void save_checkpoint(const NetworkSpec& spec, const ParamStore<float>& params,
                            const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_checkpoint(spec, params));
}

inline CheckpointData decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  io::ByteReader r(bytes, "checkpoint");
  if (r.get_string(4) != std::string(kCheckpointMagic, 4)) {
    throw FormatError("checkpoint: bad magic");
  }
  const auto version = r.get<std::uint16_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  CheckpointData out;
  out.spec_hash = r.get<std::uint64_t>();
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name = r.get_string(r.get<std::uint16_t>());
    const auto flags = r.get<std::uint8_t>();
    const auto rank = r.get<std::uint8_t>();
    if (rank == 0) throw FormatError("checkpoint: record '" + name + "' has rank 0");
    Shape shape(rank);
    for (auto& e : shape) {
      e = r.get<std::uint32_t>();
      if (e == 0) throw FormatError("checkpoint: record '" + name + "' has a zero extent");
    }
    const std::size_t n = shape_numel(shape);
    if (r.remaining() / 4 < n) throw FormatError("checkpoint: truncated file");
    std::vector<float> values(n);
    for (auto& v : values) v = r.get_f32();
    if (flags & kFlagMetadata) {
      if (name != kHyperParamsRecord) throw FormatError("checkpoint: unknown metadata '" + name + "'");
      out.hp = detail::decode_hp(values);
      continue;
    }
    const auto slash = name.rfind('/');
    if (slash == std::string::npos) throw FormatError("checkpoint: bad record name '" + name + "'");
    const auto role = detail::parse_role(name.substr(slash + 1));
    if (static_cast<bool>(flags & kFlagRunningStat) != is_running_stat(role)) {
      throw FormatError("checkpoint: running-stat flag disagrees with '" + name + "'");
    }
    auto t = Tensor::from(std::move(shape), std::move(values));
    if (!is_running_stat(role)) t.set_requires_grad(true);
    auto& slot = out.params.insert(name.substr(0, slash)).get(role);
    if (slot.defined()) throw FormatError("checkpoint: duplicate record '" + name + "'");
    slot = std::move(t);
  }
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes after last record");
  return out;
}

inline CheckpointData read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path));
}

/// Loads parameters for `spec`; throws FormatError when the file was written
/// for a different topology.
inline ParamStore<float> load_checkpoint(const std::filesystem::path& path, const NetworkSpec& spec) {
  auto data = read_checkpoint(path);
  if (data.spec_hash != spec_hash(spec)) {
    throw FormatError("checkpoint: spec mismatch (file was written for a different network)");
  }
  try {
    check_store_matches(spec, data.params);
  } catch (const ShapeError& e) {
    throw FormatError(std::string("checkpoint: spec mismatch: ") + e.what());
  }
  return std::move(data.params);
}

}  // namespace dseg
