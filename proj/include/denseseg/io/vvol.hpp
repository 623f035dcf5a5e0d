#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "denseseg/io/binary.hpp"
#include "denseseg/io/volume.hpp"

namespace dseg::io {

// VVOL layout (little-endian):
//   "VVOL" | u16 version | u8 dtype (0 = f32, 1 = u8) | u8 rank (= 3)
//   | u32 dims[3] (D, H, W) | f32 spacing[3] (mm) | row-major payload
inline constexpr char kVvolMagic[4] = {'V', 'V', 'O', 'L'};
inline constexpr std::uint16_t kVvolVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 0;
inline constexpr std::uint8_t kDtypeU8 = 1;

using AnyVolume = std::variant<Volume, LabelVolume>;

namespace detail {

inline void put_header(ByteWriter& w, std::uint8_t dtype, const Dims3& dims, const Spacing3& sp) {
  w.put_bytes(kVvolMagic, 4);
  w.put(kVvolVersion);
  w.put(dtype);
  w.put(std::uint8_t{3});
  for (auto d : dims) w.put(static_cast<std::uint32_t>(d));
  for (auto s : sp) w.put_f32(s);
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_vvol(const Volume& v) {
  ByteWriter w;
  detail::put_header(w, kDtypeF32, v.dims, v.spacing);
  if (v.data.size() != dims_numel(v.dims)) throw ShapeError("write_vvol: payload/dims mismatch");
  w.bytes().reserve(w.bytes().size() + 4 * v.data.size());
  for (float f : v.data) w.put_f32(f);
  return std::move(w.bytes());
}

inline std::vector<std::uint8_t> encode_vvol(const LabelVolume& v) {
  ByteWriter w;
  detail::put_header(w, kDtypeU8, v.dims, v.spacing);
  if (v.labels.size() != dims_numel(v.dims)) throw ShapeError("write_vvol: payload/dims mismatch");
  w.put_bytes(v.labels.data(), v.labels.size());
  return std::move(w.bytes());
}

inline AnyVolume decode_vvol(const std::vector<std::uint8_t>& bytes, const std::string& what) {
  ByteReader r(bytes, what);
  if (r.get_string(4) != std::string(kVvolMagic, 4)) throw FormatError(what + ": bad magic");
  const auto version = r.get<std::uint16_t>();
  if (version != kVvolVersion) {
    throw FormatError(what + ": unsupported version " + std::to_string(version));
  }
  const auto dtype = r.get<std::uint8_t>();
  const auto rank = r.get<std::uint8_t>();
  if (rank != 3) throw FormatError(what + ": rank " + std::to_string(rank) + " is not 3");
  Dims3 dims{};
  for (auto& d : dims) {
    d = r.get<std::uint32_t>();
    if (d == 0) throw FormatError(what + ": zero extent");
  }
  Spacing3 sp{};
  for (auto& s : sp) {
    s = r.get_f32();
    if (!(s > 0.0f)) throw FormatError(what + ": non-positive spacing");
  }
  const std::size_t n = dims_numel(dims);
  if (dtype == kDtypeF32) {
    if (r.remaining() < 4 * n) throw FormatError(what + ": truncated payload");
    if (r.remaining() > 4 * n) throw FormatError(what + ": trailing bytes");
    Volume v{dims, sp, std::vector<float>(n)};
    for (auto& f : v.data) f = r.get_f32();
    return v;
  }
  if (dtype == kDtypeU8) {
    if (r.remaining() < n) throw FormatError(what + ": truncated payload");
    if (r.remaining() > n) throw FormatError(what + ": trailing bytes");
    const auto* p = r.take(n);
    return LabelVolume{dims, sp, std::vector<std::uint8_t>(p, p + n)};
  }
  throw FormatError(what + ": unknown dtype code " + std::to_string(dtype));
}

inline AnyVolume read_vvol(const std::filesystem::path& path) {
  return decode_vvol(read_file(path), path.string());
}

inline Volume read_volume(const std::filesystem::path& path) {
  auto any = read_vvol(path);
  if (auto* v = std::get_if<Volume>(&any)) return std::move(*v);
  throw FormatError(path.string() + ": expected f32 intensities, found u8 labels");
}

inline LabelVolume read_labels(const std::filesystem::path& path) {
  auto any = read_vvol(path);
  if (auto* v = std::get_if<LabelVolume>(&any)) return std::move(*v);
  throw FormatError(path.string() + ": expected u8 labels, found f32 intensities");
}

inline void write_vvol(const std::filesystem::path& path, const Volume& v) {
  write_file_atomic(path, encode_vvol(v));
}

inline void write_vvol(const std::filesystem::path& path, const LabelVolume& v) {
  write_file_atomic(path, encode_vvol(v));
}

}  // namespace dseg::io
