#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "denseseg/io/binary.hpp"
#include "denseseg/io/volume.hpp"
#include "denseseg/io/vvol.hpp"

namespace dseg::io {

/// One dataset line: `sample_id, t1_path, t2_path, labels_path`. Relative
/// paths resolve against the manifest's directory.
struct ManifestEntry {
  std::string id;
  std::filesystem::path t1, t2, labels;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  const auto base = path.parent_path();
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::trim(line);
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(detail::trim(f));
    if (fields.size() != 4 || fields[0].empty()) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                        ": expected 'sample_id, t1_path, t2_path, labels_path'");
    }
    auto resolve = [&](const std::string& p) {
      std::filesystem::path fp(p);
      return fp.is_absolute() ? fp : base / fp;
    };
    out.push_back({fields[0], resolve(fields[1]), resolve(fields[2]), resolve(fields[3])});
  }
  if (out.empty()) throw FormatError(path.string() + ": manifest lists no samples");
  return out;
}

inline void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  std::ostringstream os;
  os << "# sample_id, t1_path, t2_path, labels_path\n";
  for (const auto& e : entries) {
    os << e.id << ", " << e.t1.string() << ", " << e.t2.string() << ", " << e.labels.string() << '\n';
  }
  write_file_atomic(path, os.str());
}

inline Sample load_sample(const ManifestEntry& e) {
  for (const auto* p : {&e.t1, &e.t2, &e.labels}) {
    if (!std::filesystem::exists(*p)) throw IoError("sample '" + e.id + "': missing file " + p->string());
  }
  Sample s;
  s.id = e.id;
  s.modalities.push_back(read_volume(e.t1));
  s.modalities.push_back(read_volume(e.t2));
  s.labels = read_labels(e.labels);
  s.validate();
  return s;
}

}  // namespace dseg::io
