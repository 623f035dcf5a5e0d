#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "denseseg/arch/hyperparams.hpp"
#include "denseseg/core/error.hpp"

namespace dseg {

struct TrainConfig {
  double lr0 = 2e-4;
  double gamma = 0.1;
  std::size_t step_size = 50000;
  double weight_decay = 5e-4;
  bool decoupled_weight_decay = false;
  double beta1 = 0.97;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 4;
  std::size_t patch_size = 64;
  std::size_t max_iters = 500;
  std::uint64_t seed = 7;
  std::size_t checkpoint_every = 0;  // 0 = final checkpoint only

  void validate(const HyperParams& hp) const {
    if (!(lr0 > 0.0)) throw ConfigError("lr must be > 0");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
    if (step_size == 0) throw ConfigError("step_size must be >= 1");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in [0, 1)");
    if (!(eps > 0.0)) throw ConfigError("eps must be > 0");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (patch_size == 0 || patch_size % hp.spatial_divisor() != 0) {
      throw ConfigError("patch_size must be a positive multiple of " +
                        std::to_string(hp.spatial_divisor()));
    }
  }
};

struct RunConfig {
  TrainConfig train;
  HyperParams hp;
};

namespace detail {

inline std::string trim_copy(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename U>
U parse_number(const std::string& key, const std::string& text) {
  U value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  std::from_chars_result res{};
  if constexpr (std::is_floating_point_v<U>) {
    // Floating from_chars is missing from libstdc++ 11.
    char* end = nullptr;
    value = static_cast<U>(std::strtod(text.c_str(), &end));
    res.ptr = end;
    res.ec = (end == text.c_str()) ? std::errc::invalid_argument : std::errc{};
  } else {
    res = std::from_chars(first, last, value);
  }
  if (res.ec != std::errc{} || res.ptr != last) {
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  }
  return value;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + text + "'");
}

}  // namespace detail

/// Parses flat `key = value` lines; `#` starts a comment. Unknown keys,
/// duplicates and malformed lines are errors.
inline RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  auto& t = cfg.train;
  auto& hp = cfg.hp;
  std::map<std::string, bool> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim_copy(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const auto key = detail::trim_copy(line.substr(0, eq));
    const auto val = detail::trim_copy(line.substr(eq + 1));
    if (seen[key]) throw ConfigError("config key '" + key + "' given twice");
    seen[key] = true;
    using detail::parse_number;
    if (key == "lr") t.lr0 = parse_number<double>(key, val);
    else if (key == "gamma") t.gamma = parse_number<double>(key, val);
    else if (key == "step_size") t.step_size = parse_number<std::size_t>(key, val);
    else if (key == "weight_decay") t.weight_decay = parse_number<double>(key, val);
    else if (key == "decoupled_weight_decay") t.decoupled_weight_decay = detail::parse_bool(key, val);
    else if (key == "beta1") t.beta1 = parse_number<double>(key, val);
    else if (key == "beta2") t.beta2 = parse_number<double>(key, val);
    else if (key == "eps") t.eps = parse_number<double>(key, val);
    else if (key == "batch_size") t.batch_size = parse_number<std::size_t>(key, val);
    else if (key == "patch_size") t.patch_size = parse_number<std::size_t>(key, val);
    else if (key == "max_iters") t.max_iters = parse_number<std::size_t>(key, val);
    else if (key == "seed") t.seed = parse_number<std::uint64_t>(key, val);
    else if (key == "checkpoint_every") t.checkpoint_every = parse_number<std::size_t>(key, val);
    else if (key == "growth_rate") hp.growth_rate = parse_number<std::size_t>(key, val);
    else if (key == "stem_channels") hp.stem_channels = parse_number<std::size_t>(key, val);
    else if (key == "compression") hp.compression = parse_number<double>(key, val);
    else if (key == "num_blocks") hp.num_blocks = parse_number<std::size_t>(key, val);
    else if (key == "layers_per_block") hp.layers_per_block = parse_number<std::size_t>(key, val);
    else if (key == "dropout_rate") hp.dropout_rate = parse_number<double>(key, val);
    else if (key == "num_classes") hp.num_classes = parse_number<std::size_t>(key, val);
    else if (key == "num_modalities") hp.num_modalities = parse_number<std::size_t>(key, val);
    else if (key == "upsample_path_channels") hp.upsample_path_channels = parse_number<std::size_t>(key, val);
    else if (key == "upsample_mode") hp.upsample_mode = parse_fusion_upsample(val);
    else throw ConfigError("unknown config key '" + key + "'");
  }
  hp.validate();
  t.validate(hp);
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace dseg
