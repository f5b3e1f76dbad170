#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "disms/error.hpp"

namespace disms {

inline constexpr const char* kToolVersion = "0.1.0";

// Flat dotted-key configuration: "key = value" lines, '#' comments.
using ConfigMap = std::map<std::string, std::string>;

inline ConfigMap parse_config_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config file not found: " + path.string());
  ConfigMap out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("malformed line " + std::to_string(lineno) + " in " +
                        path.string() + " (expected key = value)");
    }
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

// "key=value" override, as given on the command line. Flags win over file.
inline void apply_override(ConfigMap& cfg, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must look like key=value, got '" + kv + "'");
  }
  cfg[kv.substr(0, eq)] = kv.substr(eq + 1);
}

// FNV-1a over the canonical sorted "key=value\n" rendering, so the hash is
// stable under key reordering in the source file.
inline std::uint64_t config_hash(const ConfigMap& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [k, v] : cfg) {
    feed(k);
    feed("=");
    feed(v);
    feed("\n");
  }
  return h;
}

template <typename T>
inline T config_get(const ConfigMap& cfg, const std::string& key, T fallback) {
  auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  std::istringstream is(it->second);
  T out;
  is >> out;
  if (is.fail()) throw ConfigError("cannot parse config key '" + key +
                                   "' from value '" + it->second + "'");
  return out;
}

template <>
inline std::string config_get<std::string>(const ConfigMap& cfg,
                                           const std::string& key,
                                           std::string fallback) {
  auto it = cfg.find(key);
  return it == cfg.end() ? fallback : it->second;
}

// Written before training starts; every run is reconstructible from it.
struct RunManifest {
  ConfigMap resolved;
  std::uint64_t seed = 0;
  std::filesystem::path checkpoint_best, checkpoint_final, log, report;

  void write(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    os << "tool_version = " << kToolVersion << "\n";
    os << "config_hash = " << std::hex << config_hash(resolved) << std::dec
       << "\n";
    os << "seed = " << seed << "\n";
    os << "path.checkpoint_best = " << checkpoint_best.string() << "\n";
    os << "path.checkpoint_final = " << checkpoint_final.string() << "\n";
    os << "path.log = " << log.string() << "\n";
    if (!report.empty()) os << "path.report = " << report.string() << "\n";
    for (const auto& [k, v] : resolved) os << "config." << k << " = " << v << "\n";
    if (!os) throw IoError("write failed: " + path.string());
  }
};

}  // namespace disms
