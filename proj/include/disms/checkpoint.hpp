#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "disms/error.hpp"
#include "disms/tensor.hpp"

namespace disms {

// Named parameter registry. Names are dotted paths
// ("encoder.scale0.var3.conv.kernels"); iteration order is lexicographic,
// which keeps gradient reduction and serialization deterministic.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t) {
    auto [it, inserted] = params_.emplace(name, std::move(t));
    if (!inserted) throw StateError("duplicate parameter name: " + name);
    return it->second;
  }

  Tensor& get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw StateError("unknown parameter: " + name);
    return it->second;
  }

  bool contains(const std::string& name) const {
    return params_.count(name) != 0;
  }

  std::size_t size() const { return params_.size(); }

  void zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::map<std::string, Tensor> params_;
};

namespace ckpt {

inline constexpr char kMagic[] = "DMTS-CKPT\n";
inline constexpr std::uint8_t kVersion = 1;

inline void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 8);
}

inline std::uint64_t read_u64(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

inline void write_f64(std::ostream& os, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  write_u64(os, bits);
}

inline double read_f64(std::istream& is) {
  const std::uint64_t bits = read_u64(is);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

}  // namespace ckpt

// Flat container: magic, version byte, entry count, then per entry
// name, rank, extents, little-endian 64-bit float payload.
inline void save_checkpoint(const ParamStore& params,
                            const std::filesystem::path& path) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + tmp.string());
    os.write(ckpt::kMagic, sizeof(ckpt::kMagic) - 1);
    os.put(static_cast<char>(ckpt::kVersion));
    ckpt::write_u64(os, params.size());
    for (const auto& [name, t] : params) {
      ckpt::write_u64(os, name.size());
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      ckpt::write_u64(os, t.rank());
      for (std::size_t e : t.shape()) ckpt::write_u64(os, e);
      for (double v : t.values()) ckpt::write_f64(os, v);
    }
    if (!os) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);  // atomic publish
}

// Loads parameter values into the given store. Every checkpoint entry must
// already exist in the store with a matching shape, and vice versa.
inline void load_checkpoint(ParamStore& params,
                            const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw StateError("checkpoint not found: " + path.string());
  char magic[sizeof(ckpt::kMagic) - 1];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, ckpt::kMagic, sizeof(magic)) != 0) {
    throw DataError("bad checkpoint magic in " + path.string());
  }
  const int version = is.get();
  if (version != ckpt::kVersion) {
    throw DataError("unsupported checkpoint version " +
                    std::to_string(version) + " in " + path.string());
  }
  const std::uint64_t count = ckpt::read_u64(is);
  if (count != params.size()) {
    throw DataError("checkpoint has " + std::to_string(count) +
                    " parameters, model expects " +
                    std::to_string(params.size()));
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t name_len = ckpt::read_u64(is);
    std::string name(name_len, '\0');
    is.read(name.data(), static_cast<std::streamsize>(name_len));
    const std::uint64_t rank = ckpt::read_u64(is);
    Shape shape(rank);
    for (auto& e : shape) e = ckpt::read_u64(is);
    if (!is) throw DataError("truncated checkpoint: " + path.string());
    Tensor& t = params.get(name);
    if (t.shape() != shape) {
      throw DataError("shape mismatch for " + name + ": checkpoint " +
                      shape_str(shape) + " vs model " + shape_str(t.shape()));
    }
    for (double& v : t.values()) v = ckpt::read_f64(is);
    if (!is) throw DataError("truncated checkpoint: " + path.string());
  }
}

}  // namespace disms
