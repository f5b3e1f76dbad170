#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "disms/data.hpp"
#include "disms/error.hpp"
#include "disms/model.hpp"

namespace disms {

enum class RepKind { kRaw, kShared, kSpecific };

inline RepKind rep_kind_from_string(const std::string& s) {
  if (s == "raw") return RepKind::kRaw;
  if (s == "shared") return RepKind::kShared;
  if (s == "specific") return RepKind::kSpecific;
  throw ConfigError("unknown representation kind: " + s);
}

inline std::string to_string(RepKind k) {
  switch (k) {
    case RepKind::kRaw: return "raw";
    case RepKind::kShared: return "shared";
    case RepKind::kSpecific: return "specific";
  }
  return "?";
}

// (S+1) x (S+1) matrix of mean cross-scale similarities; symmetric with
// unit diagonal by construction.
struct CorrelationMatrix {
  std::size_t scales = 0;  // S + 1 rows/cols
  std::vector<double> entries;
  RepKind kind = RepKind::kRaw;
  bool pearson = false;

  double at(std::size_t i, std::size_t j) const {
    return entries[i * scales + j];
  }
  double mean_off_diagonal_abs() const {
    if (scales < 2) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < scales; ++i)
      for (std::size_t j = 0; j < scales; ++j)
        if (i != j) acc += std::abs(at(i, j));
    return acc / static_cast<double>(scales * (scales - 1));
  }
  double mean_off_diagonal() const {
    if (scales < 2) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < scales; ++i)
      for (std::size_t j = 0; j < scales; ++j)
        if (i != j) acc += at(i, j);
    return acc / static_cast<double>(scales * (scales - 1));
  }
};

namespace detail {

inline double vec_similarity(const double* a, const double* b, std::size_t d,
                             bool pearson) {
  double ma = 0.0, mb = 0.0;
  if (pearson) {
    for (std::size_t i = 0; i < d; ++i) {
      ma += a[i];
      mb += b[i];
    }
    ma /= static_cast<double>(d);
    mb /= static_cast<double>(d);
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double av = a[i] - ma, bv = b[i] - mb;
    dot += av * bv;
    na += av * av;
    nb += bv * bv;
  }
  const double denom =
      std::max(std::sqrt(na), kCosineEps) * std::max(std::sqrt(nb), kCosineEps);
  return dot / denom;
}

// Per-scale representation matrices [B x D] for the requested kind.
inline std::vector<std::vector<double>> collect_representations(
    Model& model, const SeriesBatch& split, RepKind kind,
    std::size_t batch_size = 256) {
  const std::size_t n_scales = model.config().scales + 1;
  const std::size_t d = model.config().rep_width();
  std::vector<std::vector<double>> reps(n_scales);
  for (auto& r : reps) r.reserve(split.batch * d);
  const std::size_t per_sample = split.variables * split.length;
  for (std::size_t start = 0; start < split.batch; start += batch_size) {
    const std::size_t stop = std::min(split.batch, start + batch_size);
    SeriesBatch chunk;
    chunk.batch = stop - start;
    chunk.variables = split.variables;
    chunk.length = split.length;
    chunk.values.assign(split.values.begin() + start * per_sample,
                        split.values.begin() + stop * per_sample);
    ForwardResult fwd = model.forward(chunk);
    for (std::size_t s = 0; s < n_scales; ++s) {
      const Tensor* src = nullptr;
      switch (kind) {
        case RepKind::kRaw: src = &fwd.raw[s]; break;
        case RepKind::kShared: src = &fwd.shared.at(s); break;
        case RepKind::kSpecific: src = &fwd.specific.at(s); break;
      }
      reps[s].insert(reps[s].end(), src->values().begin(), src->values().end());
    }
    model.tape().reset();
  }
  return reps;
}

}  // namespace detail

// Entry (i, j) = mean over samples of the similarity between the scale-i and
// scale-j representations of the chosen kind.
inline CorrelationMatrix cross_scale_correlation(Model& model,
                                                 const SeriesBatch& split,
                                                 RepKind kind,
                                                 bool pearson = false) {
  if (kind != RepKind::kRaw && !model.config().use_tdm()) {
    throw StateError("model variant has no disentangled representations");
  }
  const auto reps = detail::collect_representations(model, split, kind);
  const std::size_t n_scales = reps.size();
  const std::size_t d = model.config().rep_width();
  const std::size_t batch = split.batch;
  CorrelationMatrix m;
  m.scales = n_scales;
  m.kind = kind;
  m.pearson = pearson;
  m.entries.assign(n_scales * n_scales, 0.0);
  for (std::size_t i = 0; i < n_scales; ++i) {
    for (std::size_t j = i; j < n_scales; ++j) {
      double acc = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        acc += detail::vec_similarity(reps[i].data() + b * d,
                                      reps[j].data() + b * d, d, pearson);
      }
      const double v = acc / static_cast<double>(batch);
      m.entries[i * n_scales + j] = v;
      m.entries[j * n_scales + i] = v;
    }
  }
  return m;
}

// Plain-text numeric grid with scale labels, 17 significant digits.
inline void export_matrix(const CorrelationMatrix& m,
                          const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os.precision(17);
  os << "scale";
  for (std::size_t j = 0; j < m.scales; ++j) os << " s" << j;
  os << '\n';
  for (std::size_t i = 0; i < m.scales; ++i) {
    os << 's' << i;
    for (std::size_t j = 0; j < m.scales; ++j) os << ' ' << m.at(i, j);
    os << '\n';
  }
  if (!os) throw IoError("write failed: " + path.string());
}

inline CorrelationMatrix parse_matrix(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("matrix file not found: " + path.string());
  std::string header;
  std::getline(is, header);
  std::istringstream hs(header);
  std::string tok;
  hs >> tok;
  std::vector<std::string> labels;
  while (hs >> tok) labels.push_back(tok);
  CorrelationMatrix m;
  m.scales = labels.size();
  m.entries.assign(m.scales * m.scales, 0.0);
  for (std::size_t i = 0; i < m.scales; ++i) {
    is >> tok;
    for (std::size_t j = 0; j < m.scales; ++j) is >> m.entries[i * m.scales + j];
  }
  if (!is) throw DataError("truncated matrix file: " + path.string());
  return m;
}

// Binary dump of per-sample shared/specific (or raw) vectors with scale and
// label annotations: magic "DMTS-REPR\n", version byte, kind byte, then
// u64 rows, u64 dim, then rows of (u64 scale, u64 label, dim doubles),
// all little-endian.
namespace reprdump {
inline constexpr char kMagic[] = "DMTS-REPR\n";
inline constexpr std::uint8_t kVersion = 1;
}  // namespace reprdump

inline void representation_dump(Model& model, const SeriesBatch& split,
                                RepKind kind,
                                const std::filesystem::path& path) {
  const auto reps = detail::collect_representations(model, split, kind);
  const std::size_t d = model.config().rep_width();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os.write(reprdump::kMagic, sizeof(reprdump::kMagic) - 1);
  os.put(static_cast<char>(reprdump::kVersion));
  os.put(static_cast<char>(kind));
  ckpt::write_u64(os, reps.size() * split.batch);
  ckpt::write_u64(os, d);
  for (std::size_t s = 0; s < reps.size(); ++s) {
    for (std::size_t b = 0; b < split.batch; ++b) {
      ckpt::write_u64(os, s);
      ckpt::write_u64(os, split.labels.empty() ? 0 : split.labels[b]);
      for (std::size_t i = 0; i < d; ++i) ckpt::write_f64(os, reps[s][b * d + i]);
    }
  }
  if (!os) throw IoError("write failed: " + path.string());
}

struct RepresentationDump {
  RepKind kind = RepKind::kRaw;
  std::size_t dim = 0;
  std::vector<std::size_t> scale, label;
  std::vector<double> vectors;  // rows x dim
};

inline RepresentationDump load_representation_dump(
    const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("dump not found: " + path.string());
  char magic[sizeof(reprdump::kMagic) - 1];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, reprdump::kMagic, sizeof(magic)) != 0) {
    throw DataError("bad dump magic in " + path.string());
  }
  if (is.get() != reprdump::kVersion) {
    throw DataError("unsupported dump version in " + path.string());
  }
  RepresentationDump d;
  d.kind = static_cast<RepKind>(is.get());
  const std::uint64_t rows = ckpt::read_u64(is);
  d.dim = ckpt::read_u64(is);
  d.scale.resize(rows);
  d.label.resize(rows);
  d.vectors.resize(rows * d.dim);
  for (std::uint64_t r = 0; r < rows; ++r) {
    d.scale[r] = ckpt::read_u64(is);
    d.label[r] = ckpt::read_u64(is);
    for (std::size_t i = 0; i < d.dim; ++i)
      d.vectors[r * d.dim + i] = ckpt::read_f64(is);
  }
  if (!is) throw DataError("truncated dump: " + path.string());
  return d;
}

}  // namespace disms
