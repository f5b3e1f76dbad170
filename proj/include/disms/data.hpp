#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "disms/checkpoint.hpp"
#include "disms/error.hpp"
#include "disms/multiscale.hpp"
#include "disms/rng.hpp"

namespace disms {

// Labeled multivariate series with declared train/val/test splits plus the
// manifest fields needed to reproduce preprocessing.
struct DatasetContainer {
  std::string name;
  std::size_t variables = 0;  // N
  std::size_t length = 0;     // T
  std::size_t classes = 0;    // K
  SeriesBatch train, val, test;
  std::string normalization = "none";  // none | zscore
  std::vector<double> norm_mean, norm_std;
  std::vector<std::string> warnings;

  SeriesBatch& split(const std::string& which) {
    if (which == "train") return train;
    if (which == "val") return val;
    if (which == "test") return test;
    throw ConfigError("unknown split: " + which);
  }
  const SeriesBatch& split(const std::string& which) const {
    return const_cast<DatasetContainer*>(this)->split(which);
  }
};

namespace dataio {

inline constexpr char kMagic[] = "DMTS-DATA\n";
inline constexpr std::uint8_t kVersion = 1;

inline void write_split(const SeriesBatch& batch, std::size_t classes,
                        const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os.write(kMagic, sizeof(kMagic) - 1);
  os.put(static_cast<char>(kVersion));
  ckpt::write_u64(os, batch.batch);
  ckpt::write_u64(os, batch.variables);
  ckpt::write_u64(os, batch.length);
  ckpt::write_u64(os, classes);
  for (double v : batch.values) ckpt::write_f64(os, v);
  for (std::size_t l : batch.labels) ckpt::write_u64(os, l);
  if (!os) throw IoError("write failed: " + path.string());
}

inline SeriesBatch read_split(const std::filesystem::path& path,
                              std::size_t expect_classes) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("dataset payload not found: " + path.string());
  const std::uintmax_t file_size = std::filesystem::file_size(path);
  char magic[sizeof(kMagic) - 1];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw DataError("bad dataset magic in " + path.string());
  }
  const int version = is.get();
  if (version != kVersion) {
    throw DataError("unsupported dataset version " + std::to_string(version) +
                    " in " + path.string());
  }
  SeriesBatch batch;
  batch.batch = ckpt::read_u64(is);
  batch.variables = ckpt::read_u64(is);
  batch.length = ckpt::read_u64(is);
  const std::uint64_t classes = ckpt::read_u64(is);
  if (classes != expect_classes) {
    throw DataError("payload declares " + std::to_string(classes) +
                    " classes, manifest says " + std::to_string(expect_classes));
  }
  const std::uintmax_t expected_size =
      sizeof(kMagic) - 1 + 1 + 4 * 8 +
      batch.batch * batch.variables * batch.length * 8 + batch.batch * 8;
  if (file_size != expected_size) {
    throw DataError("corrupt payload " + path.string() + ": expected " +
                    std::to_string(expected_size) + " bytes, found " +
                    std::to_string(file_size));
  }
  batch.values.resize(batch.batch * batch.variables * batch.length);
  for (double& v : batch.values) v = ckpt::read_f64(is);
  batch.labels.resize(batch.batch);
  for (std::size_t& l : batch.labels) l = ckpt::read_u64(is);
  if (!is) throw DataError("truncated payload: " + path.string());
  const std::size_t per_sample = batch.variables * batch.length;
  for (std::size_t i = 0; i < batch.values.size(); ++i) {
    if (!std::isfinite(batch.values[i])) {
      throw DataError("non-finite value in " + path.string() + " at sample " +
                      std::to_string(i / per_sample));
    }
  }
  for (std::size_t b = 0; b < batch.batch; ++b) {
    if (batch.labels[b] >= classes) {
      throw DataError("label " + std::to_string(batch.labels[b]) +
                      " at sample " + std::to_string(b) + " outside [0, " +
                      std::to_string(classes) + ") in " + path.string());
    }
  }
  return batch;
}

}  // namespace dataio

// Writes manifest + three split payloads into `dir`; returns the manifest path.
inline std::filesystem::path save_dataset(const DatasetContainer& ds,
                                          const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string base = ds.name.empty() ? "dataset" : ds.name;
  for (const char* which : {"train", "val", "test"}) {
    dataio::write_split(ds.split(which), ds.classes,
                        dir / (base + "." + which + ".bin"));
  }
  const std::filesystem::path manifest = dir / (base + ".manifest");
  std::ofstream os(manifest);
  if (!os) throw IoError("cannot open for writing: " + manifest.string());
  os << "format_version = 1\n";
  os << "name = " << base << "\n";
  os << "variables = " << ds.variables << "\n";
  os << "length = " << ds.length << "\n";
  os << "classes = " << ds.classes << "\n";
  os << "count.train = " << ds.train.batch << "\n";
  os << "count.val = " << ds.val.batch << "\n";
  os << "count.test = " << ds.test.batch << "\n";
  os << "normalization = " << ds.normalization << "\n";
  if (ds.normalization == "zscore") {
    os.precision(17);
    for (std::size_t n = 0; n < ds.variables; ++n) {
      os << "norm.mean." << n << " = " << ds.norm_mean[n] << "\n";
      os << "norm.std." << n << " = " << ds.norm_std[n] << "\n";
    }
  }
  for (const std::string& w : ds.warnings) os << "warning = " << w << "\n";
  for (const char* which : {"train", "val", "test"}) {
    os << "payload." << which << " = " << base << "." << which << ".bin\n";
  }
  if (!os) throw IoError("write failed: " + manifest.string());
  return manifest;
}

inline DatasetContainer load_dataset(const std::filesystem::path& manifest) {
  std::ifstream is(manifest);
  if (!is) throw DataError("manifest not found: " + manifest.string());
  std::map<std::string, std::string> kv;
  DatasetContainer ds;
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "warning") {
      ds.warnings.push_back(val);
    } else {
      kv[key] = val;
    }
  }
  if (kv["format_version"] != "1") {
    throw DataError("unsupported manifest version '" + kv["format_version"] +
                    "' in " + manifest.string());
  }
  ds.name = kv["name"];
  ds.variables = std::stoull(kv["variables"]);
  ds.length = std::stoull(kv["length"]);
  ds.classes = std::stoull(kv["classes"]);
  ds.normalization = kv.count("normalization") ? kv["normalization"] : "none";
  if (ds.normalization == "zscore") {
    ds.norm_mean.resize(ds.variables);
    ds.norm_std.resize(ds.variables);
    for (std::size_t n = 0; n < ds.variables; ++n) {
      ds.norm_mean[n] = std::stod(kv["norm.mean." + std::to_string(n)]);
      ds.norm_std[n] = std::stod(kv["norm.std." + std::to_string(n)]);
    }
  }
  const std::filesystem::path dir = manifest.parent_path();
  for (const char* which : {"train", "val", "test"}) {
    const std::string key = std::string("payload.") + which;
    if (!kv.count(key)) throw DataError("manifest missing " + key);
    SeriesBatch batch = dataio::read_split(dir / kv[key], ds.classes);
    if (batch.variables != ds.variables || batch.length != ds.length) {
      throw DataError("payload dims disagree with manifest for split " +
                      std::string(which));
    }
    const std::size_t declared =
        std::stoull(kv["count." + std::string(which)]);
    if (batch.batch != declared) {
      throw DataError("split " + std::string(which) + " has " +
                      std::to_string(batch.batch) + " samples, manifest says " +
                      std::to_string(declared));
    }
    ds.split(which) = std::move(batch);
  }
  return ds;
}

// Per-variable z-score with statistics computed on the train split only and
// reapplied unchanged to val/test. A zero-variance variable keeps its values
// (std recorded as 1) and a warning is appended.
inline void normalize_dataset(DatasetContainer& ds, const std::string& mode) {
  if (mode == "none") return;
  if (mode != "zscore") throw ConfigError("unknown normalization mode: " + mode);
  if (ds.normalization == "zscore") {
    throw StateError("dataset already normalized");
  }
  ds.norm_mean.assign(ds.variables, 0.0);
  ds.norm_std.assign(ds.variables, 1.0);
  const SeriesBatch& tr = ds.train;
  const double count = static_cast<double>(tr.batch * tr.length);
  for (std::size_t n = 0; n < ds.variables; ++n) {
    double sum = 0.0, sq = 0.0;
    for (std::size_t b = 0; b < tr.batch; ++b) {
      for (std::size_t t = 0; t < tr.length; ++t) {
        const double v = tr.at(b, n, t);
        sum += v;
        sq += v * v;
      }
    }
    const double mean = sum / count;
    const double var = std::max(0.0, sq / count - mean * mean);
    double std_dev = std::sqrt(var);
    if (std_dev == 0.0) {
      std_dev = 1.0;
      ds.warnings.push_back("variable " + std::to_string(n) +
                            " has zero variance on train; std recorded as 1");
    }
    ds.norm_mean[n] = mean;
    ds.norm_std[n] = std_dev;
  }
  for (const char* which : {"train", "val", "test"}) {
    SeriesBatch& batch = ds.split(which);
    for (std::size_t b = 0; b < batch.batch; ++b)
      for (std::size_t n = 0; n < ds.variables; ++n)
        for (std::size_t t = 0; t < batch.length; ++t)
          batch.at(b, n, t) = (batch.at(b, n, t) - ds.norm_mean[n]) / ds.norm_std[n];
  }
  ds.normalization = "zscore";
}

// ---------------------------------------------------------------------------
// synthetic generator with planted scale-shared / scale-specific structure
// ---------------------------------------------------------------------------

// Each sample is trend(t_class) + burst(b_class) + noise. The trend is a
// smooth class-dependent sinusoid that survives average pooling; the burst is
// an alternating-sign pattern confined to a class-dependent, even-aligned
// segment, so window-2 pooling annihilates it. Label modes:
//   trend -> label = t_class, burst -> label = b_class,
//   both  -> label = (t_class + b_class) mod K, so neither component alone
//            suffices for perfect accuracy.
struct SynthSpec {
  std::size_t variables = 4;
  std::size_t length = 128;
  std::size_t classes = 3;
  std::size_t per_class = 200;  // total per class across all splits
  std::uint64_t seed = 1;
  double noise = 0.1;           // sigma
  std::string label_mode = "both";  // both | trend | burst
  double trend_amp = 1.5;
  double burst_amp = 2.0;
  // class-independent smooth per-sample confound, shared by all variables and
  // preserved by pooling (offset + ramp + half-sine, near-orthogonal to the
  // integer-frequency trend templates)
  double drift_amp = 0.0;
  double train_frac = 0.6;
  double val_frac = 0.2;
};

namespace synth {

inline double trend_value(const SynthSpec& spec, std::size_t t_class,
                          std::size_t var, std::size_t t) {
  const double phase = 0.9 * static_cast<double>(var);
  const double freq = static_cast<double>(t_class + 1);
  const double x = static_cast<double>(t) / static_cast<double>(spec.length);
  return spec.trend_amp * std::sin(2.0 * std::numbers::pi * freq * x + phase);
}

inline double burst_value(const SynthSpec& spec, std::size_t b_class,
                          std::size_t var, std::size_t t) {
  // active segment for class q, start floored to an even index so the
  // alternating signs pair up under window-2 pooling
  const std::size_t seg = spec.length / spec.classes;
  std::size_t start = (b_class * seg) & ~std::size_t{1};
  std::size_t stop = start + (seg & ~std::size_t{1});
  if (t < start || t >= stop) return 0.0;
  const double sign = (t % 2 == 0) ? 1.0 : -1.0;
  // per-variable polarity keeps variables from being copies of each other
  const double pol = (var % 2 == 0) ? 1.0 : -1.0;
  return spec.burst_amp * sign * pol;
}

}  // namespace synth

inline DatasetContainer generate_synthetic(const SynthSpec& spec) {
  if (spec.classes < 2 || spec.per_class < 3 || spec.length < 8 ||
      spec.variables < 1) {
    throw ConfigError("infeasible synthetic spec (need K>=2, >=3 per class, T>=8)");
  }
  if (spec.label_mode != "both" && spec.label_mode != "trend" &&
      spec.label_mode != "burst") {
    throw ConfigError("unknown label mode: " + spec.label_mode);
  }
  if (spec.train_frac <= 0.0 || spec.val_frac < 0.0 ||
      spec.train_frac + spec.val_frac >= 1.0) {
    throw ConfigError("invalid split fractions");
  }
  const std::size_t total = spec.classes * spec.per_class;
  const std::size_t per_sample = spec.variables * spec.length;

  Rng rng = Rng::stream(spec.seed, /*tag=*/0x5d1);
  std::vector<double> values(total * per_sample);
  std::vector<std::size_t> labels(total);
  std::size_t idx = 0;
  for (std::size_t label = 0; label < spec.classes; ++label) {
    for (std::size_t i = 0; i < spec.per_class; ++i, ++idx) {
      std::size_t t_class, b_class;
      if (spec.label_mode == "trend") {
        t_class = label;
        b_class = rng.index(spec.classes);
      } else if (spec.label_mode == "burst") {
        b_class = label;
        t_class = rng.index(spec.classes);
      } else {
        t_class = rng.index(spec.classes);
        b_class = (label + spec.classes - t_class) % spec.classes;
      }
      labels[idx] = label;
      const double d0 = rng.normal(0.0, 1.0);
      const double d1 = rng.normal(0.0, 1.0);
      const double d2 = rng.normal(0.0, 1.0);
      double* sample = values.data() + idx * per_sample;
      for (std::size_t n = 0; n < spec.variables; ++n) {
        for (std::size_t t = 0; t < spec.length; ++t) {
          const double x =
              static_cast<double>(t) / static_cast<double>(spec.length);
          double v = synth::trend_value(spec, t_class, n, t) +
                     synth::burst_value(spec, b_class, n, t);
          v += spec.drift_amp *
               (d0 + d1 * (x - 0.5) + d2 * std::sin(std::numbers::pi * x));
          if (spec.noise > 0.0) v += rng.normal(0.0, spec.noise);
          sample[n * spec.length + t] = v;
        }
      }
    }
  }

  // stratified deterministic split
  Rng split_rng = Rng::stream(spec.seed, /*tag=*/0x5d2);
  std::vector<std::size_t> train_idx, val_idx, test_idx;
  for (std::size_t label = 0; label < spec.classes; ++label) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < total; ++i)
      if (labels[i] == label) members.push_back(i);
    split_rng.shuffle(members);
    const std::size_t n_train =
        static_cast<std::size_t>(spec.train_frac * members.size());
    const std::size_t n_val =
        static_cast<std::size_t>(spec.val_frac * members.size());
    for (std::size_t i = 0; i < members.size(); ++i) {
      if (i < n_train) train_idx.push_back(members[i]);
      else if (i < n_train + n_val) val_idx.push_back(members[i]);
      else test_idx.push_back(members[i]);
    }
  }

  DatasetContainer ds;
  ds.name = "synth";
  ds.variables = spec.variables;
  ds.length = spec.length;
  ds.classes = spec.classes;
  auto assemble = [&](const std::vector<std::size_t>& idxs) {
    SeriesBatch batch;
    batch.batch = idxs.size();
    batch.variables = spec.variables;
    batch.length = spec.length;
    batch.values.resize(idxs.size() * per_sample);
    batch.labels.resize(idxs.size());
    for (std::size_t i = 0; i < idxs.size(); ++i) {
      std::memcpy(batch.values.data() + i * per_sample,
                  values.data() + idxs[i] * per_sample, per_sample * 8);
      batch.labels[i] = labels[idxs[i]];
    }
    return batch;
  };
  ds.train = assemble(train_idx);
  ds.val = assemble(val_idx);
  ds.test = assemble(test_idx);
  return ds;
}

}  // namespace disms
