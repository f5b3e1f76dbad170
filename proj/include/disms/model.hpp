#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "disms/checkpoint.hpp"
#include "disms/disentangle.hpp"
#include "disms/encoder.hpp"
#include "disms/error.hpp"
#include "disms/multiscale.hpp"
#include "disms/objective.hpp"
#include "disms/rng.hpp"
#include "disms/tensor.hpp"

namespace disms {

enum class Ablation {
  kFull,     // the complete model
  kNoLmp,    // raw series fed to the recurrent aggregator
  kSwfMean,  // no disentanglement: F_s fused by uniform mean, no regularizers
};

inline Ablation ablation_from_string(const std::string& s) {
  if (s == "full") return Ablation::kFull;
  if (s == "no-lmp") return Ablation::kNoLmp;
  if (s == "swf-mean") return Ablation::kSwfMean;
  throw ConfigError("unknown ablation variant: " + s);
}

inline std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::kFull: return "full";
    case Ablation::kNoLmp: return "no-lmp";
    case Ablation::kSwfMean: return "swf-mean";
  }
  return "?";
}

struct ModelConfig {
  std::size_t variables = 1;   // N
  std::size_t length = 1;      // T
  std::size_t classes = 2;     // K
  std::size_t scales = 3;      // S
  std::size_t window = 2;
  std::size_t channels = 16;   // C
  std::size_t kernel = 8;      // conv width cap; per scale k = min(kernel, T_s)
  std::size_t hidden = 32;     // d
  double temperature = 1.0;    // tau
  Ablation ablation = Ablation::kFull;

  std::size_t rep_width() const { return variables * hidden; }
  bool use_lmp() const { return ablation != Ablation::kNoLmp; }
  bool use_tdm() const { return ablation != Ablation::kSwfMean; }
  std::size_t head_input_width() const {
    return use_tdm() ? (scales + 2) * rep_width() : rep_width();
  }
};

struct ForwardResult {
  Tensor logits;                        // [B x K]
  std::vector<Tensor> raw;              // F_s, each [B x N d]
  std::vector<DisentangledPair> pairs;  // empty for swf-mean
  std::vector<Tensor> shared;           // convenience views of pairs
  std::vector<Tensor> specific;
};

// The full model: scale pyramid -> per-variable conv front end -> shared
// recurrent aggregator with per-variable scoring -> per-scale mask split ->
// fused prediction head.
class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed)
      : config_(std::move(config)) {
    validate();
    Rng rng = Rng::stream(seed, /*tag=*/0x1a1);
    build_params(rng);
  }

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  Tape& tape() { return tape_; }

  ForwardResult forward(const SeriesBatch& batch) {
    if (batch.variables != config_.variables || batch.length != config_.length) {
      throw ConfigError("model built for N=" + std::to_string(config_.variables) +
                        ", T=" + std::to_string(config_.length) + " but batch is N=" +
                        std::to_string(batch.variables) + ", T=" +
                        std::to_string(batch.length));
    }
    ScalePyramid pyramid = build_pyramid(batch, config_.scales, config_.window);
    ForwardResult out;
    for (std::size_t s = 0; s <= config_.scales; ++s) {
      out.raw.push_back(encode_scale(pyramid.scales[s], s));
    }
    if (config_.use_tdm()) {
      for (std::size_t s = 0; s <= config_.scales; ++s) {
        ProjectorParams proj{params_.get(proj_name(s, "weight")),
                             params_.get(proj_name(s, "bias"))};
        out.pairs.push_back(disentangle(out.raw[s], proj, config_.temperature));
        out.shared.push_back(out.pairs.back().shared);
        out.specific.push_back(out.pairs.back().specific);
      }
      out.logits = fuse_and_predict(out.pairs, head());
    } else {
      Tensor fused = out.raw[0];
      for (std::size_t s = 1; s <= config_.scales; ++s)
        fused = add(fused, out.raw[s]);
      fused = scale(fused, 1.0 / static_cast<double>(config_.scales + 1));
      out.logits = apply_head(head(), fused);
    }
    return out;
  }

  LossBreakdown loss(const ForwardResult& fwd,
                     const std::vector<std::size_t>& labels, double lambda1,
                     double lambda2) {
    if (config_.use_tdm()) {
      return total_loss(fwd.logits, labels, fwd.shared, fwd.specific, lambda1,
                        lambda2);
    }
    // scale-wise fusion never computes the regularizers
    LossBreakdown out;
    out.lambda1 = lambda1;
    out.lambda2 = lambda2;
    out.has_regularizers = false;
    out.class_loss = softmax_cross_entropy(fwd.logits, labels);
    out.sim_loss = Tensor::scalar(0.0);
    out.dis_loss = Tensor::scalar(0.0);
    out.total = out.class_loss;
    return out;
  }

 private:
  void validate() const {
    if (config_.variables < 1 || config_.length < 1 || config_.classes < 2 ||
        config_.hidden < 1 || config_.channels < 1 || config_.kernel < 1) {
      throw ConfigError("model dimensions must be positive (K >= 2)");
    }
    if (config_.temperature <= 0.0) {
      throw ConfigError("temperature must be positive");
    }
    const std::size_t feasible =
        max_feasible_depth(config_.length, config_.window);
    if (config_.window > 1 && config_.scales > feasible) {
      throw ConfigError("scale count " + std::to_string(config_.scales) +
                        " infeasible for length " + std::to_string(config_.length) +
                        "; maximum feasible S is " + std::to_string(feasible));
    }
  }

  std::size_t scale_length(std::size_t s) const {
    std::size_t len = config_.length;
    for (std::size_t i = 0; i < s; ++i) len /= config_.window;
    return len;
  }

  static std::string conv_name(std::size_t s, std::size_t n, const char* leaf) {
    return "encoder.scale" + std::to_string(s) + ".var" + std::to_string(n) +
           ".conv." + leaf;
  }
  static std::string proj_name(std::size_t s, const char* leaf) {
    return "disentangle.scale" + std::to_string(s) + ".proj." +
           std::string(leaf);
  }

  Tensor init_tensor(Rng& rng, Shape shape, std::size_t fan_in) {
    const double lim = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = rng.uniform(-lim, lim);
    return tape_.leaf(std::move(shape), std::move(v));
  }

  void build_params(Rng& rng) {
    const std::size_t n = config_.variables, d = config_.hidden;
    const std::size_t c = config_.channels;
    if (config_.use_lmp()) {
      for (std::size_t s = 0; s <= config_.scales; ++s) {
        const ConvGeometry geo = conv_geometry(scale_length(s), config_.kernel);
        for (std::size_t v = 0; v < n; ++v) {
          params_.add(conv_name(s, v, "kernels"),
                      init_tensor(rng, {c, geo.kernel}, geo.kernel));
          params_.add(conv_name(s, v, "bias"), init_tensor(rng, {c}, geo.kernel));
        }
      }
    }
    const std::size_t in = gru_input_width();
    const char* gates[3] = {"update", "reset", "cand"};
    for (const char* gate : gates) {
      const std::string base = std::string("encoder.gru.") + gate;
      params_.add(base + ".w", init_tensor(rng, {in, d}, in));
      params_.add(base + ".u", init_tensor(rng, {d, d}, d));
      params_.add(base + ".b", init_tensor(rng, {d}, d));
    }
    if (n > 1) {
      // adaptive variable scores start at 1 (plain concatenation)
      params_.add("encoder.beta", tape_.leaf({n}, std::vector<double>(n, 1.0)));
    }
    const std::size_t rep = config_.rep_width();
    if (config_.use_tdm()) {
      for (std::size_t s = 0; s <= config_.scales; ++s) {
        params_.add(proj_name(s, "weight"), init_tensor(rng, {rep, rep}, rep));
        params_.add(proj_name(s, "bias"), init_tensor(rng, {rep}, rep));
      }
    }
    const std::size_t head_in = config_.head_input_width();
    const std::size_t h = rep;
    params_.add("head.fc1.weight", init_tensor(rng, {head_in, h}, head_in));
    params_.add("head.fc1.bias", init_tensor(rng, {h}, head_in));
    params_.add("head.fc2.weight", init_tensor(rng, {h, config_.classes}, h));
    params_.add("head.fc2.bias", init_tensor(rng, {config_.classes}, h));
  }

  std::size_t gru_input_width() const {
    return config_.use_lmp() ? config_.channels : 1;
  }

  GruParams gru() {
    return GruParams{params_.get("encoder.gru.update.w"),
                     params_.get("encoder.gru.update.u"),
                     params_.get("encoder.gru.update.b"),
                     params_.get("encoder.gru.reset.w"),
                     params_.get("encoder.gru.reset.u"),
                     params_.get("encoder.gru.reset.b"),
                     params_.get("encoder.gru.cand.w"),
                     params_.get("encoder.gru.cand.u"),
                     params_.get("encoder.gru.cand.b")};
  }

  PredictionHead head() {
    return PredictionHead{params_.get("head.fc1.weight"),
                          params_.get("head.fc1.bias"),
                          params_.get("head.fc2.weight"),
                          params_.get("head.fc2.bias")};
  }

  // Step-major patch matrix for one variable of one scale: row l*B + b holds
  // the window starting at l*stride of sample b, so each recurrent step is a
  // contiguous row slice. The input itself is never gradient-tracked.
  Tensor make_patches(const SeriesBatch& scale, std::size_t var,
                      const ConvGeometry& geo) const {
    const std::size_t batch = scale.batch;
    std::vector<double> v(geo.steps * batch * geo.kernel);
    for (std::size_t l = 0; l < geo.steps; ++l) {
      for (std::size_t b = 0; b < batch; ++b) {
        double* row = v.data() + (l * batch + b) * geo.kernel;
        for (std::size_t j = 0; j < geo.kernel; ++j)
          row[j] = scale.at(b, var, l * geo.stride + j);
      }
    }
    return Tensor::constant({geo.steps * batch, geo.kernel}, std::move(v));
  }

  Tensor encode_scale(const SeriesBatch& scale, std::size_t s) {
    const std::size_t batch = scale.batch;
    const std::size_t d = config_.hidden;
    GruParams cell = gru();
    std::vector<Tensor> per_variable;
    per_variable.reserve(config_.variables);
    for (std::size_t n = 0; n < config_.variables; ++n) {
      ConvGeometry geo;
      Tensor seq;  // [L*B x in], step-major
      if (config_.use_lmp()) {
        geo = conv_geometry(scale.length, config_.kernel);
        Tensor patches = make_patches(scale, n, geo);
        Tensor kernels = params_.get(conv_name(s, n, "kernels"));
        Tensor bias = params_.get(conv_name(s, n, "bias"));
        seq = relu(add_rows(matmul(patches, transpose(kernels)), bias));
      } else {
        geo.kernel = 1;
        geo.stride = 1;
        geo.steps = scale.length;
        seq = make_patches(scale, n, geo);
      }
      Tensor h = Tensor::zeros({batch, d});
      for (std::size_t l = 0; l < geo.steps; ++l) {
        h = gru_step(cell, row_slice(seq, l * batch, (l + 1) * batch), h);
      }
      if (config_.variables > 1) {
        h = broadcast_mul(h, gather_scalar(params_.get("encoder.beta"), n));
      }
      per_variable.push_back(h);
    }
    return per_variable.size() == 1 ? per_variable[0]
                                    : concat_cols(per_variable);
  }

  ModelConfig config_;
  Tape tape_;
  ParamStore params_;
};

}  // namespace disms
