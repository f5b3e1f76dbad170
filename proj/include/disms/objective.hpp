#pragma once

#include <cstddef>
#include <vector>

#include "disms/disentangle.hpp"
#include "disms/error.hpp"
#include "disms/tensor.hpp"

namespace disms {

// Two fully-connected layers with a ReLU in between.
struct PredictionHead {
  Tensor w1, b1;  // [(S+2) N d x h], [h]
  Tensor w2, b2;  // [h x K], [K]
};

inline Tensor apply_head(const PredictionHead& head, const Tensor& input) {
  Tensor hidden = relu(add_rows(matmul(input, head.w1), head.b1));
  return add_rows(matmul(hidden, head.w2), head.b2);
}

// F_sha = mean over scales of the shared parts; F_spe = concatenation of the
// specific parts in scale order; logits = head(F_sha || F_spe).
inline Tensor fuse_and_predict(const std::vector<DisentangledPair>& pairs,
                               const PredictionHead& head) {
  if (pairs.empty()) throw ShapeError("fuse_and_predict: no scales");
  const Shape& shape0 = pairs[0].shared.shape();
  for (const auto& p : pairs) {
    if (p.shared.shape() != shape0 || p.specific.shape() != shape0) {
      throw ShapeError("fuse_and_predict: inconsistent representation shapes");
    }
  }
  Tensor shared_sum = pairs[0].shared;
  for (std::size_t s = 1; s < pairs.size(); ++s)
    shared_sum = add(shared_sum, pairs[s].shared);
  Tensor shared_mean = scale(shared_sum, 1.0 / static_cast<double>(pairs.size()));
  std::vector<Tensor> blocks;
  blocks.reserve(pairs.size() + 1);
  blocks.push_back(shared_mean);
  for (const auto& p : pairs) blocks.push_back(p.specific);
  return apply_head(head, concat_cols(blocks));
}

namespace detail {

// (2 / (S (S+1))) * sum over pairs i<j of MSE(cos(F_i, F_j), target),
// cosine per sample, squared error averaged over the batch.
inline Tensor pairwise_cosine_loss(const std::vector<Tensor>& reps,
                                   double target) {
  const std::size_t count = reps.size();  // S + 1
  if (count <= 1) return Tensor::scalar(0.0);  // empty pair set at S = 0
  Tensor acc = Tensor::scalar(0.0);
  for (std::size_t i = 0; i + 1 < count; ++i) {
    for (std::size_t j = i + 1; j < count; ++j) {
      Tensor cos = rowwise_cosine(reps[i], reps[j]);
      acc = add(acc, mse_to_const(cos, target));
    }
  }
  const double s = static_cast<double>(count - 1);
  return scale(acc, 2.0 / (s * (s + 1.0)));
}

}  // namespace detail

// Pulls all scale-shared representations toward pairwise cosine 1.
inline Tensor similarity_loss(const std::vector<Tensor>& shared) {
  return detail::pairwise_cosine_loss(shared, 1.0);
}

// Pushes all scale-specific representations toward pairwise orthogonality.
inline Tensor disparity_loss(const std::vector<Tensor>& specific) {
  return detail::pairwise_cosine_loss(specific, 0.0);
}

// The three loss terms plus their weighted total, kept separate for logging.
struct LossBreakdown {
  Tensor class_loss;
  Tensor sim_loss;
  Tensor dis_loss;
  Tensor total;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  bool has_regularizers = true;  // false for the scale-wise-fusion ablation
};

inline LossBreakdown total_loss(const Tensor& logits,
                                const std::vector<std::size_t>& labels,
                                const std::vector<Tensor>& shared,
                                const std::vector<Tensor>& specific,
                                double lambda1, double lambda2) {
  if (lambda1 < 0.0 || lambda2 < 0.0) {
    throw ConfigError("total_loss: lambda weights must be non-negative");
  }
  LossBreakdown out;
  out.lambda1 = lambda1;
  out.lambda2 = lambda2;
  out.class_loss = softmax_cross_entropy(logits, labels);
  out.sim_loss = similarity_loss(shared);
  out.dis_loss = disparity_loss(specific);
  out.total = add(out.class_loss, add(scale(out.sim_loss, lambda1),
                                      scale(out.dis_loss, lambda2)));
  return out;
}

}  // namespace disms
