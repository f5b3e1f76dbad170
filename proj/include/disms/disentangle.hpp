#pragma once

#include "disms/error.hpp"
#include "disms/tensor.hpp"

namespace disms {

// One fully-connected mask projector, output width = input width.
struct ProjectorParams {
  Tensor weight;  // [D x D]
  Tensor bias;    // [D]
};

// Complementary temperature-sigmoid split of a per-scale representation.
// By construction M_sha + M_spe = 1 and F_sha + F_spe = F elementwise.
struct DisentangledPair {
  Tensor mask_shared;
  Tensor mask_specific;
  Tensor shared;    // F_{s,sha}, [B x D]
  Tensor specific;  // F_{s,spe}, [B x D]
};

inline DisentangledPair disentangle(const Tensor& f, const ProjectorParams& proj,
                                    double temperature) {
  if (temperature <= 0.0) {
    throw ConfigError("disentangle: temperature must be positive, got " +
                      std::to_string(temperature));
  }
  Tensor m = add_rows(matmul(f, proj.weight), proj.bias);
  Tensor scaled = scale(m, 1.0 / temperature);
  DisentangledPair pair;
  pair.mask_shared = sigmoid(scaled);
  pair.mask_specific = sigmoid(scale(scaled, -1.0));
  pair.shared = mul(pair.mask_shared, f);
  pair.specific = mul(pair.mask_specific, f);
  return pair;
}

}  // namespace disms
