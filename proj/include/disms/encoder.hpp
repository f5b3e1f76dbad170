#pragma once

#include <cstddef>
#include <vector>

#include "disms/error.hpp"
#include "disms/tensor.hpp"

namespace disms {

// Conv front-end geometry for one scale. The kernel shrinks with the series
// so coarse scales stay legal: k = min(kernel, T_s), stride = max(1, k/2).
struct ConvGeometry {
  std::size_t kernel = 0;
  std::size_t stride = 0;
  std::size_t steps = 0;  // L_s = floor((T_s - k) / stride) + 1
};

inline ConvGeometry conv_geometry(std::size_t length, std::size_t kernel) {
  ConvGeometry g;
  g.kernel = std::min(kernel, length);
  g.stride = std::max<std::size_t>(1, g.kernel / 2);
  g.steps = (length - g.kernel) / g.stride + 1;
  return g;
}

// Local multi-channel projection (one variable, one scale):
// ReLU(W (*) x + b) with valid cross-correlation.
inline Tensor lmp_project(const Tensor& series, const Tensor& kernels,
                          const Tensor& bias, std::size_t stride) {
  return relu(conv1d(series, kernels, bias, stride));
}

// Two-gate recurrent cell, canonical formulation:
//   z = sigmoid(x Wz + h Uz + bz)
//   r = sigmoid(x Wr + h Ur + br)
//   c = tanh(x Wc + (r (.) h) Uc + bc)
//   h' = (1 - z) (.) h + z (.) c
struct GruParams {
  Tensor wz, uz, bz;  // update gate: [in x d], [d x d], [d]
  Tensor wr, ur, br;  // reset gate
  Tensor wc, uc, bc;  // candidate
};

// One cell step over a batch: x [B x in], h [B x d] -> [B x d].
inline Tensor gru_step(const GruParams& p, const Tensor& x, const Tensor& h) {
  Tensor z = sigmoid(add_rows(add(matmul(x, p.wz), matmul(h, p.uz)), p.bz));
  Tensor r = sigmoid(add_rows(add(matmul(x, p.wr), matmul(h, p.ur)), p.br));
  Tensor c = tanh_op(add_rows(add(matmul(x, p.wc), matmul(mul(r, h), p.uc)), p.bc));
  return add(h, mul(z, sub(c, h)));  // h + z (.) (c - h)
}

// Global temporal aggregation of one local representation [C x L]:
// runs the cell over the L steps from h0 = 0 and returns the final state.
inline Tensor gta_aggregate(const GruParams& p, const Tensor& local) {
  if (local.rank() != 2) {
    throw ShapeError("gta_aggregate expects [C x L], got " +
                     shape_str(local.shape()));
  }
  const std::size_t steps = local.shape()[1];
  const std::size_t d = p.bz.size();
  Tensor stepwise = transpose(local);  // [L x C]
  Tensor h = Tensor::zeros({1, d});
  for (std::size_t l = 0; l < steps; ++l) {
    h = gru_step(p, row_slice(stepwise, l, l + 1), h);
  }
  return reshape(h, {d});
}

}  // namespace disms
