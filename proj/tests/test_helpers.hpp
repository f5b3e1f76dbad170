#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "disms/rng.hpp"
#include "disms/tensor.hpp"

namespace disms::test {

inline double rel_err(double got, double want) {
  const double denom = std::max({std::abs(got), std::abs(want), 1e-10});
  return std::abs(got - want) / denom;
}

// Central finite differences d loss / d values[i] for a loss recomputed from
// scratch on every call. Independent of the tape: the callable must rebuild
// its forward pass from the raw buffer.
inline std::vector<double> finite_diff(std::vector<double>& values,
                                       const std::function<double()>& loss,
                                       double h = 1e-5) {
  std::vector<double> grad(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double up = loss();
    values[i] = saved - h;
    const double down = loss();
    values[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

// Max relative error between an analytic gradient and finite differences.
inline double max_grad_rel_err(std::vector<double>& values,
                               const std::vector<double>& analytic,
                               const std::function<double()>& loss,
                               double h = 1e-5) {
  const std::vector<double> fd = finite_diff(values, loss, h);
  double worst = 0.0;
  for (std::size_t i = 0; i < fd.size(); ++i)
    worst = std::max(worst, rel_err(analytic[i], fd[i]));
  return worst;
}

inline std::vector<double> random_values(Rng& rng, std::size_t n, double lo = -1.0,
                                         double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace disms::test
