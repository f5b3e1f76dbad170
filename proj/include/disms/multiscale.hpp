#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "disms/error.hpp"

namespace disms {

// A batch of fixed-length multivariate series, values laid out
// [sample][variable][time].
struct SeriesBatch {
  std::size_t batch = 0;
  std::size_t variables = 0;
  std::size_t length = 0;
  std::vector<double> values;                // batch * variables * length
  std::vector<std::size_t> labels;           // empty at inference

  double at(std::size_t b, std::size_t n, std::size_t t) const {
    return values[(b * variables + n) * length + t];
  }
  double& at(std::size_t b, std::size_t n, std::size_t t) {
    return values[(b * variables + n) * length + t];
  }
};

// The ordered family of downsampled series for one batch; scales[0] is the
// untouched input and scale s has length floor(len(s-1) / window).
struct ScalePyramid {
  std::vector<SeriesBatch> scales;
  std::size_t window = 2;

  std::size_t depth() const { return scales.size() - 1; }  // S
};

// Deepest S such that floor(T / window^S) >= 1.
inline std::size_t max_feasible_depth(std::size_t length, std::size_t window) {
  std::size_t s = 0;
  while (length / window >= 1) {
    length /= window;
    ++s;
  }
  return s;
}

// Repeated per-variable average pooling (window-sized non-overlapping
// means, trailing remainder discarded). S = 0 returns the raw series alone.
inline ScalePyramid build_pyramid(const SeriesBatch& batch, std::size_t depth,
                                  std::size_t window = 2) {
  if (window < 1) throw ConfigError("build_pyramid: window must be >= 1");
  if (window > 1) {
    const std::size_t feasible = max_feasible_depth(batch.length, window);
    if (depth > feasible) {
      throw ConfigError("build_pyramid: depth " + std::to_string(depth) +
                        " would produce an empty scale for length " +
                        std::to_string(batch.length) + "; maximum feasible S is " +
                        std::to_string(feasible));
    }
  }
  ScalePyramid pyramid;
  pyramid.window = window;
  pyramid.scales.reserve(depth + 1);
  pyramid.scales.push_back(batch);
  for (std::size_t s = 1; s <= depth; ++s) {
    const SeriesBatch& prev = pyramid.scales.back();
    SeriesBatch next;
    next.batch = prev.batch;
    next.variables = prev.variables;
    next.length = prev.length / window;
    next.labels = prev.labels;
    next.values.resize(next.batch * next.variables * next.length);
    const double inv = 1.0 / static_cast<double>(window);
    for (std::size_t b = 0; b < next.batch; ++b) {
      for (std::size_t n = 0; n < next.variables; ++n) {
        for (std::size_t t = 0; t < next.length; ++t) {
          double acc = 0.0;
          for (std::size_t j = 0; j < window; ++j)
            acc += prev.at(b, n, t * window + j);
          next.at(b, n, t) = acc * inv;
        }
      }
    }
    pyramid.scales.push_back(std::move(next));
  }
  return pyramid;
}

}  // namespace disms
