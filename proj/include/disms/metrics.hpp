#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "disms/error.hpp"

namespace disms {

// Confusion-matrix based evaluation report. Macro-F1 scores a class with
// zero support and zero predictions as 0 rather than excluding it.
struct MetricsReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double mcc = 0.0;
  std::vector<double> precision;         // per class
  std::vector<double> recall;            // per class
  std::vector<std::size_t> confusion;    // K x K, row = truth, col = prediction
  std::size_t classes = 0;
  std::size_t samples = 0;

  std::size_t cell(std::size_t truth, std::size_t pred) const {
    return confusion[truth * classes + pred];
  }
};

inline MetricsReport compute_metrics(const std::vector<std::size_t>& truth,
                                     const std::vector<std::size_t>& pred,
                                     std::size_t classes) {
  if (truth.empty() || truth.size() != pred.size()) {
    throw DataError("metrics need equally sized, non-empty label vectors");
  }
  MetricsReport r;
  r.classes = classes;
  r.samples = truth.size();
  r.confusion.assign(classes * classes, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= classes || pred[i] >= classes) {
      throw DataError("label outside [0, K) at sample " + std::to_string(i));
    }
    ++r.confusion[truth[i] * classes + pred[i]];
  }

  std::size_t correct = 0;
  std::vector<double> pred_count(classes, 0.0), true_count(classes, 0.0);
  for (std::size_t k = 0; k < classes; ++k) {
    correct += r.cell(k, k);
    for (std::size_t j = 0; j < classes; ++j) {
      true_count[k] += static_cast<double>(r.cell(k, j));
      pred_count[k] += static_cast<double>(r.cell(j, k));
    }
  }
  const double total = static_cast<double>(r.samples);
  r.accuracy = static_cast<double>(correct) / total;

  r.precision.resize(classes);
  r.recall.resize(classes);
  double f1_sum = 0.0;
  for (std::size_t k = 0; k < classes; ++k) {
    const double tp = static_cast<double>(r.cell(k, k));
    r.precision[k] = pred_count[k] > 0.0 ? tp / pred_count[k] : 0.0;
    r.recall[k] = true_count[k] > 0.0 ? tp / true_count[k] : 0.0;
    const double denom = r.precision[k] + r.recall[k];
    f1_sum += denom > 0.0 ? 2.0 * r.precision[k] * r.recall[k] / denom : 0.0;
  }
  r.macro_f1 = f1_sum / static_cast<double>(classes);

  // multiclass MCC via the covariance form
  double pt = 0.0, pp = 0.0, tt = 0.0;
  for (std::size_t k = 0; k < classes; ++k) {
    pt += pred_count[k] * true_count[k];
    pp += pred_count[k] * pred_count[k];
    tt += true_count[k] * true_count[k];
  }
  const double num = static_cast<double>(correct) * total - pt;
  const double den = std::sqrt(total * total - pp) * std::sqrt(total * total - tt);
  r.mcc = den > 0.0 ? num / den : 0.0;
  return r;
}

}  // namespace disms
