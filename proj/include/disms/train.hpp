#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "disms/data.hpp"
#include "disms/error.hpp"
#include "disms/metrics.hpp"
#include "disms/model.hpp"
#include "disms/optim.hpp"

namespace disms {

struct TrainConfig {
  ModelConfig model;
  double lambda1 = 0.05;
  double lambda2 = 0.05;
  std::size_t batch_size = 256;
  std::size_t epochs = 100;
  double learning_rate = 5e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
    if (lambda1 < 0.0 || lambda2 < 0.0)
      throw ConfigError("lambda weights must be non-negative");
  }
};

struct EpochLog {
  std::size_t epoch = 0;
  double class_loss = 0.0, sim_loss = 0.0, dis_loss = 0.0, total_loss = 0.0;
  double train_acc = 0.0, train_f1 = 0.0, train_mcc = 0.0;
  double val_acc = 0.0, val_f1 = 0.0, val_mcc = 0.0;
};

struct TrainPaths {
  std::filesystem::path log;         // per-epoch structured text rows
  std::filesystem::path best_ckpt;   // best-validation checkpoint
  std::filesystem::path final_ckpt;  // parameters after the last epoch
};

struct TrainResult {
  std::unique_ptr<Model> model;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_acc = -1.0;
  std::map<std::string, std::vector<double>> best_values;

  // Swap the best-validation parameter values back into the model.
  void restore_best() {
    for (auto& [name, t] : model->params()) t.values() = best_values.at(name);
  }
};

// Mini-batch evaluation; the tape is reset after every batch so evaluation
// leaves no gradient state behind.
inline MetricsReport evaluate(Model& model, const SeriesBatch& split,
                              std::size_t batch_size = 256) {
  if (split.batch == 0) throw DataError("evaluate: empty split");
  std::vector<std::size_t> pred(split.batch);
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
    const Tensor& logits = fwd.logits;
    const std::size_t k = logits.shape()[1];
    for (std::size_t b = 0; b < chunk.batch; ++b) {
      std::size_t arg = 0;
      for (std::size_t j = 1; j < k; ++j)
        if (logits.at(b, j) > logits.at(b, arg)) arg = j;
      pred[start + b] = arg;
    }
    model.tape().reset();
  }
  return compute_metrics(split.labels, pred, model.config().classes);
}

namespace detail {

inline SeriesBatch gather_samples(const SeriesBatch& src,
                                  const std::vector<std::size_t>& idxs) {
  SeriesBatch out;
  out.batch = idxs.size();
  out.variables = src.variables;
  out.length = src.length;
  const std::size_t per_sample = src.variables * src.length;
  out.values.resize(idxs.size() * per_sample);
  out.labels.resize(idxs.size());
  for (std::size_t i = 0; i < idxs.size(); ++i) {
    std::copy_n(src.values.begin() + idxs[i] * per_sample, per_sample,
                out.values.begin() + i * per_sample);
    out.labels[i] = src.labels[idxs[i]];
  }
  return out;
}

inline std::string format_log_row(const EpochLog& e) {
  std::ostringstream os;
  os.precision(17);
  os << e.epoch << ' ' << e.class_loss << ' ' << e.sim_loss << ' '
     << e.dis_loss << ' ' << e.total_loss << ' ' << e.train_acc << ' '
     << e.train_f1 << ' ' << e.train_mcc << ' ' << e.val_acc << ' ' << e.val_f1
     << ' ' << e.val_mcc;
  return os.str();
}

}  // namespace detail

// Mini-batch training: pyramid -> per-scale encoding -> disentanglement ->
// prediction -> three-term loss -> optimizer update, deterministic given the
// seed (fixed init, fixed per-epoch shuffles).
inline TrainResult train(const TrainConfig& config, const DatasetContainer& ds,
                         const TrainPaths& paths = {}) {
  config.validate();
  ModelConfig mc = config.model;
  mc.variables = ds.variables;
  mc.length = ds.length;
  mc.classes = ds.classes;

  TrainResult result;
  result.model = std::make_unique<Model>(mc, config.seed);
  Model& model = *result.model;
  Adam optimizer(config.learning_rate, config.adam_beta1, config.adam_beta2,
                 config.adam_eps);

  // Datasets without a validation split donate the last 20% of train,
  // chosen by a permutation that does not depend on the run seed.
  SeriesBatch train_split = ds.train;
  SeriesBatch val_split = ds.val;
  if (val_split.batch == 0) {
    std::vector<std::size_t> order(ds.train.batch);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng perm_rng = Rng::stream(0xD15, 0xA1);
    perm_rng.shuffle(order);
    const std::size_t n_val = std::max<std::size_t>(1, order.size() / 5);
    std::vector<std::size_t> train_idx(order.begin(), order.end() - n_val);
    std::vector<std::size_t> val_idx(order.end() - n_val, order.end());
    train_split = detail::gather_samples(ds.train, train_idx);
    val_split = detail::gather_samples(ds.train, val_idx);
  }

  std::ofstream log_os;
  if (!paths.log.empty()) {
    log_os.open(paths.log);
    if (!log_os) throw IoError("cannot open log: " + paths.log.string());
    log_os << "# epoch class_loss sim_loss dis_loss total_loss "
              "train_acc train_f1 train_mcc val_acc val_f1 val_mcc\n";
  }

  std::vector<std::size_t> order(train_split.batch);
  std::size_t step = 0;
  LossBreakdown last_finite;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng = Rng::stream(config.seed, 0xE000 + epoch);
    shuffle_rng.shuffle(order);

    double sum_class = 0.0, sum_sim = 0.0, sum_dis = 0.0, sum_total = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size();
         start += config.batch_size) {
      const std::size_t stop =
          std::min(order.size(), start + config.batch_size);
      std::vector<std::size_t> idxs(order.begin() + start,
                                    order.begin() + stop);
      SeriesBatch batch = detail::gather_samples(train_split, idxs);
      ++step;
      ForwardResult fwd = model.forward(batch);
      LossBreakdown loss =
          model.loss(fwd, batch.labels, config.lambda1, config.lambda2);
      if (!std::isfinite(loss.total.item())) {
        std::ostringstream os;
        os << "non-finite loss at step " << step << "; last finite breakdown:"
           << " class=" << (last_finite.class_loss.size() ? last_finite.class_loss.item() : 0.0)
           << " sim=" << (last_finite.sim_loss.size() ? last_finite.sim_loss.item() : 0.0)
           << " dis=" << (last_finite.dis_loss.size() ? last_finite.dis_loss.item() : 0.0);
        throw DivergenceError(os.str());
      }
      last_finite = loss;
      model.params().zero_grad();
      model.tape().backward(loss.total);
      optimizer.step(model.params());
      model.tape().reset();

      const double w = static_cast<double>(batch.batch);
      sum_class += loss.class_loss.item() * w;
      sum_sim += loss.sim_loss.item() * w;
      sum_dis += loss.dis_loss.item() * w;
      sum_total += loss.total.item() * w;
      seen += batch.batch;
    }

    EpochLog row;
    row.epoch = epoch;
    row.class_loss = sum_class / static_cast<double>(seen);
    row.sim_loss = sum_sim / static_cast<double>(seen);
    row.dis_loss = sum_dis / static_cast<double>(seen);
    row.total_loss = sum_total / static_cast<double>(seen);
    const MetricsReport train_m =
        evaluate(model, train_split, config.batch_size);
    const MetricsReport val_m = evaluate(model, val_split, config.batch_size);
    row.train_acc = train_m.accuracy;
    row.train_f1 = train_m.macro_f1;
    row.train_mcc = train_m.mcc;
    row.val_acc = val_m.accuracy;
    row.val_f1 = val_m.macro_f1;
    row.val_mcc = val_m.mcc;
    result.log.push_back(row);
    if (log_os) log_os << detail::format_log_row(row) << '\n';

    if (val_m.accuracy > result.best_val_acc) {
      result.best_val_acc = val_m.accuracy;
      result.best_epoch = epoch;
      result.best_values.clear();
      for (const auto& [name, t] : model.params())
        result.best_values[name] = t.values();
      if (!paths.best_ckpt.empty()) save_checkpoint(model.params(), paths.best_ckpt);
    }
  }
  if (!paths.final_ckpt.empty()) save_checkpoint(model.params(), paths.final_ckpt);
  return result;
}

// Trains the requested ablation variant and reports test metrics with the
// best-validation parameters.
struct AblationReport {
  TrainResult run;
  MetricsReport test;
};

inline AblationReport run_ablation(const TrainConfig& config,
                                   const DatasetContainer& ds,
                                   const TrainPaths& paths = {}) {
  AblationReport out;
  out.run = train(config, ds, paths);
  out.run.restore_best();
  out.test = evaluate(*out.run.model, ds.test, config.batch_size);
  return out;
}

}  // namespace disms
