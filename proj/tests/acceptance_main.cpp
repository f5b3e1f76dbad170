// End-to-end acceptance gate. Each criterion prints one PASS/FAIL line; the
// process exits non-zero if any required criterion fails. The HAR criterion
// only runs when DMTS_HAR_MANIFEST points at an exported dataset.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "disms/disms.hpp"

using namespace disms;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

bool report(int id, const std::string& what, bool ok, const std::string& note) {
  std::cout << "criterion " << id << " [" << (ok ? "PASS" : "FAIL") << "] "
            << what;
  if (!note.empty()) std::cout << " (" << note << ")";
  std::cout << std::endl;
  return ok;
}

void skip(int id, const std::string& what, const std::string& why) {
  std::cout << "criterion " << id << " [SKIP] " << what << " (" << why << ")"
            << std::endl;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

// --- 1: full-loss gradient check against central finite differences --------

bool check_gradients() {
  const auto t0 = Clock::now();
  ModelConfig mc;
  mc.variables = 2;
  mc.length = 16;
  mc.classes = 2;
  mc.scales = 1;
  mc.channels = 4;
  mc.hidden = 4;
  Model model(mc, 31);

  Rng rng = Rng::stream(31, 0xACC);
  SeriesBatch batch;
  batch.batch = 2;
  batch.variables = 2;
  batch.length = 16;
  batch.values.resize(2 * 2 * 16);
  for (double& v : batch.values) v = rng.uniform(-1.0, 1.0);
  batch.labels = {0, 1};

  auto loss_value = [&]() {
    ForwardResult fwd = model.forward(batch);
    LossBreakdown loss = model.loss(fwd, batch.labels, 0.05, 0.05);
    const double v = loss.total.item();
    model.tape().reset();
    return v;
  };

  ForwardResult fwd = model.forward(batch);
  LossBreakdown loss = model.loss(fwd, batch.labels, 0.05, 0.05);
  model.params().zero_grad();
  model.tape().backward(loss.total);
  std::vector<std::pair<std::string, std::vector<double>>> analytic;
  for (const auto& [name, t] : model.params()) analytic.emplace_back(name, t.grad());
  model.tape().reset();

  const double h = 1e-5;
  double worst = 0.0;
  std::string worst_name;
  std::size_t checked = 0;
  for (auto& [name, grad] : analytic) {
    auto& w = model.params().get(name).values();
    for (std::size_t i = 0; i < w.size(); ++i, ++checked) {
      const double saved = w[i];
      w[i] = saved + h;
      const double up = loss_value();
      w[i] = saved - h;
      const double down = loss_value();
      w[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double e = rel_err(grad[i], fd);
      if (e > worst) {
        worst = e;
        worst_name = name;
      }
    }
  }
  const double elapsed = seconds_since(t0);
  std::ostringstream note;
  note << checked << " parameters, max rel err " << worst << " at " << worst_name
       << ", " << elapsed << " s";
  return report(1, "full-loss gradients match finite differences",
                worst < 1e-4 && elapsed < 60.0, note.str());
}

// --- 2: disentangler identities -------------------------------------------

bool check_disentangler() {
  Rng rng(47);
  Tape tape;
  const std::size_t d = 8;
  ProjectorParams proj{tape.leaf({d, d}, disms::Tensor::zeros({d, d}).values()),
                       tape.leaf({d}, std::vector<double>(d, 0.0))};
  for (double& v : proj.weight.values()) v = rng.uniform(-1.0, 1.0);
  for (double& v : proj.bias.values()) v = rng.uniform(-1.0, 1.0);

  double worst_mask = 0.0, worst_rec = 0.0;
  std::size_t tested = 0;
  while (tested < 1000) {
    std::vector<double> vals(4 * d);
    for (double& v : vals) v = rng.uniform(-3.0, 3.0);
    Tensor f = Tensor::constant({4, d}, vals);
    DisentangledPair pair = disentangle(f, proj, 1.0);
    for (std::size_t i = 0; i < f.size(); ++i) {
      worst_mask = std::max(worst_mask,
                            std::abs(pair.mask_shared.values()[i] +
                                     pair.mask_specific.values()[i] - 1.0));
      worst_rec = std::max(worst_rec,
                           std::abs(pair.shared.values()[i] +
                                    pair.specific.values()[i] - f.values()[i]));
    }
    tested += 4;
    tape.reset();
  }
  std::ostringstream note;
  note << "max |M_sha+M_spe-1| " << worst_mask << ", max |F_sha+F_spe-F| "
       << worst_rec;
  return report(2, "disentangler complementarity and reconstruction",
                worst_mask < 1e-12 && worst_rec < 1e-12, note.str());
}

// --- 3: loss identities ----------------------------------------------------

bool check_loss_identities() {
  auto rep = [](std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor::constant({1, n}, std::move(v));
  };
  Tensor same = rep({0.4, -1.1, 2.0});
  const double sim_same = similarity_loss({same, same, same}).item();

  const double dis_orth =
      disparity_loss({rep({1, 0, 0}), rep({0, 1, 0}), rep({0, 0, 1})}).item();

  // S=2: pairwise cosines (1, 0, 0) -> (1/3)((1-1)^2 + 1 + 1) = 2/3
  const double sim_enum =
      similarity_loss({rep({1, 0}), rep({2, 0}), rep({0, 1})}).item();

  std::ostringstream note;
  note << "sim(identical) " << sim_same << ", dis(orthogonal) " << dis_orth
       << ", sim(1,0,0) " << sim_enum;
  return report(3, "similarity/disparity loss identities",
                std::abs(sim_same) < 1e-12 && std::abs(dis_orth) < 1e-12 &&
                    std::abs(sim_enum - 2.0 / 3.0) < 1e-12,
                note.str());
}

// --- 4: pyramid law --------------------------------------------------------

bool check_pyramid() {
  Rng rng(53);
  bool lengths_ok = true;
  double worst_mean = 0.0;
  for (int rep_i = 0; rep_i < 200; ++rep_i) {
    const std::size_t t = 8 + rng.index(249);  // 8 .. 256
    const std::size_t max_s = max_feasible_depth(t, 2);
    const std::size_t s = rng.index(max_s + 1);
    SeriesBatch batch;
    batch.batch = 2;
    batch.variables = 2;
    batch.length = t;
    batch.values.resize(2 * 2 * t);
    for (double& v : batch.values) v = rng.uniform(-2.0, 2.0);
    ScalePyramid p = build_pyramid(batch, s, 2);
    std::size_t expect = t;
    for (std::size_t level = 0; level <= s; ++level) {
      if (p.scales[level].length != expect) lengths_ok = false;
      expect /= 2;
    }
    if (t % (std::size_t{1} << s) == 0) {
      auto mean_of = [](const SeriesBatch& b) {
        double acc = 0.0;
        for (double v : b.values) acc += v;
        return acc / static_cast<double>(b.values.size());
      };
      const double base = mean_of(p.scales[0]);
      for (std::size_t level = 1; level <= s; ++level) {
        worst_mean =
            std::max(worst_mean, std::abs(mean_of(p.scales[level]) - base));
      }
    }
  }
  std::ostringstream note;
  note << "200 (T, S) pairs, worst mean drift " << worst_mean;
  return report(4, "average-pooling pyramid length law and mean preservation",
                lengths_ok && worst_mean < 1e-12, note.str());
}

// --- 5: metrics oracle -----------------------------------------------------

double oracle_mcc(const std::vector<std::size_t>& truth,
                  const std::vector<std::size_t>& pred, std::size_t k) {
  const std::size_t n = truth.size();
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      ma += truth[i] == c ? 1.0 : 0.0;
      mb += pred[i] == c ? 1.0 : 0.0;
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double av = (truth[i] == c ? 1.0 : 0.0) - ma;
      const double bv = (pred[i] == c ? 1.0 : 0.0) - mb;
      cov += av * bv;
      va += av * av;
      vb += bv * bv;
    }
  }
  const double den = std::sqrt(va * vb);
  return den > 0.0 ? cov / den : 0.0;
}

bool check_metrics() {
  Rng rng(59);
  double worst = 0.0;
  for (int rep_i = 0; rep_i < 50; ++rep_i) {
    const std::size_t k = 2 + rng.index(4);
    const std::size_t n = 30 + rng.index(70);
    std::vector<std::size_t> truth(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = rng.index(k);
      pred[i] = rng.uniform() < 0.55 ? truth[i] : rng.index(k);
    }
    MetricsReport r = compute_metrics(truth, pred, k);
    worst = std::max(worst, std::abs(r.mcc - oracle_mcc(truth, pred, k)));

    double f1_sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t c = 0; c < k; ++c) {
      double tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (pred[i] == c && truth[i] == c) ++tp;
        else if (pred[i] == c) ++fp;
        else if (truth[i] == c) ++fn;
      }
      f1_sum += (2 * tp + fp + fn) > 0 ? 2 * tp / (2 * tp + fp + fn) : 0.0;
    }
    for (std::size_t i = 0; i < n; ++i)
      if (truth[i] == pred[i]) ++hits;
    worst = std::max(worst, std::abs(r.macro_f1 - f1_sum / k));
    worst = std::max(
        worst, std::abs(r.accuracy - static_cast<double>(hits) /
                                         static_cast<double>(n)));
  }

  std::vector<std::size_t> y{0, 1, 2, 0, 1, 2};
  const MetricsReport perfect = compute_metrics(y, y, 3);
  const MetricsReport chance =
      compute_metrics({0, 1, 0, 1}, {0, 0, 0, 0}, 2);
  std::ostringstream note;
  note << "50 random confusions, worst abs err " << worst;
  return report(5, "metrics agree with definitional oracles",
                worst < 1e-12 && perfect.accuracy == 1.0 &&
                    std::abs(perfect.mcc - 1.0) < 1e-12 && chance.mcc == 0.0,
                note.str());
}

// --- 6 & 7: synthetic disentanglement experiment ---------------------------

struct SynthOutcome {
  double full_mean = 0.0;
  double swf_mean = 0.0;
  CorrelationMatrix shared, specific;
  double elapsed = 0.0;
};

SynthOutcome run_synthetic_experiment() {
  const auto t0 = Clock::now();
  SynthSpec spec;  // N=4, T=128, K=3, 200 per class
  spec.seed = 1;
  spec.noise = 0.3;
  spec.drift_amp = 6.0;  // dominant scale-shared confound; the redundancy source
  DatasetContainer ds = generate_synthetic(spec);
  normalize_dataset(ds, "zscore");

  TrainConfig cfg;
  cfg.model.scales = 3;
  cfg.model.temperature = 1.0;
  cfg.lambda1 = 0.05;
  cfg.lambda2 = 0.05;
  cfg.epochs = 30;
  cfg.batch_size = 64;
  cfg.learning_rate = 5e-3;

  SynthOutcome out;
  for (std::uint64_t seed : {1, 2, 3}) {
    cfg.seed = seed;
    cfg.model.ablation = Ablation::kFull;
    AblationReport full = run_ablation(cfg, ds);
    out.full_mean += full.test.accuracy / 3.0;
    cfg.model.ablation = Ablation::kSwfMean;
    AblationReport swf = run_ablation(cfg, ds);
    out.swf_mean += swf.test.accuracy / 3.0;
    std::cout << "  seed " << seed << ": full " << full.test.accuracy
              << ", swf-mean " << swf.test.accuracy << std::endl;
  }
  out.elapsed = seconds_since(t0);

  // Correlation-pattern run: same dataset and pinned lambda/tau/S, but the
  // default 100 epochs so the regularizers converge. Analyzed on the final
  // parameters.
  cfg.model.ablation = Ablation::kFull;
  cfg.seed = 1;
  cfg.epochs = 100;
  TrainResult analysis = train(cfg, ds);
  out.shared =
      cross_scale_correlation(*analysis.model, ds.test, RepKind::kShared);
  out.specific =
      cross_scale_correlation(*analysis.model, ds.test, RepKind::kSpecific);
  return out;
}

bool check_experiment(const SynthOutcome& out) {
  const double margin = out.full_mean - out.swf_mean;
  std::ostringstream note;
  note << "full " << out.full_mean << ", swf-mean " << out.swf_mean
       << ", margin " << margin * 100.0 << " points, " << out.elapsed << " s";
  return report(6, "full model beats swf-mean by >= 3 points on 3 seeds",
                margin >= 0.03 && out.elapsed < 900.0, note.str());
}

bool check_correlation(const SynthOutcome& out) {
  auto structural_ok = [](const CorrelationMatrix& m) {
    for (std::size_t i = 0; i < m.scales; ++i) {
      if (std::abs(m.at(i, i) - 1.0) > 1e-12) return false;
      for (std::size_t j = 0; j < m.scales; ++j)
        if (m.at(i, j) != m.at(j, i)) return false;
    }
    return true;
  };
  const double shared_mean = out.shared.mean_off_diagonal();
  const double specific_mean = out.specific.mean_off_diagonal_abs();
  std::ostringstream note;
  note << "shared mean off-diag " << shared_mean << ", specific mean |off-diag| "
       << specific_mean;
  return report(7, "cross-scale correlation pattern of the trained run",
                structural_ok(out.shared) && structural_ok(out.specific) &&
                    shared_mean > 0.9 && specific_mean < 0.2,
                note.str());
}

// --- 8: determinism --------------------------------------------------------

bool check_determinism() {
  SynthSpec spec;
  spec.variables = 2;
  spec.length = 32;
  spec.classes = 2;
  spec.per_class = 20;
  spec.seed = 5;
  DatasetContainer ds = generate_synthetic(spec);

  TrainConfig cfg;
  cfg.model.scales = 1;
  cfg.model.channels = 4;
  cfg.model.hidden = 6;
  cfg.batch_size = 16;
  cfg.epochs = 3;
  cfg.seed = 11;

  const fs::path dir = fs::temp_directory_path() / "disms_acceptance_det";
  fs::create_directories(dir);
  auto run_once = [&](const std::string& tag) {
    TrainPaths paths;
    paths.log = dir / (tag + ".log");
    paths.best_ckpt = dir / (tag + ".best.ckpt");
    paths.final_ckpt = dir / (tag + ".final.ckpt");
    train(cfg, ds, paths);
  };
  run_once("a");
  run_once("b");
  const bool ok = slurp(dir / "a.log") == slurp(dir / "b.log") &&
                  slurp(dir / "a.best.ckpt") == slurp(dir / "b.best.ckpt") &&
                  slurp(dir / "a.final.ckpt") == slurp(dir / "b.final.ckpt") &&
                  !slurp(dir / "a.log").empty();
  return report(8, "identical config and seed give byte-identical artifacts", ok,
                "");
}

// --- 9 (optional): HAR -----------------------------------------------------

bool check_har(const char* manifest) {
  DatasetContainer ds = load_dataset(manifest);
  normalize_dataset(ds, "zscore");
  TrainConfig cfg;  // defaults: batch 256, 100 epochs, lr 5e-3
  cfg.model.scales = 3;
  cfg.seed = 1;
  AblationReport result = run_ablation(cfg, ds);
  std::ostringstream note;
  note << "test accuracy " << result.test.accuracy;
  return report(9, "HAR accuracy >= 0.90 with default config",
                result.test.accuracy >= 0.90, note.str());
}

}  // namespace

int main() {
  std::cout.precision(10);
  bool ok = true;
  try {
    ok &= check_gradients();
    ok &= check_disentangler();
    ok &= check_loss_identities();
    ok &= check_pyramid();
    ok &= check_metrics();
    const SynthOutcome outcome = run_synthetic_experiment();
    ok &= check_experiment(outcome);
    ok &= check_correlation(outcome);
    ok &= check_determinism();
    if (const char* manifest = std::getenv("DMTS_HAR_MANIFEST")) {
      ok &= check_har(manifest);
    } else {
      skip(9, "HAR accuracy >= 0.90", "set DMTS_HAR_MANIFEST to enable");
    }
  } catch (const std::exception& e) {
    std::cout << "acceptance aborted: " << e.what() << std::endl;
    return 1;
  }
  std::cout << (ok ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL") << std::endl;
  return ok ? 0 : 1;
}
