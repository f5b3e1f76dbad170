// Command-line front end: dataset generation, training, evaluation,
// ablations, sweeps, and representation analysis.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "disms/disms.hpp"

namespace fs = std::filesystem;
using namespace disms;

namespace {

// exit codes, stable and documented in the README
constexpr int kOk = 0;
constexpr int kUsage = 2;
constexpr int kMissingState = 3;
constexpr int kDataError = 4;
constexpr int kDivergence = 5;

std::uint64_t default_seed() {
  if (const char* env = std::getenv("DMTS_SEED")) {
    try {
      return std::stoull(env);
    } catch (...) {
      throw ConfigError(std::string("DMTS_SEED is not an integer: ") + env);
    }
  }
  return 1;
}

ConfigMap defaults_map() {
  ConfigMap m;
  m["s"] = "3";
  m["window"] = "2";
  m["tau"] = "1";
  m["lambda1"] = "0.05";
  m["lambda2"] = "0.05";
  m["batch"] = "256";
  m["epochs"] = "100";
  m["lr"] = "0.005";
  m["channels"] = "16";
  m["kernel"] = "8";
  m["hidden"] = "32";
  m["normalize"] = "zscore";
  m["ablation"] = "full";
  return m;
}

TrainConfig train_config_from(const ConfigMap& cfg) {
  TrainConfig tc;
  tc.model.scales = config_get<std::size_t>(cfg, "s", 3);
  tc.model.window = config_get<std::size_t>(cfg, "window", 2);
  tc.model.temperature = config_get<double>(cfg, "tau", 1.0);
  tc.model.channels = config_get<std::size_t>(cfg, "channels", 16);
  tc.model.kernel = config_get<std::size_t>(cfg, "kernel", 8);
  tc.model.hidden = config_get<std::size_t>(cfg, "hidden", 32);
  tc.model.ablation =
      ablation_from_string(config_get<std::string>(cfg, "ablation", "full"));
  tc.lambda1 = config_get<double>(cfg, "lambda1", 0.05);
  tc.lambda2 = config_get<double>(cfg, "lambda2", 0.05);
  tc.batch_size = config_get<std::size_t>(cfg, "batch", 256);
  tc.epochs = config_get<std::size_t>(cfg, "epochs", 100);
  tc.learning_rate = config_get<double>(cfg, "lr", 5e-3);
  tc.seed = config_get<std::uint64_t>(cfg, "seed", default_seed());
  tc.validate();
  return tc;
}

void print_metrics(const std::string& tag, const MetricsReport& m) {
  std::cout << tag << "  ACC " << m.accuracy << "  macro-F1 " << m.macro_f1
            << "  MCC " << m.mcc << "\n";
}

void write_report(const MetricsReport& m, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os.precision(17);
  os << "samples = " << m.samples << "\n";
  os << "accuracy = " << m.accuracy << "\n";
  os << "macro_f1 = " << m.macro_f1 << "\n";
  os << "mcc = " << m.mcc << "\n";
  for (std::size_t k = 0; k < m.classes; ++k) {
    os << "precision." << k << " = " << m.precision[k] << "\n";
    os << "recall." << k << " = " << m.recall[k] << "\n";
  }
  os << "confusion =";
  for (std::size_t v : m.confusion) os << ' ' << v;
  os << "\n";
}

// Resolve file config + --set overrides into one map, defaults first.
ConfigMap resolve_config(const std::string& config_path,
                         const std::vector<std::string>& overrides,
                         const std::string& data, const std::string& ablation) {
  ConfigMap cfg = defaults_map();
  if (!config_path.empty()) {
    for (const auto& [k, v] : parse_config_file(config_path)) cfg[k] = v;
  }
  for (const auto& kv : overrides) apply_override(cfg, kv);
  if (!data.empty()) cfg["data"] = data;
  if (!ablation.empty()) cfg["ablation"] = ablation;
  if (!cfg.count("seed")) cfg["seed"] = std::to_string(default_seed());
  return cfg;
}

DatasetContainer load_and_normalize(const ConfigMap& cfg) {
  if (!cfg.count("data")) throw ConfigError("no dataset given (--data or data=...)");
  DatasetContainer ds = load_dataset(cfg.at("data"));
  const std::string mode = config_get<std::string>(cfg, "normalize", "zscore");
  if (ds.normalization == "none" && mode != "none") normalize_dataset(ds, mode);
  return ds;
}

int cmd_train(const ConfigMap& cfg, const std::string& out_dir) {
  DatasetContainer ds = load_and_normalize(cfg);
  TrainConfig tc = train_config_from(cfg);
  fs::create_directories(out_dir);
  const fs::path out(out_dir);

  RunManifest manifest;
  manifest.resolved = cfg;
  manifest.seed = tc.seed;
  manifest.checkpoint_best = out / "best.ckpt";
  manifest.checkpoint_final = out / "final.ckpt";
  manifest.log = out / "train_log.txt";
  manifest.report = out / "test_report.txt";
  manifest.write(out / "manifest.txt");  // before training starts

  TrainPaths paths;
  paths.log = manifest.log;
  paths.best_ckpt = manifest.checkpoint_best;
  paths.final_ckpt = manifest.checkpoint_final;
  TrainResult result = train(tc, ds, paths);

  result.restore_best();
  const MetricsReport test = evaluate(*result.model, ds.test, tc.batch_size);
  write_report(test, manifest.report);
  std::cout << "trained " << to_string(tc.model.ablation) << " for "
            << tc.epochs << " epochs; best val ACC " << result.best_val_acc
            << " at epoch " << result.best_epoch << "\n";
  print_metrics("test", test);
  return kOk;
}

// Reconstruct a trained model from a run directory's manifest.
struct LoadedRun {
  ConfigMap cfg;
  DatasetContainer ds;
  std::unique_ptr<Model> model;
};

LoadedRun load_run(const std::string& run_dir, const std::string& which_ckpt) {
  const fs::path dir(run_dir);
  const fs::path manifest_path = dir / "manifest.txt";
  if (!fs::exists(manifest_path)) {
    throw StateError("no manifest.txt in " + run_dir +
                     " (is this a training run directory?)");
  }
  ConfigMap raw = parse_config_file(manifest_path);
  LoadedRun run;
  for (const auto& [k, v] : raw) {
    if (k.rfind("config.", 0) == 0) run.cfg[k.substr(7)] = v;
  }
  run.ds = load_and_normalize(run.cfg);
  TrainConfig tc = train_config_from(run.cfg);
  ModelConfig mc = tc.model;
  mc.variables = run.ds.variables;
  mc.length = run.ds.length;
  mc.classes = run.ds.classes;
  run.model = std::make_unique<Model>(mc, tc.seed);
  const fs::path ckpt = dir / (which_ckpt + ".ckpt");
  if (!fs::exists(ckpt)) throw StateError("checkpoint not found: " + ckpt.string());
  load_checkpoint(run.model->params(), ckpt);
  return run;
}

int cmd_eval(const std::string& run_dir, const std::string& split,
             const std::string& which_ckpt, const std::string& report_path) {
  LoadedRun run = load_run(run_dir, which_ckpt);
  const MetricsReport m = evaluate(*run.model, run.ds.split(split));
  print_metrics(split, m);
  if (!report_path.empty()) write_report(m, report_path);
  return kOk;
}

int cmd_analyze(const std::string& run_dir, const std::string& split,
                const std::string& which_ckpt, const std::string& mode,
                bool pearson, const std::string& out_dir,
                bool with_dump) {
  LoadedRun run = load_run(run_dir, which_ckpt);
  fs::create_directories(out_dir);
  std::vector<std::string> modes;
  if (mode == "all") {
    modes = {"raw", "shared", "specific"};
  } else {
    modes = {mode};
  }
  for (const std::string& m : modes) {
    const RepKind kind = rep_kind_from_string(m);
    CorrelationMatrix cm =
        cross_scale_correlation(*run.model, run.ds.split(split), kind, pearson);
    const fs::path path = fs::path(out_dir) / (m + "_correlation.txt");
    export_matrix(cm, path);
    std::cout << m << " mean |off-diagonal| " << cm.mean_off_diagonal_abs()
              << " -> " << path.string() << "\n";
    if (with_dump) {
      const fs::path dump = fs::path(out_dir) / (m + "_vectors.bin");
      representation_dump(*run.model, run.ds.split(split), kind, dump);
    }
  }
  return kOk;
}

int cmd_sweep(const ConfigMap& base_cfg, const std::string& out_csv) {
  DatasetContainer ds = load_and_normalize(base_cfg);
  std::ofstream os(out_csv);
  if (!os) throw IoError("cannot open for writing: " + out_csv);
  os.precision(17);
  os << "cell,s,lambda,val_acc,val_f1,val_mcc,test_acc,test_f1,test_mcc\n";
  auto run_cell = [&](const std::string& cell, std::size_t s, double lambda) {
    ConfigMap cfg = base_cfg;
    cfg["s"] = std::to_string(s);
    std::ostringstream ls;
    ls.precision(17);
    ls << lambda;
    cfg["lambda1"] = ls.str();
    cfg["lambda2"] = ls.str();
    TrainConfig tc = train_config_from(cfg);
    AblationReport report = run_ablation(tc, ds);
    const MetricsReport val =
        evaluate(*report.run.model, ds.val.batch ? ds.val : ds.test);
    os << cell << ',' << s << ',' << lambda << ',' << val.accuracy << ','
       << val.macro_f1 << ',' << val.mcc << ',' << report.test.accuracy << ','
       << report.test.macro_f1 << ',' << report.test.mcc << '\n';
    std::cout << cell << " S=" << s << " lambda=" << lambda << " test ACC "
              << report.test.accuracy << "\n";
  };
  const std::size_t base_s = config_get<std::size_t>(base_cfg, "s", 3);
  const double base_lambda = config_get<double>(base_cfg, "lambda1", 0.05);
  const std::size_t feasible = max_feasible_depth(
      ds.length, config_get<std::size_t>(base_cfg, "window", 2));
  for (std::size_t s = 0; s <= 7; ++s) {
    if (s > feasible) {
      std::cout << "skipping S=" << s << " (infeasible for T=" << ds.length
                << ")\n";
      continue;
    }
    run_cell("s-grid", s, base_lambda);
  }
  for (double lambda : {0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0}) {
    run_cell("lambda-grid", base_s, lambda);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DisMS-TS: disentangled multi-scale time-series classification"};
  app.require_subcommand(1);

  // gen-synth
  auto* gen = app.add_subcommand("gen-synth", "generate a synthetic dataset");
  SynthSpec spec;
  std::string gen_out;
  gen->add_option("--n", spec.variables, "number of variables");
  gen->add_option("--t", spec.length, "series length");
  gen->add_option("--classes", spec.classes, "number of classes");
  gen->add_option("--per-class", spec.per_class, "samples per class");
  gen->add_option("--seed", spec.seed, "generator seed");
  gen->add_option("--noise", spec.noise, "gaussian noise sigma");
  gen->add_option("--label-mode", spec.label_mode, "both | trend | burst");
  gen->add_option("--trend-amp", spec.trend_amp, "trend amplitude");
  gen->add_option("--burst-amp", spec.burst_amp, "burst amplitude");
  gen->add_option("--drift-amp", spec.drift_amp, "per-sample drift amplitude");
  gen->add_option("--out", gen_out, "output directory")->required();

  // shared train-ish options
  std::string config_path, data_path, out_dir = "runs/run", ablation;
  std::vector<std::string> overrides;
  bool print_defaults = false;

  auto* tr = app.add_subcommand("train", "train a model");
  tr->add_option("--config", config_path, "key = value config file");
  tr->add_option("--data", data_path, "dataset manifest path");
  tr->add_option("--out", out_dir, "run output directory");
  tr->add_option("--set", overrides, "override config key (key=value)");
  tr->add_option("--ablation", ablation, "full | no-lmp | swf-mean");
  tr->add_flag("--print-defaults", print_defaults, "print defaults and exit");

  auto* ab = app.add_subcommand("ablate", "train an ablation variant");
  std::string ab_config, ab_data, ab_out = "runs/ablation", ab_variant;
  std::vector<std::string> ab_overrides;
  ab->add_option("--config", ab_config, "key = value config file");
  ab->add_option("--data", ab_data, "dataset manifest path");
  ab->add_option("--out", ab_out, "run output directory");
  ab->add_option("--set", ab_overrides, "override config key (key=value)");
  ab->add_option("--ablation", ab_variant, "no-lmp | swf-mean")->required();

  auto* ev = app.add_subcommand("eval", "evaluate a trained run");
  std::string ev_run, ev_split = "test", ev_ckpt = "best", ev_report;
  ev->add_option("--run", ev_run, "training run directory")->required();
  ev->add_option("--split", ev_split, "train | val | test");
  ev->add_option("--checkpoint", ev_ckpt, "best | final");
  ev->add_option("--report", ev_report, "write a metrics report file");

  auto* an = app.add_subcommand("analyze", "cross-scale correlation analysis");
  std::string an_run, an_split = "test", an_ckpt = "best", an_mode = "all",
              an_out = "analysis";
  bool an_pearson = false, an_dump = false;
  an->add_option("--run", an_run, "training run directory")->required();
  an->add_option("--split", an_split, "train | val | test");
  an->add_option("--checkpoint", an_ckpt, "best | final");
  an->add_option("--mode", an_mode, "raw | shared | specific | all");
  an->add_option("--out", an_out, "output directory");
  an->add_flag("--pearson", an_pearson, "Pearson instead of cosine");
  an->add_flag("--dump", an_dump, "also dump raw representation vectors");

  auto* sw = app.add_subcommand("sweep", "sequential S-grid and lambda-grid sweep");
  std::string sw_config, sw_data, sw_out = "sweep.csv";
  std::vector<std::string> sw_overrides;
  sw->add_option("--config", sw_config, "key = value config file");
  sw->add_option("--data", sw_data, "dataset manifest path");
  sw->add_option("--out", sw_out, "summary CSV path");
  sw->add_option("--set", sw_overrides, "override config key (key=value)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (gen->parsed()) {
      DatasetContainer ds = generate_synthetic(spec);
      const fs::path manifest = save_dataset(ds, gen_out);
      std::cout << "synthetic dataset: N=" << ds.variables << " T=" << ds.length
                << " K=" << ds.classes << " train=" << ds.train.batch
                << " val=" << ds.val.batch << " test=" << ds.test.batch
                << " seed=" << spec.seed << " -> " << manifest.string() << "\n";
      return kOk;
    }
    if (tr->parsed()) {
      if (print_defaults) {
        for (const auto& [k, v] : defaults_map())
          std::cout << k << " = " << v << "\n";
        return kOk;
      }
      return cmd_train(resolve_config(config_path, overrides, data_path, ablation),
                       out_dir);
    }
    if (ab->parsed()) {
      return cmd_train(
          resolve_config(ab_config, ab_overrides, ab_data, ab_variant), ab_out);
    }
    if (ev->parsed()) return cmd_eval(ev_run, ev_split, ev_ckpt, ev_report);
    if (an->parsed())
      return cmd_analyze(an_run, an_split, an_ckpt, an_mode, an_pearson, an_out,
                         an_dump);
    if (sw->parsed())
      return cmd_sweep(resolve_config(sw_config, sw_overrides, sw_data, ""),
                       sw_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const StateError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kMissingState;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDivergence;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kUsage;
}
