#include "summit/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>

#include "summit/bench.hpp"
#include "summit/checkpoint.hpp"
#include "summit/config.hpp"
#include "summit/error.hpp"
#include "summit/explain.hpp"
#include "summit/rng.hpp"
#include "summit/summarize.hpp"
#include "summit/synth.hpp"
#include "summit/train.hpp"

namespace summit {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

/// Dataset named by the flag, else by the config, else generated from the
/// config's synthetic section.
Dataset obtain_dataset(const RunConfig& cfg, const std::string& flag, std::ostream& out) {
  const std::string path = flag.empty() ? cfg.dataset : flag;
  if (!path.empty()) {
    Dataset ds = load_dataset(path);
    ds.validate();
    return ds;
  }
  out << "no dataset path given; generating " << cfg.synth.n_samples << " synthetic samples\n";
  return generate_synthetic(cfg.synth);
}

double prevalence(const Dataset& ds) {
  const auto y = ds.labels();
  if (y.empty()) return 0.0;
  return static_cast<double>(std::count(y.begin(), y.end(), 1)) / static_cast<double>(y.size());
}

struct Options {
  std::string config;
  std::string dataset;
  std::string out;
  std::string run_dir;
  std::string checkpoint;
  std::string sample;
  std::string rollout = "revised";
  std::string variant;
  std::string trace;
  std::string categorical = "mode";
  double window = 0.0;
  bool impute = false;
  long long max_epochs = -1;
  long long replicates = -1;
  double threshold = 0.5;
  std::vector<std::string> scenarios;
  bool all = false;
  bool list = false;
};

RunConfig config_with_overrides(const Options& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (o.config.empty()) cfg.finalize();
  if (!o.variant.empty()) cfg.pipeline.variant = parse_variant(o.variant);
  if (o.impute) cfg.pipeline.impute = true;
  if (o.max_epochs >= 0) cfg.train.max_epochs = static_cast<std::size_t>(o.max_epochs);
  if (o.replicates >= 0) cfg.bootstrap.replicates = static_cast<std::size_t>(o.replicates);
  if (!o.run_dir.empty()) cfg.run_dir = o.run_dir;
  return cfg;
}

int cmd_synth(const Options& o, std::ostream& out) {
  const RunConfig cfg = config_with_overrides(o);
  const std::string path = o.out.empty() ? cfg.dataset : o.out;
  if (path.empty()) throw ConfigError("synth: no output path (set \"dataset\" in the config or pass --out)");
  const Dataset ds = generate_synthetic(cfg.synth);
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  save_dataset(ds, path);
  out << "wrote " << ds.samples.size() << " samples to " << path << "\n";
  out << std::setprecision(4) << "missing rate " << raw_missing_rate(ds) << ", prevalence " << prevalence(ds) << "\n";
  return kExitOk;
}

int cmd_summarize(const Options& o, std::ostream& out) {
  RunConfig cfg = config_with_overrides(o);
  if (o.window > 0.0) cfg.pipeline.summarization.window = o.window;
  if (o.categorical == "last") {
    cfg.pipeline.summarization.categorical = CategoricalAggregator::Last;
  } else if (o.categorical != "mode") {
    throw ConfigError("--categorical must be mode or last");
  }
  if (o.out.empty()) throw ConfigError("summarize: --out is required");
  const Dataset ds = obtain_dataset(cfg, o.dataset, out);
  const auto matrices = summarize_all(ds, cfg.pipeline.summarization);
  export_summary_csv(ds, matrices, o.out);
  out << "wrote " << matrices.size() << " samples x " << (matrices.empty() ? 0 : matrices[0].windows)
      << " windows to " << o.out << "; summarized missing rate " << missing_rate(matrices) << "\n";
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  const RunConfig cfg = config_with_overrides(o);
  const Dataset ds = obtain_dataset(cfg, o.dataset, out);
  auto [train_ds, test_ds] = split_stratified(ds, cfg.test_fraction, cfg.split_seed());
  const auto r = train(cfg.pipeline, cfg.train, train_ds);

  const fs::path dir = cfg.run_dir;
  fs::create_directories(dir);
  save_checkpoint(r.checkpoint, (dir / "checkpoint.bin").string());
  write_history_csv(r.history, (dir / "history.csv").string());
  save_dataset(test_ds, (dir / "test.jsonl").string());
  std::vector<std::string> files = {"checkpoint.bin", "history.csv", "test.jsonl"};
  if (cfg.pipeline.variant == EvatVariant::Scane) {
    export_embeddings(embedding_table(r.checkpoint.params, ColumnLayout::from_schema(ds.schema)),
                      (dir / "embeddings.csv").string());
    files.emplace_back("embeddings.csv");
  }
  json manifest;
  manifest["command"] = "train";
  manifest["config"] = cfg.to_json();
  manifest["seeds"] = {{"root", cfg.seed}, {"train", cfg.train.seed}, {"test_split", cfg.split_seed()}};
  manifest["samples"] = {{"train", r.split.train.size()}, {"validation", r.split.test.size()},
                         {"test", test_ds.samples.size()}};
  manifest["best_epoch"] = r.history.best_epoch;
  manifest["best_val_auprc"] = r.history.best_auprc;
  manifest["stop_reason"] = r.history.stop_reason;
  manifest["evaluations"] = r.history.records.size();
  manifest["parameters"] = r.checkpoint.params.scalar_count();
  files.emplace_back("manifest.json");
  manifest["files"] = files;
  write_json(dir / "manifest.json", manifest);

  if (r.history.records.empty()) {
    out << "no validation evaluation performed; wrote the " << (cfg.train.max_epochs == 0 ? "initialized" : "final")
        << " checkpoint to " << (dir / "checkpoint.bin").string() << "\n";
  } else {
    out << std::setprecision(6) << "best validation AUPRC " << r.history.best_auprc << " at epoch "
        << r.history.best_epoch << " (" << r.history.stop_reason << ")\n";
  }
  return kExitOk;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  Dataset ds = load_dataset(o.dataset);
  ds.validate();
  BootstrapOptions opts;
  opts.n_boot = o.replicates >= 0 ? static_cast<std::size_t>(o.replicates) : 1000;
  opts.threshold = o.threshold;
  opts.seed = derive_seed(ck.seed, "bootstrap");
  const auto report = evaluate(ck, ds, opts);
  const json j = report.to_json();
  if (!o.out.empty()) write_json(o.out, j);
  out << j.dump(2) << "\n";
  return kExitOk;
}

int cmd_explain(const Options& o, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  Dataset ds = load_dataset(o.dataset);
  ds.validate();
  const auto kind = parse_rollout_kind(o.rollout);
  const auto e = explain_sample(ck, ds, o.sample, kind);
  const std::string prefix = o.out.empty() ? "importance_" + to_string(kind) : o.out;
  if (fs::path(prefix).has_parent_path()) fs::create_directories(fs::path(prefix).parent_path());
  export_importance(e.map, column_names(ck.schema), prefix + ".csv", prefix + ".svg");
  if (!o.trace.empty()) save_trace(e.trace, e.mask, o.trace);
  out << std::setprecision(6) << "sample " << o.sample << ": p = " << e.probability << "; wrote " << prefix
      << ".csv and " << prefix << ".svg\n";
  return kExitOk;
}

int cmd_ablate(const Options& o, std::ostream& out) {
  const RunConfig cfg = config_with_overrides(o);
  const Dataset ds = obtain_dataset(cfg, o.dataset, out);
  const auto result = run_ablation(cfg, ds);
  json j = result.to_json();
  j["config"] = cfg.to_json();
  const fs::path path = o.out.empty() ? fs::path(cfg.run_dir) / "ablation.json" : fs::path(o.out);
  write_json(path, j);
  out << std::left << std::setw(16) << "variant" << std::setw(10) << "imputed" << std::setw(12) << "val_auprc"
      << "test_auprc\n";
  out << std::setprecision(4) << std::fixed;
  for (const auto& r : result.rows) {
    out << std::setw(16) << r.variant << std::setw(10) << (r.impute ? "yes" : "no") << std::setw(12) << r.val_auprc
        << r.test_auprc << "\n";
  }
  out << "wrote " << path.string() << "\n";
  return kExitOk;
}

int cmd_sweep(const Options& o, std::ostream& out) {
  const RunConfig cfg = config_with_overrides(o);
  if (!cfg.sweep) throw ConfigError("sweep: the config has no \"sweep\" section");
  const Dataset ds = obtain_dataset(cfg, o.dataset, out);
  auto [train_ds, test_ds] = split_stratified(ds, cfg.test_fraction, cfg.split_seed());
  out << "sweeping " << cfg.sweep->size() << " configurations\n";
  const auto result = sweep(*cfg.sweep, cfg.pipeline, cfg.train, train_ds);
  json j = result.to_json();
  j["config"] = cfg.to_json();
  const fs::path path = o.out.empty() ? fs::path(cfg.run_dir) / "sweep.json" : fs::path(o.out);
  write_json(path, j);
  out << result.ranked.size() << " completed, " << result.skipped.size() << " skipped; wrote " << path.string()
      << "\n";
  return kExitOk;
}

int cmd_bench(const Options& o, std::ostream& out) {
  if (o.list) {
    for (const auto& s : scenario_registry()) out << s.name << "  " << s.description << "\n";
    return kExitOk;
  }
  std::vector<Scenario> chosen;
  if (o.all) {
    chosen = scenario_registry();
  } else {
    if (o.scenarios.empty()) throw ConfigError("bench: pass --scenario NAME (repeatable), --all or --list");
    for (const auto& n : o.scenarios) chosen.push_back(find_scenario(n));
  }
  const auto report = run_scenarios(chosen);
  const fs::path dir = o.out.empty() ? fs::path("bench") : fs::path(o.out);
  write_json(dir / "bench.json", report.to_json());
  write_text(dir / "bench.junit.xml", report.to_junit());
  for (const auto& r : report.scenarios) {
    out << (r.pass ? "PASS " : "FAIL ") << r.name << " (" << std::fixed << std::setprecision(1) << r.wall_seconds
        << " s)";
    if (!r.error.empty()) out << ": " << r.error;
    out << "\n";
  }
  return report.pass() ? kExitOk : kExitFailure;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Irregular time-series classification with masked value-as-token attention", "summit"};
  app.require_subcommand(1);
  Options o;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--config", o.config, "Run config (JSON)")->required();
  synth->add_option("--out", o.out, "Dataset path (overrides the config)");

  auto* summ = app.add_subcommand("summarize", "Export summarized windows as CSV");
  summ->add_option("--config", o.config, "Run config (JSON)");
  summ->add_option("--dataset", o.dataset, "Dataset path");
  summ->add_option("--window", o.window, "Window length p");
  summ->add_option("--categorical", o.categorical, "mode|last");
  summ->add_option("--out", o.out, "CSV path")->required();

  auto* tr = app.add_subcommand("train", "Train and write a run directory");
  tr->add_option("--config", o.config, "Run config (JSON)")->required();
  tr->add_option("--dataset", o.dataset, "Dataset path (overrides the config)");
  tr->add_option("--run-dir", o.run_dir, "Output directory (overrides the config)");
  tr->add_option("--variant", o.variant, "scane|index_concat|index_fusion|onehot_concat|onehot_fusion");
  tr->add_flag("--impute", o.impute, "Impute missing cells with the global mean/mode instead of masking");
  tr->add_option("--max-epochs", o.max_epochs, "Override train.max_epochs");

  auto* ev = app.add_subcommand("evaluate", "Score a dataset with a checkpoint");
  ev->add_option("--checkpoint", o.checkpoint, "Checkpoint path")->required();
  ev->add_option("--dataset", o.dataset, "Dataset path")->required();
  ev->add_option("--out", o.out, "Report path (JSON)");
  ev->add_option("--replicates", o.replicates, "Bootstrap replicates (default 1000)");
  ev->add_option("--threshold", o.threshold, "Accuracy threshold");

  auto* ex = app.add_subcommand("explain", "Rollout importance map for one sample");
  ex->add_option("--checkpoint", o.checkpoint, "Checkpoint path")->required();
  ex->add_option("--dataset", o.dataset, "Dataset path")->required();
  ex->add_option("--sample", o.sample, "Sample id")->required();
  ex->add_option("--variant", o.rollout, "original|revised");
  ex->add_option("--out", o.out, "Output prefix for .csv and .svg");
  ex->add_option("--trace", o.trace, "Also save the attention trace here");

  auto* ab = app.add_subcommand("ablate", "Compare embedding variants and masking against imputation");
  ab->add_option("--config", o.config, "Run config (JSON)")->required();
  ab->add_option("--dataset", o.dataset, "Dataset path (overrides the config)");
  ab->add_option("--max-epochs", o.max_epochs, "Override train.max_epochs");
  ab->add_option("--out", o.out, "Result path (JSON)");

  auto* sw = app.add_subcommand("sweep", "Grid search ranked by validation AUPRC");
  sw->add_option("--config", o.config, "Run config with a sweep section")->required();
  sw->add_option("--dataset", o.dataset, "Dataset path (overrides the config)");
  sw->add_option("--max-epochs", o.max_epochs, "Override train.max_epochs");
  sw->add_option("--out", o.out, "Result path (JSON)");

  auto* be = app.add_subcommand("bench", "Run canned scenarios");
  be->add_option("--scenario", o.scenarios, "Scenario name (repeatable)");
  be->add_flag("--all", o.all, "Run every scenario");
  be->add_flag("--list", o.list, "List scenarios");
  be->add_option("--out", o.out, "Directory for bench.json and bench.junit.xml");

  // CLI11 consumes arguments from the back, without the program name.
  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*synth) return cmd_synth(o, out);
    if (*summ) return cmd_summarize(o, out);
    if (*tr) return cmd_train(o, out);
    if (*ev) return cmd_evaluate(o, out);
    if (*ex) return cmd_explain(o, out);
    if (*ab) return cmd_ablate(o, out);
    if (*sw) return cmd_sweep(o, out);
    if (*be) return cmd_bench(o, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const ShapeError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitConfig;
}

}  // namespace summit
