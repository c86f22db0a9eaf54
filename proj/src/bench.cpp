#include "summit/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "summit/error.hpp"
#include "summit/explain.hpp"
#include "summit/rng.hpp"

namespace summit {

using nlohmann::json;

namespace {

bool check(const Predicate& p, double v) {
  switch (p.cmp) {
    case Predicate::Cmp::Gt: return v > p.bound;
    case Predicate::Cmp::Ge: return v >= p.bound;
    case Predicate::Cmp::Le: return v <= p.bound;
    case Predicate::Cmp::Eq: return v == p.bound;
  }
  return false;
}

const char* cmp_name(Predicate::Cmp c) {
  switch (c) {
    case Predicate::Cmp::Gt: return ">";
    case Predicate::Cmp::Ge: return ">=";
    case Predicate::Cmp::Le: return "<=";
    case Predicate::Cmp::Eq: return "==";
  }
  return "?";
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string split_digest(const Dataset& test, const SplitIndices& val_split) {
  std::uint64_t h = derive_seed(0, "split-digest");
  for (const auto& s : test.samples) h = derive_seed(h, s.id);
  for (auto i : val_split.test) h = derive_seed(h, static_cast<std::uint64_t>(i));
  return hex64(h);
}

// ---- masking exactness --------------------------------------------------------

FeatureSchema small_schema() {
  FeatureSchema s;
  for (int j = 0; j < 3; ++j) s.features.push_back({"num" + std::to_string(j), FeatureKind::Numerical, {}});
  s.features.push_back({"cat0", FeatureKind::Categorical, {"a", "b", "c"}});
  return s;
}

SummaryMatrix random_input(const FeatureSchema& schema, std::size_t windows, double miss, Rng& rng) {
  const std::size_t cols = schema.size() + 1;
  SummaryMatrix sm(windows, cols);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z(0.0, 1.0);
  for (std::size_t i = 0; i < windows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      if (j + 1 == cols) {
        sm.value(i, j) = std::floor(3.0 * u(rng));
        sm.mask[i * cols + j] = 1;
        continue;
      }
      if (u(rng) < miss) continue;
      sm.mask[i * cols + j] = 1;
      sm.value(i, j) = schema.features[j].kind == FeatureKind::Categorical ? std::floor(3.0 * u(rng)) : z(rng);
    }
  }
  return sm;
}

std::map<std::string, double> masking_values(const Scenario& s, json& details) {
  const FeatureSchema schema = small_schema();
  ModelConfig cfg{8, 2, 16, 2, 2};
  double col_max = 0.0, row_err = 0.0;
  std::size_t mismatches = 0, inputs = 0;
  for (std::size_t k = 0; k < 100; ++k) {
    Rng rng(derive_seed(s.seed, k));
    const auto variant = kAllVariants[k % 5];
    const Architecture arch = make_architecture(cfg, schema, 3, variant);
    const auto params = init_params<double>(arch, derive_seed(s.seed, "params-" + std::to_string(k)));
    SummaryMatrix sm = random_input(schema, 3, 0.5, rng);
    AttentionTrace trace;
    const double p = predict(params, arch, sm, &trace);
    const auto& w1 = trace.weights[0];
    for (std::size_t key = 0; key < sm.tokens(); ++key) {
      if (sm.mask[key]) continue;
      for (std::size_t q = 0; q < sm.tokens(); ++q) col_max = std::max(col_max, std::abs(w1(q, key)));
    }
    for (const auto& w : trace.weights) {
      for (std::size_t q = 0; q < w.rows(); ++q) {
        double sum = 0.0;
        for (std::size_t c = 0; c < w.cols(); ++c) sum += w(q, c);
        row_err = std::max(row_err, std::abs(sum - 1.0));
      }
    }
    std::uniform_real_distribution<double> big(-1e6, 1e6);
    for (std::size_t cell = 0; cell < sm.tokens(); ++cell) {
      if (!sm.mask[cell]) sm.values[cell] = big(rng);
    }
    if (predict(params, arch, sm) != p) ++mismatches;
    ++inputs;
  }
  details["inputs"] = inputs;
  return {{"masked_column_max", col_max}, {"perturbation_mismatches", static_cast<double>(mismatches)},
          {"row_sum_error", row_err}};
}

// ---- rollout divergence --------------------------------------------------------

Tensor<double> random_stochastic(std::size_t L, std::span<const std::uint8_t> key_mask, Rng& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Tensor<double> w = Tensor<double>::matrix(L, L);
  for (std::size_t i = 0; i < L; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < L; ++j) {
      if (!key_mask.empty() && !key_mask[j]) continue;
      w(i, j) = u(rng);
      sum += w(i, j);
    }
    for (std::size_t j = 0; j < L; ++j) w(i, j) /= sum;
  }
  return w;
}

std::map<std::string, double> rollout_values(const Scenario& s, json& details) {
  const std::size_t windows = 4, columns = 6, L = windows * columns;
  double identity_diff = 0.0, masked_col = 0.0;
  std::size_t divergent = 0, traces = 0;
  json same = json::array();
  for (std::size_t k = 0; k < 50; ++k) {
    Rng rng(derive_seed(s.seed, k));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::uint8_t> mask(L, 1);
    std::size_t masked = 0;
    for (auto& m : mask) {
      if (u(rng) < 0.4) {
        m = 0;
        ++masked;
      }
    }
    if (masked * 10 < L * 3 || masked == L) continue;
    AttentionTrace trace;
    trace.weights.push_back(random_stochastic(L, mask, rng));
    trace.weights.push_back(random_stochastic(L, {}, rng));
    const auto orig = importance_map(rollout(trace), windows, columns);
    const auto rev_r = revised_rollout(trace, mask);
    const auto rev = importance_map(rev_r, windows, columns);
    for (std::size_t j = 0; j < L; ++j) {
      if (mask[j]) continue;
      for (std::size_t i = 0; i < L; ++i) masked_col = std::max(masked_col, std::abs(rev_r.matrix(i, j)));
    }
    if (orig.rank != rev.rank) {
      ++divergent;
    } else {
      same.push_back(k);
    }
    ++traces;

    AttentionTrace full;
    const std::vector<std::uint8_t> ones(L, 1);
    full.weights.push_back(random_stochastic(L, {}, rng));
    full.weights.push_back(random_stochastic(L, {}, rng));
    const auto a = rollout(full).matrix;
    const auto b = revised_rollout(full, ones).matrix;
    for (std::size_t i = 0; i < a.size(); ++i) identity_diff = std::max(identity_diff, std::abs(a[i] - b[i]));
  }
  details["traces"] = traces;
  details["identical_rank_traces"] = std::move(same);
  return {{"fully_observed_max_diff", identity_diff},
          {"revised_masked_column_max", masked_col},
          {"divergent_fraction", traces ? static_cast<double>(divergent) / static_cast<double>(traces) : 0.0}};
}

// ---- paired comparisons ----------------------------------------------------------

RunConfig config_of(const Scenario& s) {
  RunConfig c;
  c.seed = s.seed;
  c.synth = s.synth;
  c.pipeline = s.pipeline;
  c.train = s.train;
  c.test_fraction = s.test_fraction;
  c.bootstrap.replicates = 0;
  return c;
}

std::map<std::string, double> ablation_values(const Scenario& s, json& details) {
  const RunConfig c = config_of(s);
  const auto result = run_ablation(c, generate_synthetic(c.synth));
  details["ablation"] = result.to_json();
  std::map<std::string, double> v;
  double scane = 0.0, imputed = 0.0;
  for (const auto& r : result.rows) {
    if (r.variant == "scane" && !r.impute) scane = r.test_auprc;
    if (r.impute) imputed = r.test_auprc;
  }
  for (const auto& r : result.rows) {
    if (!r.impute && r.variant != "scane") v["scane_minus_" + r.variant] = scane - r.test_auprc;
    v[(r.impute ? "imputed_" : "") + r.variant + "_test_auprc"] = r.test_auprc;
  }
  v["masked_minus_imputed"] = scane - imputed;
  return v;
}

Scenario base_scenario(const std::string& name, const std::string& description, std::size_t samples,
                       std::size_t epochs) {
  RunConfig c = canned_config(7);
  c.synth.n_samples = samples;
  c.train.max_epochs = epochs;
  c.finalize();
  Scenario s = scenario_from_config(name, c);
  s.description = description;
  return s;
}

std::vector<Scenario> build_registry() {
  std::vector<Scenario> out;
  {
    Scenario s = base_scenario("sanity-learnable", "4000-sample pipeline beats twice the prevalence", 4000, 20);
    s.expected = {{"test_auprc", Predicate::Cmp::Gt, 2.0 * s.synth.prevalence, false},
                  {"val_auprc", Predicate::Cmp::Gt, 2.0 * s.synth.prevalence, false}};
    out.push_back(std::move(s));
  }
  {
    Scenario s;
    s.name = "masking-exactness";
    s.description = "masked keys get zero attention; masked values never reach the output";
    s.run = masking_values;
    s.expected = {{"masked_column_max", Predicate::Cmp::Le, 1e-12, false},
                  {"perturbation_mismatches", Predicate::Cmp::Eq, 0.0, false},
                  {"row_sum_error", Predicate::Cmp::Le, 1e-5, false}};
    out.push_back(std::move(s));
  }
  {
    Scenario s;
    s.name = "rollout-divergence";
    s.description = "revised and original rollout agree when fully observed and rank differently under masking";
    s.run = rollout_values;
    s.expected = {{"fully_observed_max_diff", Predicate::Cmp::Eq, 0.0, false},
                  {"revised_masked_column_max", Predicate::Cmp::Eq, 0.0, false},
                  {"divergent_fraction", Predicate::Cmp::Gt, 0.0, true}};
    out.push_back(std::move(s));
  }
  {
    Scenario s = base_scenario("embedding-ablation", "SCANE against the naive variants and against imputation, one seed",
                               3000, 15);
    s.run = ablation_values;
    for (auto v : kAllVariants) {
      if (v != EvatVariant::Scane) s.expected.push_back({"scane_minus_" + to_string(v), Predicate::Cmp::Ge, 0.0, true});
    }
    s.expected.push_back({"masked_minus_imputed", Predicate::Cmp::Ge, 0.0, true});
    out.push_back(std::move(s));
  }
  {
    Scenario s = canned_scenario();
    s.expected = {{"test_auprc", Predicate::Cmp::Ge, 0.40, false}};
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

RunConfig canned_config(std::uint64_t seed) {
  RunConfig c;
  c.seed = seed;
  c.synth.n_samples = 10000;
  c.synth.n_numerical = 4;
  c.synth.n_categorical = 1;
  c.synth.categories_per_feature = 3;
  c.synth.missing_rate = 0.75;
  c.synth.observation_window = 48.0;
  c.synth.mean_events = 12.0;
  c.synth.prevalence = 0.1;
  c.synth.label_noise = 0.05;
  c.pipeline.summarization.window = 8.0;
  c.pipeline.model = ModelConfig{16, 2, 32, 1, 2};
  c.train.learning_rate = 3e-3;
  c.train.batch_size = 256;
  c.train.max_epochs = 50;
  c.train.eval_every = 5;
  c.train.patience = 30;
  c.finalize();
  return c;
}

Scenario scenario_from_config(const std::string& name, const RunConfig& cfg) {
  Scenario s;
  s.name = name;
  s.seed = cfg.seed;
  s.synth = cfg.synth;
  s.pipeline = cfg.pipeline;
  s.train = cfg.train;
  s.test_fraction = cfg.test_fraction;
  s.run = pipeline_values;
  return s;
}

Scenario canned_scenario() {
  Scenario s = scenario_from_config("canned-learnable", canned_config(7));
  s.description = "10,000 samples, prevalence 0.1, missing rate 0.75, seed 7";
  return s;
}

std::map<std::string, double> pipeline_values(const Scenario& s, json& details) {
  const RunConfig c = config_of(s);
  const Dataset ds = generate_synthetic(c.synth);
  auto [train_ds, test_ds] = split_stratified(ds, c.test_fraction, c.split_seed());
  const auto r = train(c.pipeline, c.train, train_ds);
  BootstrapOptions opts;
  opts.n_boot = 0;
  const auto report = evaluate(r.checkpoint, test_ds, opts, c.train.threads);
  details["best_epoch"] = r.history.best_epoch;
  details["stop_reason"] = r.history.stop_reason;
  details["evaluations"] = r.history.records.size();
  return {{"test_auprc", report.metrics.at("auprc").point},
          {"test_auroc", report.metrics.at("auroc").point},
          {"val_auprc", r.history.best_auprc},
          {"prevalence", c.synth.prevalence}};
}

json AblationResult::to_json() const {
  json j;
  j["seed"] = seed;
  j["rows"] = json::array();
  for (const auto& r : rows) {
    j["rows"].push_back({{"variant", r.variant},
                         {"impute", r.impute},
                         {"val_auprc", r.val_auprc},
                         {"test_auprc", r.test_auprc},
                         {"test_auroc", r.test_auroc},
                         {"best_epoch", r.best_epoch},
                         {"split_digest", r.split_digest}});
  }
  return j;
}

AblationResult run_ablation(const RunConfig& cfg, const Dataset& ds) {
  auto [train_ds, test_ds] = split_stratified(ds, cfg.test_fraction, cfg.split_seed());
  AblationResult out;
  out.seed = cfg.seed;
  std::vector<std::pair<EvatVariant, bool>> runs;
  for (auto v : kAllVariants) runs.emplace_back(v, false);
  runs.emplace_back(EvatVariant::Scane, true);
  BootstrapOptions opts;
  opts.n_boot = 0;
  for (const auto& [variant, impute] : runs) {
    PipelineConfig p = cfg.pipeline;
    p.variant = variant;
    p.impute = impute;
    const auto r = train(p, cfg.train, train_ds);
    const auto report = evaluate(r.checkpoint, test_ds, opts, cfg.train.threads);
    AblationRow row;
    row.variant = to_string(variant);
    row.impute = impute;
    row.val_auprc = r.history.best_auprc;
    row.test_auprc = report.metrics.at("auprc").point;
    row.test_auroc = report.metrics.at("auroc").point;
    row.best_epoch = r.history.best_epoch;
    row.split_digest = split_digest(test_ds, r.split);
    out.rows.push_back(std::move(row));
  }
  return out;
}

// ---- running ---------------------------------------------------------------------

const std::vector<Scenario>& scenario_registry() {
  static const std::vector<Scenario> registry = build_registry();
  return registry;
}

std::vector<std::string> scenario_names() {
  std::vector<std::string> names;
  for (const auto& s : scenario_registry()) names.push_back(s.name);
  return names;
}

const Scenario& find_scenario(const std::string& name) {
  for (const auto& s : scenario_registry()) {
    if (s.name == name) return s;
  }
  std::string list;
  for (const auto& n : scenario_names()) list += (list.empty() ? "" : ", ") + n;
  throw ConfigError("unknown scenario '" + name + "'; available: " + list);
}

ScenarioReport run_scenario(const Scenario& s) {
  ScenarioReport rep;
  rep.name = s.name;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    if (!s.run) throw ConfigError("scenario '" + s.name + "' has no runner");
    rep.values = s.run(s, rep.details);
    rep.pass = true;
    for (const auto& p : s.expected) {
      PredicateResult pr;
      pr.predicate = p;
      auto it = rep.values.find(p.metric);
      pr.computed = it != rep.values.end();
      if (pr.computed) {
        pr.value = it->second;
        pr.pass = check(p, pr.value);
      }
      // A predicate on a quantity the scenario never computed is a defect.
      if (!pr.computed || (!pr.pass && !p.soft)) rep.pass = false;
      rep.predicates.push_back(pr);
    }
  } catch (const std::exception& e) {
    rep.pass = false;
    rep.error = e.what();
  }
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

ScenarioReport run_scenario(const std::string& name) { return run_scenario(find_scenario(name)); }

BenchReport run_scenarios(const std::vector<Scenario>& scenarios) {
  BenchReport out;
  for (const auto& s : scenarios) out.scenarios.push_back(run_scenario(s));
  return out;
}

BenchReport run_all() { return run_scenarios(scenario_registry()); }

bool BenchReport::pass() const {
  return std::all_of(scenarios.begin(), scenarios.end(), [](const ScenarioReport& r) { return r.pass; });
}

json BenchReport::to_json() const {
  json j;
  j["pass"] = pass();
  j["scenarios"] = json::array();
  for (const auto& r : scenarios) {
    json s;
    s["name"] = r.name;
    s["pass"] = r.pass;
    s["wall_seconds"] = r.wall_seconds;
    s["values"] = r.values;
    s["details"] = r.details;
    if (!r.error.empty()) s["error"] = r.error;
    s["predicates"] = json::array();
    for (const auto& p : r.predicates) {
      json e = {{"metric", p.predicate.metric},
                {"cmp", cmp_name(p.predicate.cmp)},
                {"bound", p.predicate.bound},
                {"soft", p.predicate.soft},
                {"computed", p.computed},
                {"pass", p.pass}};
      if (p.computed) e["value"] = p.value;
      s["predicates"].push_back(std::move(e));
    }
    j["scenarios"].push_back(std::move(s));
  }
  return j;
}

std::string BenchReport::to_junit() const {
  auto esc = [](const std::string& in) {
    std::string o;
    for (char c : in) {
      if (c == '&') o += "&amp;";
      else if (c == '<') o += "&lt;";
      else if (c == '>') o += "&gt;";
      else if (c == '"') o += "&quot;";
      else o += c;
    }
    return o;
  };
  std::size_t failures = 0;
  double total = 0.0;
  for (const auto& r : scenarios) {
    failures += r.pass ? 0 : 1;
    total += r.wall_seconds;
  }
  std::ostringstream x;
  x << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  x << "<testsuite name=\"summit-bench\" tests=\"" << scenarios.size() << "\" failures=\"" << failures
    << "\" time=\"" << total << "\">\n";
  for (const auto& r : scenarios) {
    x << "  <testcase classname=\"bench\" name=\"" << esc(r.name) << "\" time=\"" << r.wall_seconds << "\">\n";
    if (!r.pass) {
      std::string msg = r.error;
      for (const auto& p : r.predicates) {
        if (!p.computed) msg += (msg.empty() ? "" : "; ") + p.predicate.metric + " not computed";
        else if (!p.pass && !p.predicate.soft) {
          msg += (msg.empty() ? "" : "; ") + p.predicate.metric + "=" + std::to_string(p.value) + " fails " +
                 cmp_name(p.predicate.cmp) + " " + std::to_string(p.predicate.bound);
        }
      }
      x << "    <failure message=\"" << esc(msg) << "\"/>\n";
    }
    for (const auto& p : r.predicates) {
      if (p.predicate.soft && p.computed && !p.pass) {
        x << "    <system-out>soft predicate " << esc(p.predicate.metric) << " = " << p.value << " not "
          << esc(cmp_name(p.predicate.cmp)) << " " << p.predicate.bound << "</system-out>\n";
      }
    }
    x << "  </testcase>\n";
  }
  x << "</testsuite>\n";
  return x.str();
}

}  // namespace summit
