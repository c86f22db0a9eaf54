#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "summit/config.hpp"
#include "summit/synth.hpp"
#include "summit/train.hpp"

namespace summit {

/// A machine-checkable bound on one named quantity the scenario computes.
/// Soft predicates are reported but never fail the scenario.
struct Predicate {
  enum class Cmp { Gt, Ge, Le, Eq };
  std::string metric;
  Cmp cmp = Cmp::Ge;
  double bound = 0.0;
  bool soft = false;
};

struct PredicateResult {
  Predicate predicate;
  double value = 0.0;
  bool computed = false;
  bool pass = false;
};

struct Scenario {
  std::string name;
  std::string description;
  std::uint64_t seed = 7;  // root seed; split and training seeds derive from it
  SynthConfig synth;
  PipelineConfig pipeline;
  TrainConfig train;
  double test_fraction = 0.2;
  std::vector<Predicate> expected;
  /// Produces the named quantities the predicates read.
  std::function<std::map<std::string, double>(const Scenario&, nlohmann::json& details)> run;
};

struct ScenarioReport {
  std::string name;
  bool pass = false;
  double wall_seconds = 0.0;
  std::vector<PredicateResult> predicates;
  std::map<std::string, double> values;
  nlohmann::json details;
  std::string error;  // set when the scenario threw
};

struct BenchReport {
  std::vector<ScenarioReport> scenarios;
  bool pass() const;
  nlohmann::json to_json() const;
  std::string to_junit() const;
};

/// The registered scenarios, in run order.
const std::vector<Scenario>& scenario_registry();
std::vector<std::string> scenario_names();
const Scenario& find_scenario(const std::string& name);

ScenarioReport run_scenario(const Scenario& s);
ScenarioReport run_scenario(const std::string& name);
BenchReport run_scenarios(const std::vector<Scenario>& scenarios);
BenchReport run_all();

/// Full pipeline on synthetic data: generate, split, train, evaluate on the
/// held-out part. Values: test_auprc, test_auroc, val_auprc, prevalence.
std::map<std::string, double> pipeline_values(const Scenario& s, nlohmann::json& details);

/// Scenario whose pipeline settings are exactly those of a run config.
Scenario scenario_from_config(const std::string& name, const RunConfig& cfg);

/// Trains the five embedding variants with masking plus SCANE with global
/// mean/mode imputation, all on the same test split and validation split.
struct AblationRow {
  std::string variant;
  bool impute = false;
  double val_auprc = 0.0;
  double test_auprc = 0.0;
  double test_auroc = 0.0;
  std::size_t best_epoch = 0;
  std::string split_digest;  // hash of the test ids and validation positions
};

struct AblationResult {
  std::uint64_t seed = 0;
  std::vector<AblationRow> rows;
  nlohmann::json to_json() const;
};

AblationResult run_ablation(const RunConfig& cfg, const Dataset& ds);

/// The canned learnability setting: 10,000 samples, prevalence 0.1, missing
/// rate 0.75, seed 7, 8-unit windows over a 48-unit horizon.
Scenario canned_scenario();
RunConfig canned_config(std::uint64_t seed = 7);

}  // namespace summit
