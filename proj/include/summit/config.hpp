#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "summit/synth.hpp"
#include "summit/train.hpp"

namespace summit {

struct BootstrapConfig {
  std::size_t replicates = 1000;
  double level = 0.95;
  double threshold = 0.5;
};

/// One JSON document drives every command. Sub-seeds are derived from the
/// root seed by purpose label, so a single number fixes all randomness.
struct RunConfig {
  std::uint64_t seed = 7;
  SynthConfig synth;
  PipelineConfig pipeline;
  TrainConfig train;
  double test_fraction = 0.2;
  BootstrapConfig bootstrap;
  std::string dataset;  // dataset path
  std::string run_dir = "run";
  std::optional<SweepGrid> sweep;

  /// Fills derived seeds and checks every section. Throws ConfigError.
  void finalize();
  std::uint64_t split_seed() const;
  std::uint64_t bootstrap_seed() const;
  BootstrapOptions bootstrap_options() const;

  nlohmann::json to_json() const;
};

/// Unknown keys anywhere in the document are rejected with their path.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

}  // namespace summit
