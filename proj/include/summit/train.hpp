#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "summit/checkpoint.hpp"
#include "summit/dataset.hpp"
#include "summit/embedding.hpp"
#include "summit/metrics.hpp"
#include "summit/model.hpp"
#include "summit/summarize.hpp"

namespace summit {

/// Which validation metric resets the patience counter. The returned
/// checkpoint always tracks the best validation AUPRC.
enum class StopMetric { Auprc, Auroc, Either };
std::string to_string(StopMetric m);
StopMetric parse_stop_metric(const std::string& s);

struct TrainConfig {
  double learning_rate = 3e-3;
  std::size_t batch_size = 256;
  std::size_t max_epochs = 50;
  std::size_t eval_every = 5;
  std::size_t patience = 30;
  StopMetric stop_metric = StopMetric::Auprc;
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t threads = 0;  // 0: hardware concurrency; results do not depend on it

  void validate() const;
};

/// Everything that shapes a run besides the optimiser.
struct PipelineConfig {
  ModelConfig model;
  LossConfig loss;
  SummarizationConfig summarization;
  EvatVariant variant = EvatVariant::Scane;
  bool impute = false;
};

struct EvalRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_auprc = 0.0;
  double val_auroc = 0.0;
  double grad_norm = 0.0;  // mean per-batch L2 norm over the epoch
};

struct TrainHistory {
  std::vector<EvalRecord> records;
  std::vector<double> epoch_losses;
  std::size_t best_epoch = 0;  // 0 when no evaluation happened; the last parameters are then returned
  double best_auprc = 0.0;
  std::string stop_reason = "max_epochs";  // or "patience"
};

struct TrainResult {
  Checkpoint checkpoint;
  TrainHistory history;
  SplitIndices split;  // train/validation positions within the input dataset
};

TrainResult train(const PipelineConfig& pipeline, const TrainConfig& cfg, const Dataset& ds);

/// Probabilities for every sample, in dataset order.
std::vector<double> predict_all(const Checkpoint& ck, const Dataset& ds, std::size_t threads = 0);
std::vector<double> predict_prepared(const Checkpoint& ck, const std::vector<SummaryMatrix>& inputs,
                                     std::size_t threads = 0);

MetricsReport evaluate(const Checkpoint& ck, const Dataset& ds, const BootstrapOptions& opts,
                       std::size_t threads = 0);

/// Rows: epoch, train_loss, val_auprc, val_auroc, grad_norm.
void write_history_csv(const TrainHistory& h, const std::string& path);

struct SweepGrid {
  std::vector<std::size_t> d_model;
  std::vector<std::size_t> num_head;
  std::vector<std::size_t> ff_dim;
  std::vector<std::size_t> num_layer;
  std::vector<std::size_t> classifier_down_factor;
  std::vector<double> learning_rate;

  void validate() const;
  std::size_t size() const;
};

struct SweepEntry {
  ModelConfig model;
  double learning_rate = 0.0;
  std::size_t grid_index = 0;
  std::size_t param_count = 0;
  std::optional<double> val_auprc;  // empty when skipped
  std::size_t best_epoch = 0;
  std::string skip_reason;
};

struct SweepResult {
  std::size_t grid_size = 0;
  std::vector<SweepEntry> ranked;   // completed runs, best first
  std::vector<SweepEntry> skipped;

  nlohmann::json to_json() const;
};

/// Trains every grid point with the shared seed (hence the same validation
/// split) and ranks by validation AUPRC, ties to fewer parameters.
SweepResult sweep(const SweepGrid& grid, const PipelineConfig& base, const TrainConfig& cfg, const Dataset& ds);

}  // namespace summit
