#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace summit {

/// Average precision: sum over positives in descending score order of the
/// precision at that rank, divided by the positive count. Tied scores form
/// one group and precision is taken at the group boundary.
/// Throws DataError unless both classes are present.
double auprc(std::span<const double> scores, std::span<const int> labels);

/// P(score_pos > score_neg) + 0.5 P(tie), over all positive/negative pairs.
double auroc(std::span<const double> scores, std::span<const int> labels);

/// Fraction of samples where (score >= threshold) equals the label.
double accuracy(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

/// Harrell's concordance: over pairs with an event at t_i < t_j, the share
/// where score_i > score_j (ties count half). labels mark events (1) vs
/// censoring (0).
double c_index(std::span<const double> scores, std::span<const double> event_times, std::span<const int> labels);

enum class Metric { Auprc, Auroc, Accuracy, CIndex };
std::string to_string(Metric m);

struct ConfidenceInterval {
  double low = 0.0;
  double high = 0.0;
  std::size_t replicates = 0;  // replicates that produced a value
  std::size_t skipped = 0;     // undefined even after redraws
  bool reliable = true;        // false when more than half were skipped
};

struct BootstrapOptions {
  std::size_t n_boot = 1000;
  double level = 0.95;
  std::uint64_t seed = 0;
  std::size_t max_redraws = 10;
  double threshold = 0.5;
};

/// Percentile bootstrap over resampled (score, label[, time]) triples.
/// Replicates where the metric is undefined are redrawn up to max_redraws
/// times, then skipped.
ConfidenceInterval bootstrap_ci(Metric metric, std::span<const double> scores, std::span<const int> labels,
                                std::span<const double> event_times, const BootstrapOptions& opts);

struct MetricValue {
  double point = 0.0;
  std::optional<ConfidenceInterval> ci;
};

struct MetricsReport {
  std::map<std::string, MetricValue> metrics;
  std::size_t n_positive = 0;
  std::size_t n_negative = 0;
  std::uint64_t bootstrap_seed = 0;
  std::size_t bootstrap_replicates = 0;
  double threshold = 0.5;

  nlohmann::json to_json() const;
};

/// AUPRC, AUROC, accuracy, and c-index when event times are given, each with
/// a bootstrap interval when opts.n_boot > 0.
MetricsReport compute_report(std::span<const double> scores, std::span<const int> labels,
                             std::span<const double> event_times, const BootstrapOptions& opts);

}  // namespace summit
