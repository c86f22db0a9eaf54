#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "summit/dataset.hpp"

namespace summit {

enum class CategoricalAggregator { Mode, Last };

struct SummarizationConfig {
  double window = 1.0;  // p, same units as the observation window
  CategoricalAggregator categorical = CategoricalAggregator::Mode;

  bool operator==(const SummarizationConfig&) const = default;
};

/// k x (n+1) summarised values plus the observed mask. The last column is the
/// segment entry count, which is always observed. Values at masked cells are
/// meaningless (stored as 0 by summarize).
struct SummaryMatrix {
  std::size_t windows = 0;
  std::size_t columns = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> mask;

  SummaryMatrix() = default;
  SummaryMatrix(std::size_t k, std::size_t cols)
      : windows(k), columns(cols), values(k * cols, 0.0), mask(k * cols, 0) {}

  double& value(std::size_t i, std::size_t j) { return values[i * columns + j]; }
  double value(std::size_t i, std::size_t j) const { return values[i * columns + j]; }
  bool observed(std::size_t i, std::size_t j) const { return mask[i * columns + j] != 0; }
  std::size_t tokens() const { return windows * columns; }

  bool operator==(const SummaryMatrix&) const = default;
};

/// k = floor(T / p), with a small tolerance for floating-point ratios.
std::size_t window_count(double observation_window, double window);

/// Windows are anchored at the sample's first timestamp; the final window
/// absorbs the remainder up to t1 + T. Numerical cells take the mean of
/// observed values; categorical cells take the mode (ties to the earliest
/// observed value) or the last observed value.
SummaryMatrix summarize(const RawSeries& raw, const FeatureSchema& schema, const SummarizationConfig& cfg,
                        double observation_window);

std::vector<SummaryMatrix> summarize_all(const Dataset& ds, const SummarizationConfig& cfg);

/// Standardisation statistics from observed training cells.
struct Normalizer {
  std::vector<double> mean;  // per column; categorical columns unused
  std::vector<double> stddev;
  std::vector<double> mode;  // per column; numerical columns unused
  std::vector<std::uint8_t> categorical;

  bool operator==(const Normalizer&) const = default;
};

/// Column kinds of a summary matrix: schema order, then the entry count.
std::vector<std::uint8_t> categorical_columns(const FeatureSchema& schema);

Normalizer fit_normalizer(const std::vector<SummaryMatrix>& train, const FeatureSchema& schema);

/// impute=false z-scores observed numerical cells and keeps the mask.
/// impute=true additionally fills missing numerical cells with 0 (the
/// normalised global mean), missing categorical cells with the global mode,
/// and sets the mask to all ones.
SummaryMatrix apply_normalizer(const SummaryMatrix& sm, const Normalizer& norm, bool impute);

/// Fraction of masked cells over the n feature columns (entry count excluded).
double missing_rate(const std::vector<SummaryMatrix>& matrices);

/// CSV export: sample_id, window, one column per feature, then "<name>.mask".
void export_summary_csv(const Dataset& ds, const std::vector<SummaryMatrix>& matrices, const std::string& path);

inline constexpr const char* kEntryCountName = "segment_entry_count";

}  // namespace summit
