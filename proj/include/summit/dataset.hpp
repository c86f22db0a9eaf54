#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace summit {

enum class FeatureKind { Numerical, Categorical };

struct FeatureDescriptor {
  std::string name;
  FeatureKind kind = FeatureKind::Numerical;
  std::vector<std::string> categories;  // categorical only

  bool operator==(const FeatureDescriptor&) const = default;
};

struct FeatureSchema {
  std::vector<FeatureDescriptor> features;

  std::size_t size() const { return features.size(); }
  /// Index of the named feature, or -1.
  int index_of(const std::string& name) const;
  /// Throws DataError on duplicate names or empty vocabularies.
  void validate() const;

  bool operator==(const FeatureSchema&) const = default;
};

/// One sample: m timestamped rows over n features. Absent cells are nullopt;
/// categorical cells hold the category index.
struct RawSeries {
  std::string id;
  std::vector<double> timestamps;
  std::vector<std::optional<double>> cells;  // m x n, row-major
  int label = 0;
  std::optional<double> event_time;

  std::size_t rows() const { return timestamps.size(); }
  const std::optional<double>& cell(std::size_t row, std::size_t feature, std::size_t n) const {
    return cells[row * n + feature];
  }

  bool operator==(const RawSeries&) const = default;
};

struct Dataset {
  FeatureSchema schema;
  std::vector<RawSeries> samples;
  double observation_window = 0.0;
  std::string provenance;

  /// Checks every sample against the schema and the window; throws DataError
  /// naming the sample.
  void validate() const;
  std::vector<int> labels() const;
  /// Index of the sample with this id, or -1.
  int find(const std::string& id) const;
  Dataset subset(const std::vector<std::size_t>& indices) const;

  bool operator==(const Dataset&) const = default;
};

/// Reads the JSON-lines format: a header line with the schema and the
/// observation window, then one sample per line. Errors name the line.
Dataset load_dataset(const std::string& path);
/// Canonical JSON-lines output; byte-identical for equal datasets.
void save_dataset(const Dataset& ds, const std::string& path);
std::string serialize_dataset(const Dataset& ds);
Dataset parse_dataset(const std::string& text);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Per-class shuffled partition; each class contributes round(n_c * test_fraction)
/// samples (at least one, at most n_c - 1) to the test side. Both index lists
/// are sorted ascending.
SplitIndices stratified_indices(const std::vector<int>& labels, double test_fraction, std::uint64_t seed);

std::pair<Dataset, Dataset> split_stratified(const Dataset& ds, double test_fraction, std::uint64_t seed);

}  // namespace summit
