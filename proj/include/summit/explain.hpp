#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "summit/checkpoint.hpp"
#include "summit/model.hpp"
#include "summit/tensor.hpp"

namespace summit {

enum class RolloutKind { Original, Revised };
std::string to_string(RolloutKind k);
RolloutKind parse_rollout_kind(const std::string& s);

struct RolloutResult {
  Tensor<double> matrix;  // L x L
  RolloutKind kind = RolloutKind::Original;
  std::vector<std::uint8_t> guarded;  // rows of the first factor zeroed by the guard
};

/// Row-normalises each row; rows summing to zero stay zero.
Tensor<double> row_normalize(const Tensor<double>& a, std::vector<std::uint8_t>* zero_rows = nullptr);

/// A1' = rownorm(W1 + diag(mask)).
Tensor<double> revised_first_factor(const Tensor<double>& w1, std::span<const std::uint8_t> mask,
                                    std::vector<std::uint8_t>* guarded = nullptr);

/// A_N ... A_1 with A_i = rownorm(W_i + I), i.e. 0.5 W_i + 0.5 I for
/// attention rows.
RolloutResult rollout(const AttentionTrace& trace);

/// A_N ... A_2 A1', where masked tokens get no self-loop in A1'.
RolloutResult revised_rollout(const AttentionTrace& trace, std::span<const std::uint8_t> mask);

/// Column means of the rollout reshaped to windows x columns, with ordinal
/// ranks (1 = largest, ties to the lower flat index).
struct ImportanceMap {
  std::size_t windows = 0;
  std::size_t columns = 0;
  std::vector<double> importance;
  std::vector<std::size_t> rank;

  double at(std::size_t i, std::size_t j) const { return importance[i * columns + j]; }
  std::size_t rank_at(std::size_t i, std::size_t j) const { return rank[i * columns + j]; }
  /// Column order by ascending mean rank over windows; ties keep column order.
  std::vector<std::size_t> column_order() const;
};

ImportanceMap importance_map(const RolloutResult& r, std::size_t windows, std::size_t columns);

/// CSV (window, feature, importance, rank) and a standalone SVG heat map whose
/// columns are ordered by mean rank. column_names has one entry per column.
void export_importance(const ImportanceMap& map, const std::vector<std::string>& column_names,
                       const std::string& csv_path, const std::string& svg_path);

/// Summary-matrix column names: schema features, then the entry count.
std::vector<std::string> column_names(const FeatureSchema& schema);

struct SampleExplanation {
  RolloutResult rollout;
  ImportanceMap map;
  AttentionTrace trace;
  std::vector<std::uint8_t> mask;
  double probability = 0.0;
};

/// Runs the checkpoint on one sample of ds (by id) and explains it.
SampleExplanation explain_sample(const Checkpoint& ck, const Dataset& ds, const std::string& sample_id,
                                 RolloutKind kind);

}  // namespace summit
