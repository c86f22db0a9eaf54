#pragma once

#include <string>
#include <utility>
#include <vector>

#include "summit/dataset.hpp"
#include "summit/summarize.hpp"
#include "summit/tape.hpp"
#include "summit/tensor.hpp"

namespace summit {

/// Token embedding route. Scane scales a per-feature vector by the value; the
/// other four are naive each-value-as-a-token baselines that feed the feature
/// indicator (scalar index or one-hot) and the value through a linear map
/// (Concat) or a linear map followed by GELU (Fusion).
enum class EvatVariant { Scane, IndexConcat, IndexFusion, OnehotConcat, OnehotFusion };

std::string to_string(EvatVariant v);
EvatVariant parse_variant(const std::string& s);
inline constexpr EvatVariant kAllVariants[] = {EvatVariant::Scane, EvatVariant::IndexConcat, EvatVariant::IndexFusion,
                                               EvatVariant::OnehotConcat, EvatVariant::OnehotFusion};

/// Maps summary columns (schema order + entry count) to embedding rows.
/// Numerical columns own one row each in the numeric table; every
/// (categorical feature, category) pair owns one row in the categorical table.
struct ColumnLayout {
  std::size_t columns = 0;
  std::vector<std::uint8_t> categorical;
  std::vector<int> numeric_slot;     // -1 for categorical columns
  std::vector<int> category_offset;  // -1 for numerical columns
  std::vector<std::size_t> vocab;    // 0 for numerical columns
  std::size_t numeric_count = 0;
  std::size_t category_count = 0;
  std::vector<std::string> numeric_names;
  std::vector<std::string> category_names;  // "feature=category"

  static ColumnLayout from_schema(const FeatureSchema& schema);
  std::size_t onehot_width() const { return numeric_count + category_count; }
  /// Width of the EVAT input row (indicator representation + value).
  std::size_t evat_input_width(EvatVariant v) const;
};

/// Flattened tokens: row p = i * columns + j holds the embedding of cell (i, j).
struct TokenSequence {
  Tensor<double> tokens;  // L x d
  std::vector<std::uint8_t> mask;
  std::size_t windows = 0;
  std::size_t columns = 0;

  std::size_t flat(std::size_t i, std::size_t j) const { return i * columns + j; }
  std::pair<std::size_t, std::size_t> cell(std::size_t p) const { return {p / columns, p % columns}; }
};

/// Feature embeddings u_j and category vectors, in layout order.
struct EmbeddingTable {
  std::size_t dim = 0;
  std::vector<std::string> names;
  std::vector<std::vector<double>> vectors;
};

/// Adds embedding parameters for `variant` to params ("embed.*" or "evat.*").
template <typename T>
void init_embedding_params(ParamSet<T>& params, const ColumnLayout& layout, EvatVariant variant, std::size_t d,
                           std::uint64_t seed);

/// Raw EVAT input rows (L x evat_input_width) before the learned map.
/// Masked cells give zero rows.
template <typename T>
Tensor<T> evat_inputs(const SummaryMatrix& sm, const ColumnLayout& layout, EvatVariant variant);

/// Records the L x d token matrix on the tape. Masked cells are zero rows
/// under every variant.
template <typename T>
typename Tape<T>::Var embed_tokens(Tape<T>& tape, const ParamSet<T>& params, const ColumnLayout& layout,
                                   EvatVariant variant, const SummaryMatrix& sm);

/// Value-level token sequence (no gradients), for inspection and tests.
template <typename T>
TokenSequence embed(const SummaryMatrix& sm, const ParamSet<T>& params, const ColumnLayout& layout,
                    EvatVariant variant);

template <typename T>
EmbeddingTable embedding_table(const ParamSet<T>& params, const ColumnLayout& layout);

/// CSV: feature,dim0,...,dim{d-1}; one row per embedding vector.
void export_embeddings(const EmbeddingTable& table, const std::string& path);
EmbeddingTable load_embeddings_csv(const std::string& path);

}  // namespace summit
