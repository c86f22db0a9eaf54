#include "summit/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "summit/error.hpp"
#include "summit/rng.hpp"

namespace summit {

std::string to_string(EvatVariant v) {
  switch (v) {
    case EvatVariant::Scane: return "scane";
    case EvatVariant::IndexConcat: return "index_concat";
    case EvatVariant::IndexFusion: return "index_fusion";
    case EvatVariant::OnehotConcat: return "onehot_concat";
    case EvatVariant::OnehotFusion: return "onehot_fusion";
  }
  return "unknown";
}

EvatVariant parse_variant(const std::string& s) {
  for (auto v : kAllVariants) {
    if (to_string(v) == s) return v;
  }
  throw ConfigError("unknown variant '" + s + "' (expected scane|index_concat|index_fusion|onehot_concat|onehot_fusion)");
}

ColumnLayout ColumnLayout::from_schema(const FeatureSchema& schema) {
  ColumnLayout l;
  l.columns = schema.size() + 1;
  for (const auto& f : schema.features) {
    if (f.kind == FeatureKind::Numerical) {
      l.categorical.push_back(0);
      l.numeric_slot.push_back(static_cast<int>(l.numeric_count++));
      l.category_offset.push_back(-1);
      l.vocab.push_back(0);
      l.numeric_names.push_back(f.name);
    } else {
      l.categorical.push_back(1);
      l.numeric_slot.push_back(-1);
      l.category_offset.push_back(static_cast<int>(l.category_count));
      l.vocab.push_back(f.categories.size());
      l.category_count += f.categories.size();
      for (const auto& c : f.categories) l.category_names.push_back(f.name + "=" + c);
    }
  }
  l.categorical.push_back(0);
  l.numeric_slot.push_back(static_cast<int>(l.numeric_count++));
  l.category_offset.push_back(-1);
  l.vocab.push_back(0);
  l.numeric_names.push_back(kEntryCountName);
  return l;
}

std::size_t ColumnLayout::evat_input_width(EvatVariant v) const {
  switch (v) {
    case EvatVariant::IndexConcat:
    case EvatVariant::IndexFusion: return 2;
    case EvatVariant::OnehotConcat:
    case EvatVariant::OnehotFusion: return onehot_width() + 1;
    case EvatVariant::Scane: return 0;
  }
  return 0;
}

namespace {

std::size_t category_index(double v, const ColumnLayout& layout, std::size_t j) {
  if (v != std::floor(v) || v < 0 || v >= static_cast<double>(layout.vocab[j])) {
    throw DataError("category index " + std::to_string(v) + " outside the vocabulary of column " + std::to_string(j));
  }
  return static_cast<std::size_t>(v);
}

void check_columns(const SummaryMatrix& sm, const ColumnLayout& layout) {
  if (sm.columns != layout.columns) throw ShapeError("summary matrix column count does not match the schema");
}

}  // namespace

template <typename T>
void init_embedding_params(ParamSet<T>& params, const ColumnLayout& layout, EvatVariant variant, std::size_t d,
                           std::uint64_t seed) {
  if (variant == EvatVariant::Scane) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    auto uniform = [&](const std::string& path, std::size_t rows) {
      Rng rng(derive_seed(seed, path));
      std::uniform_real_distribution<double> u(-bound, bound);
      Tensor<T> t({rows, d});
      for (auto& v : t.values()) v = static_cast<T>(u(rng));
      params.add(path, std::move(t));
    };
    uniform("embed.numeric", layout.numeric_count);
    if (layout.category_count > 0) uniform("embed.categorical", layout.category_count);
    return;
  }
  const std::size_t q = layout.evat_input_width(variant);
  const double bound = std::sqrt(6.0 / static_cast<double>(q + d));
  Rng rng(derive_seed(seed, "evat.w"));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor<T> w({q, d});
  for (auto& v : w.values()) v = static_cast<T>(u(rng));
  params.add("evat.w", std::move(w));
  params.add("evat.b", Tensor<T>({d}));
}

template <typename T>
Tensor<T> evat_inputs(const SummaryMatrix& sm, const ColumnLayout& layout, EvatVariant variant) {
  check_columns(sm, layout);
  const std::size_t q = layout.evat_input_width(variant);
  if (q == 0) throw ConfigError("evat_inputs: the scane variant has no EVAT input rows");
  const bool onehot = variant == EvatVariant::OnehotConcat || variant == EvatVariant::OnehotFusion;
  auto out = Tensor<T>::matrix(sm.tokens(), q);
  for (std::size_t i = 0; i < sm.windows; ++i) {
    for (std::size_t j = 0; j < sm.columns; ++j) {
      if (!sm.observed(i, j)) continue;
      T* row = out.row(i * sm.columns + j);
      const double v = sm.value(i, j);
      if (!onehot) {
        row[0] = static_cast<T>(j);
        row[1] = static_cast<T>(layout.categorical[j] ? static_cast<double>(category_index(v, layout, j)) : v);
      } else if (layout.categorical[j]) {
        const std::size_t slot = layout.numeric_count + static_cast<std::size_t>(layout.category_offset[j]) +
                                 category_index(v, layout, j);
        row[slot] = T{1};
        row[q - 1] = T{1};
      } else {
        row[static_cast<std::size_t>(layout.numeric_slot[j])] = T{1};
        row[q - 1] = static_cast<T>(v);
      }
    }
  }
  return out;
}

template <typename T>
typename Tape<T>::Var embed_tokens(Tape<T>& tape, const ParamSet<T>& params, const ColumnLayout& layout,
                                   EvatVariant variant, const SummaryMatrix& sm) {
  check_columns(sm, layout);
  const std::size_t L = sm.tokens();
  if (variant == EvatVariant::Scane) {
    std::vector<int> num_idx(L, -1), cat_idx(L, -1);
    std::vector<T> num_scale(L, T{0}), cat_scale(L, T{0});
    bool any_cat = false;
    for (std::size_t i = 0; i < sm.windows; ++i) {
      for (std::size_t j = 0; j < sm.columns; ++j) {
        if (!sm.observed(i, j)) continue;  // zero token
        const std::size_t p = i * sm.columns + j;
        const double v = sm.value(i, j);
        if (layout.categorical[j]) {
          cat_idx[p] = layout.category_offset[j] + static_cast<int>(category_index(v, layout, j));
          cat_scale[p] = T{1};
          any_cat = true;
        } else {
          num_idx[p] = layout.numeric_slot[j];
          num_scale[p] = static_cast<T>(v);
        }
      }
    }
    auto tokens = tape.gather_rows(tape.param("embed.numeric", params.at("embed.numeric")), std::move(num_idx),
                                   std::move(num_scale));
    if (any_cat) {
      auto cat = tape.gather_rows(tape.param("embed.categorical", params.at("embed.categorical")), std::move(cat_idx),
                                  std::move(cat_scale));
      tokens = tape.add(tokens, cat);
    }
    return tokens;
  }
  auto x = tape.constant(evat_inputs<T>(sm, layout, variant));
  auto h = tape.add_row(tape.matmul(x, tape.param("evat.w", params.at("evat.w"))), tape.param("evat.b", params.at("evat.b")));
  if (variant == EvatVariant::IndexFusion || variant == EvatVariant::OnehotFusion) h = tape.gelu(h);
  std::vector<T> keep(L);
  for (std::size_t p = 0; p < L; ++p) keep[p] = sm.mask[p] ? T{1} : T{0};
  return tape.mul_rows(h, std::move(keep));
}

template <typename T>
TokenSequence embed(const SummaryMatrix& sm, const ParamSet<T>& params, const ColumnLayout& layout,
                    EvatVariant variant) {
  Tape<T> tape;
  auto v = embed_tokens(tape, params, layout, variant, sm);
  TokenSequence seq;
  seq.tokens = tape.value(v).template cast<double>();
  seq.mask = sm.mask;
  seq.windows = sm.windows;
  seq.columns = sm.columns;
  return seq;
}

template <typename T>
EmbeddingTable embedding_table(const ParamSet<T>& params, const ColumnLayout& layout) {
  if (!params.contains("embed.numeric")) throw ConfigError("embedding table requires the scane variant");
  EmbeddingTable table;
  const auto& num = params.at("embed.numeric");
  table.dim = num.cols();
  auto push = [&](const Tensor<T>& t, const std::vector<std::string>& names) {
    for (std::size_t r = 0; r < names.size(); ++r) {
      table.names.push_back(names[r]);
      std::vector<double> v(t.cols());
      for (std::size_t c = 0; c < t.cols(); ++c) v[c] = static_cast<double>(t(r, c));
      table.vectors.push_back(std::move(v));
    }
  };
  push(num, layout.numeric_names);
  if (layout.category_count > 0) push(params.at("embed.categorical"), layout.category_names);
  return table;
}

void export_embeddings(const EmbeddingTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out << "feature";
  for (std::size_t c = 0; c < table.dim; ++c) out << ",dim" << c;
  out << '\n';
  char buf[64];
  for (std::size_t r = 0; r < table.names.size(); ++r) {
    out << table.names[r];
    for (double v : table.vectors[r]) {
      std::snprintf(buf, sizeof buf, "%.9g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw DataError("write failed: " + path);
}

EmbeddingTable load_embeddings_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  EmbeddingTable table;
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty embedding file");
  table.dim = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    table.names.push_back(cell);
    std::vector<double> v;
    while (std::getline(row, cell, ',')) v.push_back(std::stod(cell));
    if (v.size() != table.dim) throw DataError(path + ": row width mismatch");
    table.vectors.push_back(std::move(v));
  }
  return table;
}

#define SUMMIT_INSTANTIATE(T)                                                                                      \
  template void init_embedding_params<T>(ParamSet<T>&, const ColumnLayout&, EvatVariant, std::size_t,            \
                                         std::uint64_t);                                                          \
  template Tensor<T> evat_inputs<T>(const SummaryMatrix&, const ColumnLayout&, EvatVariant);                      \
  template typename Tape<T>::Var embed_tokens<T>(Tape<T>&, const ParamSet<T>&, const ColumnLayout&, EvatVariant, \
                                                 const SummaryMatrix&);                                           \
  template TokenSequence embed<T>(const SummaryMatrix&, const ParamSet<T>&, const ColumnLayout&, EvatVariant);    \
  template EmbeddingTable embedding_table<T>(const ParamSet<T>&, const ColumnLayout&);

SUMMIT_INSTANTIATE(float)
SUMMIT_INSTANTIATE(double)
#undef SUMMIT_INSTANTIATE

}  // namespace summit
