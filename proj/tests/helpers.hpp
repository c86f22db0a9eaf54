#pragma once

#include <random>
#include <string>

#include "summit/dataset.hpp"
#include "summit/rng.hpp"
#include "summit/summarize.hpp"
#include "summit/tensor.hpp"

namespace testing {

inline summit::Tensor<double> random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double scale = 1.0) {
  summit::Rng rng(seed);
  std::normal_distribution<double> z(0.0, scale);
  auto t = summit::Tensor<double>::matrix(r, c);
  for (auto& v : t.values()) v = z(rng);
  return t;
}

/// Three numerical features and one categorical feature with three levels.
inline summit::FeatureSchema mixed_schema() {
  summit::FeatureSchema s;
  for (int j = 0; j < 3; ++j) s.features.push_back({"x" + std::to_string(j), summit::FeatureKind::Numerical, {}});
  s.features.push_back({"c", summit::FeatureKind::Categorical, {"lo", "mid", "hi"}});
  return s;
}

inline summit::FeatureSchema numeric_schema(std::size_t n) {
  summit::FeatureSchema s;
  for (std::size_t j = 0; j < n; ++j) s.features.push_back({"v" + std::to_string(j), summit::FeatureKind::Numerical, {}});
  return s;
}

/// Random normalised summary matrix over `schema` with roughly `miss` of the
/// feature cells masked; the entry-count column is always observed.
inline summit::SummaryMatrix random_summary(const summit::FeatureSchema& schema, std::size_t windows, double miss,
                                            std::uint64_t seed) {
  summit::Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z(0.0, 1.0);
  const std::size_t cols = schema.size() + 1;
  summit::SummaryMatrix sm(windows, cols);
  for (std::size_t i = 0; i < windows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const bool entry = j + 1 == cols;
      if (!entry && u(rng) < miss) continue;
      sm.mask[i * cols + j] = 1;
      if (!entry && schema.features[j].kind == summit::FeatureKind::Categorical) {
        sm.value(i, j) = static_cast<double>(static_cast<int>(3.0 * u(rng)) % 3);
      } else {
        sm.value(i, j) = z(rng);
      }
    }
  }
  return sm;
}

/// Row-stochastic L x L matrix with dyadic entries, so every row sums to
/// exactly 1 in floating point. Columns with allowed[j] == 0 stay zero; rows
/// with no allowed column are zero.
inline summit::Tensor<double> dyadic_stochastic(std::size_t L, const std::vector<std::uint8_t>& allowed,
                                                std::uint64_t seed) {
  summit::Rng rng(seed);
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < L; ++j) {
    if (allowed.empty() || allowed[j]) cols.push_back(j);
  }
  auto w = summit::Tensor<double>::matrix(L, L);
  if (cols.empty()) return w;
  std::uniform_int_distribution<std::size_t> pick(0, cols.size() - 1);
  const int units = 1024;
  for (std::size_t i = 0; i < L; ++i) {
    for (int u = 0; u < units; ++u) w(i, cols[pick(rng)]) += 1.0 / units;
  }
  return w;
}

}  // namespace testing
