#include "summit/summarize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "summit/error.hpp"

namespace summit {

std::size_t window_count(double observation_window, double window) {
  if (!(window > 0.0)) throw ConfigError("summarization window must be positive");
  if (window > observation_window) throw ConfigError("summarization window exceeds the observation window");
  return static_cast<std::size_t>(std::floor(observation_window / window + 1e-9));
}

SummaryMatrix summarize(const RawSeries& raw, const FeatureSchema& schema, const SummarizationConfig& cfg,
                        double observation_window) {
  const std::size_t k = window_count(observation_window, cfg.window);
  const std::size_t n = schema.size();
  const std::size_t cols = n + 1;
  SummaryMatrix sm(k, cols);
  for (std::size_t i = 0; i < k; ++i) sm.mask[i * cols + n] = 1;
  if (raw.rows() == 0) return sm;

  const double t1 = raw.timestamps.front();
  std::vector<std::size_t> row_window(raw.rows());
  for (std::size_t r = 0; r < raw.rows(); ++r) {
    const double offset = raw.timestamps[r] - t1;
    auto w = static_cast<std::size_t>(std::floor(offset / cfg.window));
    row_window[r] = std::min(w, k - 1);
    sm.value(row_window[r], n) += 1.0;
  }

  for (std::size_t j = 0; j < n; ++j) {
    const bool categorical = schema.features[j].kind == FeatureKind::Categorical;
    std::size_t r = 0;
    while (r < raw.rows()) {
      const std::size_t w = row_window[r];
      std::size_t end = r;
      while (end < raw.rows() && row_window[end] == w) ++end;

      if (!categorical) {
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t q = r; q < end; ++q) {
          if (const auto& c = raw.cell(q, j, n)) {
            sum += *c;
            ++count;
          }
        }
        if (count > 0) {
          sm.value(w, j) = sum / static_cast<double>(count);
          sm.mask[w * cols + j] = 1;
        }
      } else if (cfg.categorical == CategoricalAggregator::Last) {
        for (std::size_t q = end; q-- > r;) {
          if (const auto& c = raw.cell(q, j, n)) {
            sm.value(w, j) = *c;
            sm.mask[w * cols + j] = 1;
            break;
          }
        }
      } else {
        // Mode; ties go to the value observed first.
        std::map<double, std::pair<std::size_t, std::size_t>> counts;  // value -> (count, first row)
        for (std::size_t q = r; q < end; ++q) {
          if (const auto& c = raw.cell(q, j, n)) {
            auto [it, inserted] = counts.emplace(*c, std::make_pair(std::size_t{0}, q));
            ++it->second.first;
          }
        }
        if (!counts.empty()) {
          auto best = counts.begin();
          for (auto it = counts.begin(); it != counts.end(); ++it) {
            const auto [cnt, first] = it->second;
            if (cnt > best->second.first || (cnt == best->second.first && first < best->second.second)) best = it;
          }
          sm.value(w, j) = best->first;
          sm.mask[w * cols + j] = 1;
        }
      }
      r = end;
    }
  }
  return sm;
}

std::vector<SummaryMatrix> summarize_all(const Dataset& ds, const SummarizationConfig& cfg) {
  std::vector<SummaryMatrix> out;
  out.reserve(ds.samples.size());
  for (const auto& s : ds.samples) out.push_back(summarize(s, ds.schema, cfg, ds.observation_window));
  return out;
}

std::vector<std::uint8_t> categorical_columns(const FeatureSchema& schema) {
  std::vector<std::uint8_t> out;
  for (const auto& f : schema.features) out.push_back(f.kind == FeatureKind::Categorical ? 1 : 0);
  out.push_back(0);  // entry count
  return out;
}

Normalizer fit_normalizer(const std::vector<SummaryMatrix>& train, const FeatureSchema& schema) {
  const auto kinds = categorical_columns(schema);
  const std::size_t cols = kinds.size();
  Normalizer norm;
  norm.categorical = kinds;
  norm.mean.assign(cols, 0.0);
  norm.stddev.assign(cols, 1.0);
  norm.mode.assign(cols, 0.0);
  std::vector<double> sum(cols, 0.0), sumsq(cols, 0.0);
  std::vector<std::size_t> count(cols, 0);
  std::vector<std::map<double, std::size_t>> freq(cols);
  for (const auto& sm : train) {
    if (sm.columns != cols) throw ShapeError("fit_normalizer: column count does not match the schema");
    for (std::size_t i = 0; i < sm.windows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) {
        if (!sm.observed(i, j)) continue;
        const double v = sm.value(i, j);
        if (kinds[j]) {
          ++freq[j][v];
        } else {
          sum[j] += v;
          ++count[j];
        }
      }
    }
  }
  for (std::size_t j = 0; j < cols; ++j) {
    if (kinds[j]) {
      std::size_t best = 0;
      for (const auto& [v, c] : freq[j]) {
        if (c > best) {  // ascending keys: ties keep the smallest category
          best = c;
          norm.mode[j] = v;
        }
      }
      continue;
    }
    if (count[j] == 0) continue;
    const double mean = sum[j] / static_cast<double>(count[j]);
    norm.mean[j] = mean;
    for (const auto& sm : train) {
      for (std::size_t i = 0; i < sm.windows; ++i) {
        if (sm.observed(i, j)) sumsq[j] += (sm.value(i, j) - mean) * (sm.value(i, j) - mean);
      }
    }
    const double sd = std::sqrt(sumsq[j] / static_cast<double>(count[j]));
    norm.stddev[j] = sd < 1e-12 ? 1.0 : sd;
  }
  return norm;
}

SummaryMatrix apply_normalizer(const SummaryMatrix& sm, const Normalizer& norm, bool impute) {
  if (sm.columns != norm.mean.size()) throw ShapeError("apply_normalizer: column count mismatch");
  SummaryMatrix out = sm;
  for (std::size_t i = 0; i < sm.windows; ++i) {
    for (std::size_t j = 0; j < sm.columns; ++j) {
      const std::size_t idx = i * sm.columns + j;
      if (sm.mask[idx]) {
        if (!norm.categorical[j]) out.values[idx] = (sm.values[idx] - norm.mean[j]) / norm.stddev[j];
      } else if (impute) {
        out.values[idx] = norm.categorical[j] ? norm.mode[j] : 0.0;
        out.mask[idx] = 1;
      }
    }
  }
  return out;
}

double missing_rate(const std::vector<SummaryMatrix>& matrices) {
  if (matrices.empty()) throw DataError("missing_rate: empty matrix list");
  std::size_t missing = 0, total = 0;
  for (const auto& sm : matrices) {
    for (std::size_t i = 0; i < sm.windows; ++i) {
      for (std::size_t j = 0; j + 1 < sm.columns; ++j) {
        ++total;
        if (!sm.observed(i, j)) ++missing;
      }
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(missing) / static_cast<double>(total);
}

void export_summary_csv(const Dataset& ds, const std::vector<SummaryMatrix>& matrices, const std::string& path) {
  if (matrices.size() != ds.samples.size()) throw ShapeError("export_summary_csv: matrix count mismatch");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  std::vector<std::string> names;
  for (const auto& f : ds.schema.features) names.push_back(f.name);
  names.push_back(kEntryCountName);
  out << "sample_id,window";
  for (const auto& n : names) out << ',' << n;
  for (const auto& n : names) out << ',' << n << ".mask";
  out << '\n';
  char buf[64];
  for (std::size_t s = 0; s < matrices.size(); ++s) {
    const auto& sm = matrices[s];
    for (std::size_t i = 0; i < sm.windows; ++i) {
      out << ds.samples[s].id << ',' << i;
      for (std::size_t j = 0; j < sm.columns; ++j) {
        out << ',';
        if (sm.observed(i, j)) {
          std::snprintf(buf, sizeof buf, "%.17g", sm.value(i, j));
          out << buf;
        }
      }
      for (std::size_t j = 0; j < sm.columns; ++j) out << ',' << (sm.observed(i, j) ? 1 : 0);
      out << '\n';
    }
  }
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace summit
