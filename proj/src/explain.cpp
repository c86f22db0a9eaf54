#include "summit/explain.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "summit/error.hpp"
#include "summit/kernels.hpp"

namespace summit {

namespace {

void check_square(const Tensor<double>& w, std::size_t L) {
  if (w.rank() != 2 || w.rows() != L || w.cols() != L) {
    throw ShapeError("rollout: attention matrix " + shape_string(w.shape()) + " is not " + std::to_string(L) + "x" +
                     std::to_string(L));
  }
}

// rownorm(W + I), which is 0.5 W + 0.5 I for a row-stochastic W. Computing it
// this way makes a fully observed revised first factor the same arithmetic as
// the original one, so the two rollouts agree bit for bit.
Tensor<double> residual_mix(const Tensor<double>& w) {
  Tensor<double> a = w;
  for (std::size_t i = 0; i < a.rows(); ++i) a(i, i) += 1.0;
  return row_normalize(a);
}

std::size_t trace_length(const AttentionTrace& trace) {
  if (trace.weights.empty()) throw ConfigError("rollout: empty attention trace");
  return trace.weights[0].rows();
}

RolloutResult chain(const AttentionTrace& trace, Tensor<double> first, RolloutKind kind) {
  const std::size_t L = first.rows();
  RolloutResult r;
  r.kind = kind;
  r.matrix = std::move(first);
  for (std::size_t i = 1; i < trace.weights.size(); ++i) {
    check_square(trace.weights[i], L);
    r.matrix = matmul(residual_mix(trace.weights[i]), r.matrix);
  }
  return r;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string to_string(RolloutKind k) { return k == RolloutKind::Original ? "original" : "revised"; }

RolloutKind parse_rollout_kind(const std::string& s) {
  if (s == "original") return RolloutKind::Original;
  if (s == "revised") return RolloutKind::Revised;
  throw ConfigError("unknown rollout variant '" + s + "' (expected original|revised)");
}

Tensor<double> row_normalize(const Tensor<double>& a, std::vector<std::uint8_t>* zero_rows) {
  Tensor<double> out = a;
  if (zero_rows) zero_rows->assign(a.rows(), 0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j);
    if (s == 0.0) {
      for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = 0.0;
      if (zero_rows) (*zero_rows)[i] = 1;
      continue;
    }
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(i, j) / s;
  }
  return out;
}

Tensor<double> revised_first_factor(const Tensor<double>& w1, std::span<const std::uint8_t> mask,
                                    std::vector<std::uint8_t>* guarded) {
  check_square(w1, mask.size());
  Tensor<double> a = w1;
  for (std::size_t i = 0; i < mask.size(); ++i) a(i, i) += mask[i] ? 1.0 : 0.0;
  return row_normalize(a, guarded);
}

RolloutResult rollout(const AttentionTrace& trace) {
  const std::size_t L = trace_length(trace);
  check_square(trace.weights[0], L);
  return chain(trace, residual_mix(trace.weights[0]), RolloutKind::Original);
}

RolloutResult revised_rollout(const AttentionTrace& trace, std::span<const std::uint8_t> mask) {
  const std::size_t L = trace_length(trace);
  if (mask.size() != L) throw ShapeError("revised rollout: mask length differs from the attention size");
  std::vector<std::uint8_t> guarded;
  auto first = revised_first_factor(trace.weights[0], mask, &guarded);
  auto r = chain(trace, std::move(first), RolloutKind::Revised);
  r.guarded = std::move(guarded);
  return r;
}

ImportanceMap importance_map(const RolloutResult& r, std::size_t windows, std::size_t columns) {
  const std::size_t L = r.matrix.rows();
  if (windows * columns != L || r.matrix.cols() != L) {
    throw ShapeError("importance map: " + std::to_string(windows) + "x" + std::to_string(columns) +
                     " does not match rollout size " + std::to_string(L));
  }
  ImportanceMap m;
  m.windows = windows;
  m.columns = columns;
  m.importance.assign(L, 0.0);
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = 0; j < L; ++j) m.importance[j] += r.matrix(i, j);
  }
  for (auto& v : m.importance) v /= static_cast<double>(L);
  std::vector<std::size_t> order(L);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return m.importance[a] > m.importance[b]; });
  m.rank.assign(L, 0);
  for (std::size_t k = 0; k < L; ++k) m.rank[order[k]] = k + 1;
  return m;
}

std::vector<std::size_t> ImportanceMap::column_order() const {
  std::vector<double> mean(columns, 0.0);
  for (std::size_t i = 0; i < windows; ++i) {
    for (std::size_t j = 0; j < columns; ++j) mean[j] += static_cast<double>(rank_at(i, j));
  }
  std::vector<std::size_t> order(columns);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mean[a] < mean[b]; });
  return order;
}

std::vector<std::string> column_names(const FeatureSchema& schema) {
  std::vector<std::string> names;
  for (const auto& f : schema.features) names.push_back(f.name);
  names.emplace_back(kEntryCountName);
  return names;
}

void export_importance(const ImportanceMap& map, const std::vector<std::string>& names, const std::string& csv_path,
                       const std::string& svg_path) {
  if (names.size() != map.columns) throw ShapeError("export_importance: one name per column required");
  {
    std::ofstream out(csv_path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + csv_path);
    out << "window,feature,importance,rank\n";
    char buf[64];
    for (std::size_t i = 0; i < map.windows; ++i) {
      for (std::size_t j = 0; j < map.columns; ++j) {
        std::snprintf(buf, sizeof buf, "%.17g", map.at(i, j));
        out << i << ',' << names[j] << ',' << buf << ',' << map.rank_at(i, j) << '\n';
      }
    }
    if (!out) throw DataError("write failed: " + csv_path);
  }

  const auto order = map.column_order();
  const double hi = std::max(1e-300, *std::max_element(map.importance.begin(), map.importance.end()));
  const int cell = 36, left = 60, top = 120;
  const int width = left + cell * static_cast<int>(map.columns) + 20;
  const int height = top + cell * static_cast<int>(map.windows) + 20;
  std::ofstream out(svg_path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + svg_path);
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  for (std::size_t c = 0; c < order.size(); ++c) {
    const int x = left + cell * static_cast<int>(c) + cell / 2;
    out << "  <text x=\"" << x << "\" y=\"" << top - 6 << "\" transform=\"rotate(-60 " << x << ' ' << top - 6
        << ")\">" << xml_escape(names[order[c]]) << "</text>\n";
  }
  char fill[16];
  for (std::size_t i = 0; i < map.windows; ++i) {
    const int y = top + cell * static_cast<int>(i);
    out << "  <text x=\"" << left - 8 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"end\">w" << i
        << "</text>\n";
    for (std::size_t c = 0; c < order.size(); ++c) {
      const std::size_t j = order[c];
      const double t = std::clamp(map.at(i, j) / hi, 0.0, 1.0);
      const int shade = static_cast<int>(255.0 * (1.0 - t) + 0.5);
      std::snprintf(fill, sizeof fill, "#ff%02x%02x", shade, shade);
      const int x = left + cell * static_cast<int>(c);
      out << "  <rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\""
          << fill << "\" stroke=\"#999999\"/>\n";
      out << "  <text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"middle\">"
          << map.rank_at(i, j) << "</text>\n";
    }
  }
  out << "</svg>\n";
  if (!out) throw DataError("write failed: " + svg_path);
}

SampleExplanation explain_sample(const Checkpoint& ck, const Dataset& ds, const std::string& sample_id,
                                 RolloutKind kind) {
  const int idx = ds.find(sample_id);
  if (idx < 0) throw DataError("unknown sample id '" + sample_id + "'");
  const Dataset one = ds.subset({static_cast<std::size_t>(idx)});
  const auto inputs = ck.prepare(one);
  SampleExplanation e;
  const Architecture arch = ck.architecture();
  const auto params = ck.params.cast<double>();
  e.probability = predict(params, arch, inputs[0], &e.trace);
  e.mask = inputs[0].mask;
  e.rollout = kind == RolloutKind::Original ? rollout(e.trace) : revised_rollout(e.trace, e.mask);
  e.map = importance_map(e.rollout, inputs[0].windows, inputs[0].columns);
  return e;
}

}  // namespace summit
