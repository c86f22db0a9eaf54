#include "summit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "summit/error.hpp"
#include "summit/rng.hpp"

namespace summit {

namespace {

using Weights = std::vector<std::int64_t>;

void check_sizes(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw ShapeError(std::string(what) + ": scores and labels differ in length");
  if (a == 0) throw DataError(std::string(what) + ": empty input");
}

/// Scores pre-sorted once; every bootstrap replicate reuses the order and
/// only changes per-point multiplicities.
struct Ranked {
  std::vector<std::size_t> desc;        // indices by descending score
  std::vector<std::size_t> group_end;   // exclusive end (into desc) of each tie group
  std::vector<std::size_t> by_time;     // indices by ascending time (c-index only)
  std::vector<std::size_t> score_rank;  // dense rank, ascending score, 1-based

  Ranked(std::span<const double> scores, std::span<const double> times) {
    desc.resize(scores.size());
    std::iota(desc.begin(), desc.end(), 0);
    std::stable_sort(desc.begin(), desc.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    for (std::size_t i = 1; i <= desc.size(); ++i) {
      if (i == desc.size() || scores[desc[i]] != scores[desc[i - 1]]) group_end.push_back(i);
    }
    if (!times.empty()) {
      by_time.resize(times.size());
      std::iota(by_time.begin(), by_time.end(), 0);
      std::stable_sort(by_time.begin(), by_time.end(), [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
      score_rank.assign(scores.size(), 0);
      std::size_t rank = group_end.size();
      std::size_t start = 0;
      for (auto end : group_end) {
        for (std::size_t k = start; k < end; ++k) score_rank[desc[k]] = rank;
        --rank;
        start = end;
      }
    }
  }
};

std::optional<double> auprc_weighted(const Ranked& r, std::span<const int> labels, const Weights* w) {
  double cum_tp = 0, cum_n = 0, ap = 0;
  std::size_t start = 0;
  for (auto end : r.group_end) {
    double tp = 0, cnt = 0;
    for (std::size_t k = start; k < end; ++k) {
      const std::size_t i = r.desc[k];
      const double wi = w ? static_cast<double>((*w)[i]) : 1.0;
      cnt += wi;
      if (labels[i] == 1) tp += wi;
    }
    cum_tp += tp;
    cum_n += cnt;
    if (tp > 0) ap += tp * (cum_tp / cum_n);
    start = end;
  }
  const double negatives = cum_n - cum_tp;
  if (cum_tp == 0 || negatives == 0) return std::nullopt;
  return ap / cum_tp;
}

std::optional<double> auroc_weighted(const Ranked& r, std::span<const int> labels, const Weights* w) {
  // Walk groups from the lowest score upwards; count doubled to stay integral.
  std::int64_t neg_below = 0, num2 = 0, pos_total = 0;
  for (std::size_t g = r.group_end.size(); g-- > 0;) {
    const std::size_t start = g == 0 ? 0 : r.group_end[g - 1];
    std::int64_t pos = 0, neg = 0;
    for (std::size_t k = start; k < r.group_end[g]; ++k) {
      const std::size_t i = r.desc[k];
      const std::int64_t wi = w ? (*w)[i] : 1;
      (labels[i] == 1 ? pos : neg) += wi;
    }
    num2 += pos * (2 * neg_below + neg);
    neg_below += neg;
    pos_total += pos;
  }
  if (pos_total == 0 || neg_below == 0) return std::nullopt;
  return static_cast<double>(num2) / (2.0 * static_cast<double>(pos_total) * static_cast<double>(neg_below));
}

std::optional<double> accuracy_weighted(std::span<const double> scores, std::span<const int> labels, double threshold,
                                        const Weights* w) {
  std::int64_t correct = 0, total = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const std::int64_t wi = w ? (*w)[i] : 1;
    total += wi;
    if ((scores[i] >= threshold ? 1 : 0) == labels[i]) correct += wi;
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(total);
}

class Fenwick {
 public:
  explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}
  void add(std::size_t i, std::int64_t v) {
    for (; i < tree_.size(); i += i & (~i + 1)) tree_[i] += v;
  }
  std::int64_t prefix(std::size_t i) const {
    std::int64_t s = 0;
    for (; i > 0; i -= i & (~i + 1)) s += tree_[i];
    return s;
  }

 private:
  std::vector<std::int64_t> tree_;
};

std::optional<double> c_index_weighted(const Ranked& r, std::span<const double> times, std::span<const int> labels,
                                       const Weights* w) {
  // Times descending; the tree holds every point with a strictly later time.
  Fenwick tree(r.group_end.size());
  std::int64_t in_tree = 0, num2 = 0, comparable = 0;
  std::size_t end = r.by_time.size();
  while (end > 0) {
    std::size_t start = end - 1;
    const double t = times[r.by_time[start]];
    while (start > 0 && times[r.by_time[start - 1]] == t) --start;
    for (std::size_t k = start; k < end; ++k) {
      const std::size_t i = r.by_time[k];
      const std::int64_t wi = w ? (*w)[i] : 1;
      if (labels[i] != 1 || wi == 0) continue;
      const std::size_t rank = r.score_rank[i];
      const std::int64_t below = tree.prefix(rank - 1);
      const std::int64_t equal = tree.prefix(rank) - below;
      num2 += wi * (2 * below + equal);
      comparable += wi * in_tree;
    }
    for (std::size_t k = start; k < end; ++k) {
      const std::size_t i = r.by_time[k];
      const std::int64_t wi = w ? (*w)[i] : 1;
      if (wi == 0) continue;
      tree.add(r.score_rank[i], wi);
      in_tree += wi;
    }
    end = start;
  }
  if (comparable == 0) return std::nullopt;
  return static_cast<double>(num2) / (2.0 * static_cast<double>(comparable));
}

std::optional<double> evaluate(Metric m, const Ranked& r, std::span<const double> scores, std::span<const int> labels,
                               std::span<const double> times, double threshold, const Weights* w) {
  switch (m) {
    case Metric::Auprc: return auprc_weighted(r, labels, w);
    case Metric::Auroc: return auroc_weighted(r, labels, w);
    case Metric::Accuracy: return accuracy_weighted(scores, labels, threshold, w);
    case Metric::CIndex: return c_index_weighted(r, times, labels, w);
  }
  return std::nullopt;
}

double require(std::optional<double> v, const char* what) {
  if (!v) throw DataError(std::string(what) + " is undefined for this input (needs both classes / comparable pairs)");
  return *v;
}

}  // namespace

std::string to_string(Metric m) {
  switch (m) {
    case Metric::Auprc: return "auprc";
    case Metric::Auroc: return "auroc";
    case Metric::Accuracy: return "accuracy";
    case Metric::CIndex: return "c_index";
  }
  return "unknown";
}

double auprc(std::span<const double> scores, std::span<const int> labels) {
  check_sizes(scores.size(), labels.size(), "auprc");
  return require(auprc_weighted(Ranked(scores, {}), labels, nullptr), "auprc");
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
  check_sizes(scores.size(), labels.size(), "auroc");
  return require(auroc_weighted(Ranked(scores, {}), labels, nullptr), "auroc");
}

double accuracy(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_sizes(scores.size(), labels.size(), "accuracy");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("accuracy: threshold must lie in [0, 1]");
  return require(accuracy_weighted(scores, labels, threshold, nullptr), "accuracy");
}

double c_index(std::span<const double> scores, std::span<const double> event_times, std::span<const int> labels) {
  check_sizes(scores.size(), labels.size(), "c_index");
  if (event_times.size() != scores.size()) throw ShapeError("c_index: event_times length mismatch");
  return require(c_index_weighted(Ranked(scores, event_times), event_times, labels, nullptr), "c_index");
}

ConfidenceInterval bootstrap_ci(Metric metric, std::span<const double> scores, std::span<const int> labels,
                                std::span<const double> event_times, const BootstrapOptions& opts) {
  check_sizes(scores.size(), labels.size(), "bootstrap_ci");
  if (metric == Metric::CIndex && event_times.size() != scores.size()) {
    throw ShapeError("bootstrap_ci: c_index needs one event time per sample");
  }
  if (!(opts.level > 0.0 && opts.level < 1.0)) throw ConfigError("bootstrap_ci: level must lie in (0, 1)");
  const Ranked ranked(scores, metric == Metric::CIndex ? event_times : std::span<const double>{});
  const double point =
      require(evaluate(metric, ranked, scores, labels, event_times, opts.threshold, nullptr), to_string(metric).c_str());

  const std::size_t n = scores.size();
  std::vector<double> values;
  values.reserve(opts.n_boot);
  ConfidenceInterval ci;
  Weights w(n);
  for (std::size_t b = 0; b < opts.n_boot; ++b) {
    Rng rng(derive_seed(opts.seed, static_cast<std::uint64_t>(b)));
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::optional<double> v;
    for (std::size_t attempt = 0; attempt <= opts.max_redraws && !v; ++attempt) {
      std::fill(w.begin(), w.end(), 0);
      for (std::size_t k = 0; k < n; ++k) ++w[pick(rng)];
      v = evaluate(metric, ranked, scores, labels, event_times, opts.threshold, &w);
    }
    if (v) {
      values.push_back(*v);
    } else {
      ++ci.skipped;
    }
  }
  ci.replicates = values.size();
  ci.reliable = ci.skipped * 2 <= opts.n_boot && !values.empty();
  if (values.empty()) return ci;
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
  };
  // A skewed replicate distribution can leave the point outside the raw
  // percentile band; the reported interval always contains it.
  ci.low = std::min(point, quantile((1.0 - opts.level) / 2.0));
  ci.high = std::max(point, quantile(1.0 - (1.0 - opts.level) / 2.0));
  return ci;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  j["n_positive"] = n_positive;
  j["n_negative"] = n_negative;
  j["threshold"] = threshold;
  j["bootstrap"] = {{"seed", bootstrap_seed}, {"replicates", bootstrap_replicates}};
  nlohmann::json m = nlohmann::json::object();
  for (const auto& [name, v] : metrics) {
    nlohmann::json e;
    e["point"] = v.point;
    if (v.ci) {
      e["ci_low"] = v.ci->low;
      e["ci_high"] = v.ci->high;
      e["ci_replicates"] = v.ci->replicates;
      e["ci_skipped"] = v.ci->skipped;
      e["ci_reliable"] = v.ci->reliable;
    }
    m[name] = std::move(e);
  }
  j["metrics"] = std::move(m);
  return j;
}

MetricsReport compute_report(std::span<const double> scores, std::span<const int> labels,
                             std::span<const double> event_times, const BootstrapOptions& opts) {
  check_sizes(scores.size(), labels.size(), "compute_report");
  MetricsReport report;
  report.threshold = opts.threshold;
  report.bootstrap_seed = opts.seed;
  report.bootstrap_replicates = opts.n_boot;
  for (int y : labels) (y == 1 ? report.n_positive : report.n_negative)++;
  std::vector<Metric> todo = {Metric::Auprc, Metric::Auroc, Metric::Accuracy};
  if (!event_times.empty()) todo.push_back(Metric::CIndex);
  for (auto m : todo) {
    MetricValue v;
    switch (m) {
      case Metric::Auprc: v.point = auprc(scores, labels); break;
      case Metric::Auroc: v.point = auroc(scores, labels); break;
      case Metric::Accuracy: v.point = accuracy(scores, labels, opts.threshold); break;
      case Metric::CIndex: v.point = c_index(scores, event_times, labels); break;
    }
    if (opts.n_boot > 0) v.ci = bootstrap_ci(m, scores, labels, event_times, opts);
    report.metrics[to_string(m)] = v;
  }
  return report;
}

}  // namespace summit
