#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <set>

#include "summit/error.hpp"
#include "summit/metrics.hpp"
#include "summit/rng.hpp"

using namespace summit;

namespace {

struct Instance {
  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<double> times;
};

// Scores drawn from a small grid so ties are common.
Instance random_instance(std::uint64_t seed, std::size_t max_n = 200) {
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> size(2, max_n);
  std::uniform_int_distribution<int> grid(0, 20);
  std::uniform_int_distribution<int> tgrid(1, 30);
  std::bernoulli_distribution coin(0.3);
  Instance x;
  const std::size_t n = size(rng);
  for (std::size_t i = 0; i < n; ++i) {
    x.scores.push_back(grid(rng) / 20.0);
    x.labels.push_back(coin(rng) ? 1 : 0);
    x.times.push_back(tgrid(rng));
  }
  x.labels[0] = 1;
  x.labels[1] = 0;
  x.times[0] = 0.0;  // guarantees a comparable pair
  return x;
}

double brute_auroc(const Instance& x) {
  double hits = 0, pairs = 0;
  for (std::size_t i = 0; i < x.scores.size(); ++i) {
    for (std::size_t j = 0; j < x.scores.size(); ++j) {
      if (x.labels[i] != 1 || x.labels[j] != 0) continue;
      pairs += 1;
      if (x.scores[i] > x.scores[j]) hits += 1;
      if (x.scores[i] == x.scores[j]) hits += 0.5;
    }
  }
  return hits / pairs;
}

// Precision-recall curve swept over every distinct threshold, integrated as
// a right-continuous step function.
double brute_auprc(const Instance& x) {
  std::set<double, std::greater<>> thresholds(x.scores.begin(), x.scores.end());
  const double npos = static_cast<double>(std::count(x.labels.begin(), x.labels.end(), 1));
  double area = 0, prev_recall = 0;
  for (double t : thresholds) {
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < x.scores.size(); ++i) {
      if (x.scores[i] < t) continue;
      (x.labels[i] == 1 ? tp : fp) += 1;
    }
    const double recall = tp / npos;
    area += (recall - prev_recall) * tp / (tp + fp);
    prev_recall = recall;
  }
  return area;
}

std::optional<double> brute_c_index(const Instance& x) {
  double hits = 0, pairs = 0;
  for (std::size_t i = 0; i < x.scores.size(); ++i) {
    if (x.labels[i] != 1) continue;
    for (std::size_t j = 0; j < x.scores.size(); ++j) {
      if (!(x.times[i] < x.times[j])) continue;
      pairs += 1;
      if (x.scores[i] > x.scores[j]) hits += 1;
      if (x.scores[i] == x.scores[j]) hits += 0.5;
    }
  }
  if (pairs == 0) return std::nullopt;
  return hits / pairs;
}

}  // namespace

TEST_CASE("worked examples") {
  const std::vector<double> s1 = {0.9, 0.1}, s2 = {0.1, 0.9};
  const std::vector<int> y = {1, 0};
  CHECK(auprc(s1, y) == 1.0);
  CHECK(auprc(s2, y) == 0.5);
  CHECK(auroc(s1, y) == 1.0);
  CHECK(auroc(std::vector<double>{3, 2, 1, 0}, std::vector<int>{1, 0, 1, 0}) == 0.75);
  CHECK(auroc(std::vector<double>{0.4, 0.4, 0.4}, std::vector<int>{1, 0, 0}) == 0.5);
  CHECK(accuracy(s1, y) == 1.0);
  CHECK(accuracy(std::vector<double>{0.5}, std::vector<int>{1}) == 1.0);
  CHECK(c_index(std::vector<double>{0.9, 0.8, 0.1}, std::vector<double>{1, 2, 3}, std::vector<int>{1, 1, 0}) == 1.0);
  CHECK(c_index(std::vector<double>{0.1, 0.5, 0.9}, std::vector<double>{3, 2, 1}, std::vector<int>{1, 1, 1}) == 1.0);
  CHECK(c_index(std::vector<double>{0.3, 0.3, 0.3}, std::vector<double>{1, 2, 3}, std::vector<int>{1, 1, 1}) == 0.5);
}

TEST_CASE("undefined and malformed inputs") {
  const std::vector<double> s = {0.2, 0.8};
  CHECK_THROWS_AS(auprc(s, std::vector<int>{1, 1}), DataError);
  CHECK_THROWS_AS(auroc(s, std::vector<int>{0, 0}), DataError);
  CHECK_THROWS_AS(auroc(s, std::vector<int>{0}), ShapeError);
  CHECK_THROWS_AS(accuracy(std::vector<double>{}, std::vector<int>{}), DataError);
  CHECK_THROWS_AS(accuracy(s, std::vector<int>{0, 1}, 1.5), ConfigError);
  CHECK_THROWS_AS(c_index(s, std::vector<double>{1, 2}, std::vector<int>{0, 0}), DataError);
  CHECK_THROWS_AS(c_index(s, std::vector<double>{1}, std::vector<int>{1, 0}), ShapeError);
}

TEST_CASE("auroc, auprc and c-index match brute-force oracles on random instances") {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto x = random_instance(seed);
    CHECK(auroc(x.scores, x.labels) == brute_auroc(x));
    CHECK(auprc(x.scores, x.labels) == doctest::Approx(brute_auprc(x)).epsilon(1e-12));
    const auto c = brute_c_index(x);
    if (c) {
      CHECK(c_index(x.scores, x.times, x.labels) == *c);
    } else {
      CHECK_THROWS_AS(c_index(x.scores, x.times, x.labels), DataError);
    }
  }
}

TEST_CASE("metrics depend only on the score order") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto x = random_instance(seed + 5000);
    for (int map = 0; map < 2; ++map) {
      Instance y = x;
      for (auto& s : y.scores) s = map == 0 ? std::exp(s) : 3.0 * s - 7.0;
      CHECK(auroc(y.scores, y.labels) == auroc(x.scores, x.labels));
      CHECK(auprc(y.scores, y.labels) == auprc(x.scores, x.labels));
      CHECK(c_index(y.scores, y.times, y.labels) == c_index(x.scores, x.times, x.labels));
    }
    // Accuracy moves with the threshold.
    Instance z = x;
    for (auto& s : z.scores) s = 0.5 * s + 0.25;
    CHECK(accuracy(z.scores, z.labels, 0.5 * 0.5 + 0.25) == accuracy(x.scores, x.labels, 0.5));
  }
}

TEST_CASE("accuracy complements under label flip") {
  const auto x = random_instance(42);
  auto flipped = x.labels;
  for (auto& y : flipped) y = 1 - y;
  CHECK(accuracy(x.scores, flipped) == doctest::Approx(1.0 - accuracy(x.scores, x.labels)).epsilon(1e-15));
}

TEST_CASE("c-index without censoring is the mean of pairwise two-sample auroc") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    std::normal_distribution<double> z;
    const std::size_t n = 40;
    std::vector<double> scores(n), times(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = std::round(z(rng) * 4) / 4;
      times[i] = static_cast<double>(i) + 0.5;
    }
    std::shuffle(times.begin(), times.end(), rng);
    double sum = 0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (!(times[i] < times[j])) continue;
        // The earlier event is the positive of a two-sample problem.
        sum += auroc(std::vector<double>{scores[i], scores[j]}, std::vector<int>{1, 0});
        ++pairs;
      }
    }
    CHECK(c_index(scores, times, std::vector<int>(n, 1)) == doctest::Approx(sum / pairs).epsilon(1e-14));
  }
}

TEST_CASE("random scores give average precision near the prevalence") {
  Rng rng(11);
  std::uniform_real_distribution<double> u;
  for (double pi : {0.1, 0.3}) {
    std::vector<double> s(10000);
    std::vector<int> y(10000);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = u(rng);
      y[i] = u(rng) < pi;
    }
    CHECK(std::abs(auprc(s, y) - pi) <= 0.05);
    CHECK(std::abs(auroc(s, y) - 0.5) <= 0.05);
  }
}

TEST_CASE("bootstrap replicates match explicit resampling") {
  const auto x = random_instance(7, 60);
  BootstrapOptions opts;
  opts.n_boot = 200;
  opts.seed = 1234;
  for (auto metric : {Metric::Auprc, Metric::Auroc, Metric::CIndex, Metric::Accuracy}) {
    std::vector<double> values;
    std::size_t skipped = 0;
    for (std::size_t b = 0; b < opts.n_boot; ++b) {
      Rng rng(derive_seed(opts.seed, static_cast<std::uint64_t>(b)));
      std::uniform_int_distribution<std::size_t> pick(0, x.scores.size() - 1);
      std::optional<double> v;
      for (std::size_t attempt = 0; attempt <= opts.max_redraws && !v; ++attempt) {
        Instance r;
        for (std::size_t k = 0; k < x.scores.size(); ++k) {
          const auto i = pick(rng);
          r.scores.push_back(x.scores[i]);
          r.labels.push_back(x.labels[i]);
          r.times.push_back(x.times[i]);
        }
        try {
          switch (metric) {
            case Metric::Auprc: v = auprc(r.scores, r.labels); break;
            case Metric::Auroc: v = auroc(r.scores, r.labels); break;
            case Metric::CIndex: v = c_index(r.scores, r.times, r.labels); break;
            case Metric::Accuracy: v = accuracy(r.scores, r.labels); break;
          }
        } catch (const DataError&) {
        }
      }
      if (v) {
        values.push_back(*v);
      } else {
        ++skipped;
      }
    }
    std::sort(values.begin(), values.end());
    auto q = [&](double p) {
      const double pos = p * static_cast<double>(values.size() - 1);
      const auto lo = static_cast<std::size_t>(pos);
      const auto hi = std::min(lo + 1, values.size() - 1);
      return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
    };
    const auto ci = bootstrap_ci(metric, x.scores, x.labels, x.times, opts);
    INFO(to_string(metric));
    CHECK(ci.replicates == values.size());
    CHECK(ci.skipped == skipped);
    double point = 0;
    switch (metric) {
      case Metric::Auprc: point = auprc(x.scores, x.labels); break;
      case Metric::Auroc: point = auroc(x.scores, x.labels); break;
      case Metric::CIndex: point = c_index(x.scores, x.times, x.labels); break;
      case Metric::Accuracy: point = accuracy(x.scores, x.labels); break;
    }
    CHECK(ci.low == doctest::Approx(std::min(point, q(0.025))).epsilon(1e-12));
    CHECK(ci.high == doctest::Approx(std::max(point, q(0.975))).epsilon(1e-12));
  }
}

TEST_CASE("bootstrap determinism, degenerate inputs and skipped replicates") {
  const auto x = random_instance(3);
  BootstrapOptions opts;
  opts.n_boot = 300;
  opts.seed = 5;
  const auto a = bootstrap_ci(Metric::Auprc, x.scores, x.labels, {}, opts);
  const auto b = bootstrap_ci(Metric::Auprc, x.scores, x.labels, {}, opts);
  CHECK(a.low == b.low);
  CHECK(a.high == b.high);
  opts.seed = 6;
  const auto c = bootstrap_ci(Metric::Auprc, x.scores, x.labels, {}, opts);
  CHECK((c.low != a.low || c.high != a.high));

  const std::vector<double> perfect = {0.9, 0.8, 0.7, 0.2, 0.1, 0.05};
  const std::vector<int> y = {1, 1, 1, 0, 0, 0};
  const auto p = bootstrap_ci(Metric::Auroc, perfect, y, {}, opts);
  CHECK(p.low == 1.0);
  CHECK(p.high == 1.0);

  // One positive in a thousand: most resamples have no positive at all.
  std::vector<double> s(1000);
  std::vector<int> rare(1000, 0);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<double>(i);
  rare[999] = 1;
  opts.n_boot = 100;
  opts.max_redraws = 0;
  const auto r = bootstrap_ci(Metric::Auroc, s, rare, {}, opts);
  CHECK(r.skipped > 0);
  CHECK(r.skipped + r.replicates == 100);
  CHECK(r.reliable == (r.skipped * 2 <= 100));
  CHECK_THROWS_AS(bootstrap_ci(Metric::Auroc, s, std::vector<int>(1000, 0), {}, opts), DataError);
}

TEST_CASE("bootstrap intervals narrow as the test set grows") {
  auto width = [](std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> z;
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = i % 5 == 0;
      s[i] = z(rng) + (y[i] ? 1.0 : 0.0);
    }
    BootstrapOptions opts;
    opts.n_boot = 200;
    opts.seed = seed;
    const auto ci = bootstrap_ci(Metric::Auprc, s, y, {}, opts);
    return ci.high - ci.low;
  };
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const double w100 = width(100, seed), w1000 = width(1000, seed), w10000 = width(10000, seed);
    CHECK(w100 > w1000);
    CHECK(w1000 > w10000);
  }
}

TEST_CASE("report contents and interval ordering") {
  const auto x = random_instance(21);
  BootstrapOptions opts;
  opts.n_boot = 100;
  opts.seed = 9;
  const auto rep = compute_report(x.scores, x.labels, x.times, opts);
  CHECK(rep.metrics.size() == 4);
  CHECK(rep.n_positive + rep.n_negative == x.scores.size());
  for (const auto& [name, v] : rep.metrics) {
    REQUIRE(v.ci.has_value());
    CHECK(v.ci->low <= v.point);
    CHECK(v.point <= v.ci->high);
    CHECK(v.point >= 0.0);
    CHECK(v.point <= 1.0);
  }
  const auto j = rep.to_json();
  CHECK(j["metrics"]["auprc"]["point"].get<double>() == rep.metrics.at("auprc").point);
  CHECK(j["bootstrap"]["seed"].get<std::uint64_t>() == 9);
  CHECK(compute_report(x.scores, x.labels, {}, opts).metrics.count("c_index") == 0);
}

TEST_CASE("a thousand replicates over ten thousand points stays fast") {
  Rng rng(1);
  std::normal_distribution<double> z;
  const std::size_t n = 10000;
  std::vector<double> s(n), t(n);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = i % 10 == 0;
    s[i] = z(rng) + y[i];
    t[i] = std::abs(z(rng)) * 48;
  }
  BootstrapOptions opts;
  opts.seed = 3;
  for (auto m : {Metric::Auprc, Metric::Auroc, Metric::Accuracy, Metric::CIndex}) {
    const auto start = std::chrono::steady_clock::now();
    const auto ci = bootstrap_ci(m, s, y, t, opts);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    INFO(to_string(m), " ", secs, " s");
    CHECK(secs < 5.0);
    CHECK(ci.replicates == 1000);
  }
}
