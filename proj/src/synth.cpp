#include "summit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <cstdio>
#include <random>

#include "summit/error.hpp"
#include "summit/rng.hpp"

namespace summit {

void SynthConfig::validate() const {
  if (n_samples < 2) throw ConfigError("synth: n_samples must be at least 2");
  if (n_numerical == 0) throw ConfigError("synth: at least one numerical feature is required");
  if (n_categorical > 0 && categories_per_feature == 0) throw ConfigError("synth: categories_per_feature must be positive");
  if (!(missing_rate >= 0.0 && missing_rate < 1.0)) throw ConfigError("synth: missing_rate must lie in [0, 1)");
  if (!(observation_window > 0.0)) throw ConfigError("synth: observation_window must be positive");
  if (!(mean_events > 0.0)) throw ConfigError("synth: mean_events must be positive");
  if (!(prevalence > 0.0 && prevalence < 1.0)) throw ConfigError("synth: prevalence must lie in (0, 1)");
  if (prevalence * static_cast<double>(n_samples) < 1.0) throw ConfigError("synth: prevalence * n_samples must be >= 1");
  if (std::llround(prevalence * static_cast<double>(n_samples)) >= static_cast<long long>(n_samples)) {
    throw ConfigError("synth: prevalence leaves no negative samples");
  }
  if (!(label_noise >= 0.0 && label_noise < 0.5)) throw ConfigError("synth: label_noise must lie in [0, 0.5)");
}

std::optional<double> observed_mean(const RawSeries& s, std::size_t feature, std::size_t n_features) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < s.rows(); ++i) {
    const auto& c = s.cell(i, feature, n_features);
    if (c) {
      sum += *c;
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

double raw_missing_rate(const Dataset& ds) {
  std::size_t missing = 0, total = 0;
  for (const auto& s : ds.samples) {
    for (const auto& c : s.cells) {
      ++total;
      if (!c) ++missing;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(missing) / static_cast<double>(total);
}

Dataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.observation_window = cfg.observation_window;
  ds.provenance = "synthetic(seed=" + std::to_string(cfg.seed) + ")";
  for (std::size_t f = 0; f < cfg.n_numerical; ++f) {
    ds.schema.features.push_back({"num" + std::to_string(f), FeatureKind::Numerical, {}});
  }
  for (std::size_t f = 0; f < cfg.n_categorical; ++f) {
    FeatureDescriptor d{"cat" + std::to_string(f), FeatureKind::Categorical, {}};
    for (std::size_t c = 0; c < cfg.categories_per_feature; ++c) d.categories.push_back("c" + std::to_string(c));
    ds.schema.features.push_back(std::move(d));
  }
  const std::size_t n = ds.schema.size();
  const double T = cfg.observation_window;
  const double rate = cfg.mean_events / T;
  constexpr double kObservationNoise = 0.5;

  ds.samples.resize(cfg.n_samples);
  for (std::size_t s = 0; s < cfg.n_samples; ++s) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(s)));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::exponential_distribution<double> gap(rate);

    std::vector<double> level(cfg.n_numerical);
    for (auto& l : level) l = normal(rng);
    std::vector<std::size_t> dominant(cfg.n_categorical);
    std::uniform_int_distribution<std::size_t> pick(0, cfg.categories_per_feature > 0 ? cfg.categories_per_feature - 1 : 0);
    for (auto& d : dominant) d = pick(rng);

    RawSeries& r = ds.samples[s];
    char id[32];
    std::snprintf(id, sizeof id, "s%06zu", s);
    r.id = id;
    for (double t = gap(rng); t < T; t += gap(rng)) {
      r.timestamps.push_back(t);
      for (std::size_t f = 0; f < n; ++f) {
        const bool drop = unit(rng) < cfg.missing_rate;
        if (f < cfg.n_numerical) {
          const double v = level[f] + kObservationNoise * normal(rng);
          r.cells.push_back(drop ? std::nullopt : std::optional<double>(v));
        } else {
          const std::size_t c = unit(rng) < 0.7 ? dominant[f - cfg.n_numerical] : pick(rng);
          r.cells.push_back(drop ? std::nullopt : std::optional<double>(static_cast<double>(c)));
        }
      }
    }
  }

  // Noiseless rule: min over designated features of the observed mean.
  const std::size_t designated = std::min<std::size_t>(2, cfg.n_numerical);
  std::vector<double> score(cfg.n_samples);
  for (std::size_t s = 0; s < cfg.n_samples; ++s) {
    double v = std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < designated; ++f) {
      auto m = observed_mean(ds.samples[s], f, n);
      v = std::min(v, m ? *m : -std::numeric_limits<double>::infinity());
    }
    score[s] = v;
  }
  const auto n_pos = static_cast<std::size_t>(std::llround(cfg.prevalence * static_cast<double>(cfg.n_samples)));
  std::vector<std::size_t> order(cfg.n_samples);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  for (std::size_t i = 0; i < n_pos; ++i) ds.samples[order[i]].label = 1;

  Rng noise(derive_seed(cfg.seed, "label-noise"));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::size_t> flip_pos, negatives;
  for (std::size_t s = 0; s < cfg.n_samples; ++s) {
    if (ds.samples[s].label == 1) {
      if (unit(noise) < cfg.label_noise) flip_pos.push_back(s);
    } else {
      negatives.push_back(s);
    }
  }
  std::shuffle(negatives.begin(), negatives.end(), noise);
  const std::size_t flips = std::min(flip_pos.size(), negatives.size());
  for (std::size_t i = 0; i < flips; ++i) {
    ds.samples[flip_pos[i]].label = 0;
    ds.samples[negatives[i]].label = 1;
  }

  Rng timing(derive_seed(cfg.seed, "event-time"));
  std::uniform_real_distribution<double> onset(0.0, 1.0);
  for (auto& r : ds.samples) {
    // Uniform on (0, T]: 1 - U maps [0, 1) onto (0, 1].
    const double u = onset(timing);
    r.event_time = r.label == 1 ? T * (1.0 - u) : T;
  }
  ds.validate();
  return ds;
}

}  // namespace summit
