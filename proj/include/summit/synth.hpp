#pragma once

#include <cstdint>
#include <vector>

#include "summit/dataset.hpp"

namespace summit {

/// Synthetic irregular multivariate series with a known labelling rule.
///
/// Event times follow a homogeneous Poisson process over [0, T); every cell is
/// dropped independently with probability `missing_rate`. Each sample draws a
/// latent level per numerical feature and observes it with Gaussian noise.
/// The label is positive when the observed mean of every designated feature
/// (the first min(2, n_numerical) numerical features) exceeds a dataset-level
/// threshold chosen so that exactly round(prevalence * n) samples are
/// positive. Label noise flips each positive with probability `label_noise`
/// and flips the same number of negatives, so prevalence stays exact.
struct SynthConfig {
  std::size_t n_samples = 1000;
  std::size_t n_numerical = 4;
  std::size_t n_categorical = 1;
  std::size_t categories_per_feature = 3;
  double missing_rate = 0.75;
  double observation_window = 48.0;
  double mean_events = 12.0;
  double prevalence = 0.1;
  double label_noise = 0.05;
  std::uint64_t seed = 7;

  void validate() const;
};

Dataset generate_synthetic(const SynthConfig& cfg);

/// Fraction of MISSING cells over all raw rows and features.
double raw_missing_rate(const Dataset& ds);

/// Observed mean of one feature over a sample's rows; nullopt when never observed.
std::optional<double> observed_mean(const RawSeries& s, std::size_t feature, std::size_t n_features);

}  // namespace summit
