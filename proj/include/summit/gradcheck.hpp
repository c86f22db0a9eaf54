#pragma once

#include <functional>
#include <map>
#include <string>

#include "summit/tensor.hpp"

namespace summit {

struct GradReport {
  std::map<std::string, double> max_rel_error;  // per parameter path
  double global_max = 0.0;
  std::string worst_path;
  double tolerance = 0.0;
  bool pass = false;
};

/// Loss evaluated at `params`. When `grads` is non-null the callee adds the
/// analytic gradient into it (it arrives zeroed and shaped like params).
using LossFn = std::function<double(const ParamSet<double>& params, ParamSet<double>* grads)>;

/// Compares analytic gradients with central differences
/// (L(theta + eps) - L(theta - eps)) / (2 eps) for every scalar parameter.
/// Relative error is |a - f| / max(|a|, |f|, floor); the floor keeps
/// vanishing gradients from dividing by zero.
GradReport grad_check(const LossFn& loss_fn, ParamSet<double> params, double eps = 1e-5,
                      double tol = 1e-4, double floor = 1e-6);

}  // namespace summit
