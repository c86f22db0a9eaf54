#include "summit/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "summit/error.hpp"

namespace summit {

GradReport grad_check(const LossFn& loss_fn, ParamSet<double> params, double eps, double tol, double floor) {
  GradReport report;
  report.tolerance = tol;
  ParamSet<double> analytic = params.zeros_like();
  const double base = loss_fn(params, &analytic);
  if (!std::isfinite(base)) throw NumericError("grad_check: non-finite loss at the unperturbed point");

  for (auto& [path, tensor] : params) {
    double worst = 0.0;
    const auto& a = analytic.at(path);
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      const double saved = tensor[i];
      tensor[i] = saved + eps;
      const double up = loss_fn(params, nullptr);
      tensor[i] = saved - eps;
      const double down = loss_fn(params, nullptr);
      tensor[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("grad_check: non-finite loss when perturbing " + path + "[" + std::to_string(i) + "]");
      }
      const double fd = (up - down) / (2.0 * eps);
      const double denom = std::max({std::abs(a[i]), std::abs(fd), floor});
      worst = std::max(worst, std::abs(a[i] - fd) / denom);
    }
    report.max_rel_error[path] = worst;
    if (worst >= report.global_max) {
      report.global_max = worst;
      report.worst_path = path;
    }
  }
  report.pass = report.global_max < tol;
  return report;
}

}  // namespace summit
