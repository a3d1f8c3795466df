#include "radnet/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace radnet::ad {

GradCheckReport grad_check(const std::function<DiffArray()>& loss, std::vector<DiffArray> params,
                           const GradCheckOptions& options) {
  for (auto& p : params) p.zero_grad();
  loss().backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(p.grad());

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto values = params[pi].mutable_values();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double saved = values[j];
      values[j] = saved + options.step;
      const double up = loss().item();
      values[j] = saved - options.step;
      const double down = loss().item();
      values[j] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[pi][j];
      const double denom =
          std::max({std::abs(a), std::abs(numeric), options.magnitude_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.checked;
      if (rel > report.max_relative_error || report.checked == 1) {
        report.max_relative_error = rel;
        report.worst_param = pi;
        report.worst_index = j;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  for (auto& p : params) p.zero_grad();
  return report;
}

}  // namespace radnet::ad
