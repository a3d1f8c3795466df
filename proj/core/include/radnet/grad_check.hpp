#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "radnet/array.hpp"

namespace radnet::ad {

struct GradCheckOptions {
  double step = 1e-5;
  /// Denominator floor: entries whose analytic and numeric magnitudes are
  /// both below this are effectively compared in absolute terms.
  double magnitude_floor = 1e-6;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

/// Compares the reverse-mode gradient of `loss` w.r.t. every entry of
/// `params` with central finite differences. `loss` must rebuild its graph on
/// each call and return a single-element array.
GradCheckReport grad_check(const std::function<DiffArray()>& loss, std::vector<DiffArray> params,
                           const GradCheckOptions& options = {});

}  // namespace radnet::ad
