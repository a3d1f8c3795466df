#pragma once

#include <cstddef>
#include <span>

namespace radnet::incident {

/// Generalized Pareto fit to threshold excesses y > 0.
struct GpdFit {
  double shape = 0.0;  // γ
  double scale = 1.0;  // σ
  double log_likelihood = 0.0;
  bool moments_fallback = false;
};

/// Search interval for the profile likelihood over γ.
inline constexpr double kShapeMin = -0.5;
inline constexpr double kShapeMax = 1.0;
/// |γ| below this is treated as the exponential limit.
inline constexpr double kShapeZero = 1e-8;

double gpd_log_likelihood(std::span<const double> excesses, double shape, double scale);

/// σ maximizing the likelihood for fixed γ (root of n = (1+γ)·Σ y/(σ+γy)).
double gpd_profile_scale(std::span<const double> excesses, double shape);

/// Maximum likelihood over γ ∈ [kShapeMin, kShapeMax]: coarse grid, then
/// golden-section refinement around the best cell. Falls back to the method
/// of moments when the likelihood is not finite. Requires ≥ 2 excesses.
GpdFit fit_gpd(std::span<const double> excesses);

GpdFit gpd_moments(std::span<const double> excesses);

/// Score level exceeded with probability `risk` given `n` observations of
/// which `n_excess` lie above `u`.
double pot_quantile(double u, double shape, double scale, double risk, std::size_t n,
                    std::size_t n_excess);

/// Inverse CDF; `uniform` in [0, 1).
double gpd_inverse_cdf(double shape, double scale, double uniform);

}  // namespace radnet::incident
