#include "radnet/gpd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "radnet/error.hpp"

namespace radnet::incident {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::size_t kGridCells = 30;
constexpr int kGoldenIterations = 40;
constexpr int kBisectIterations = 200;

double profile_ll(std::span<const double> y, double shape) {
  return gpd_log_likelihood(y, shape, gpd_profile_scale(y, shape));
}

}  // namespace

double gpd_log_likelihood(std::span<const double> y, double shape, double scale) {
  if (!(scale > 0.0)) return kNegInf;
  const double n = static_cast<double>(y.size());
  if (std::abs(shape) < kShapeZero) {
    const double total = std::accumulate(y.begin(), y.end(), 0.0);
    return -n * std::log(scale) - total / scale;
  }
  double acc = 0.0;
  for (double v : y) {
    const double z = 1.0 + shape * v / scale;
    if (!(z > 0.0)) return kNegInf;
    acc += std::log(z);
  }
  return -n * std::log(scale) - (1.0 + 1.0 / shape) * acc;
}

double gpd_profile_scale(std::span<const double> y, double shape) {
  if (y.empty()) throw ArgumentError("gpd_profile_scale: no excesses");
  const double n = static_cast<double>(y.size());
  const double ymax = *std::max_element(y.begin(), y.end());
  if (std::abs(shape) < kShapeZero) return std::accumulate(y.begin(), y.end(), 0.0) / n;

  // g(σ) = (1+γ)·Σ y/(σ+γy) − n is decreasing on the feasible range.
  auto g = [&](double s) {
    double acc = 0.0;
    for (double v : y) acc += v / (s + shape * v);
    return (1.0 + shape) * acc - n;
  };
  double lo = shape < 0.0 ? -shape * ymax : 0.0;
  lo = std::max(lo * (1.0 + 1e-12), std::numeric_limits<double>::min());
  double hi = std::max(ymax, 1e-300);
  while (g(hi) > 0.0) {
    hi *= 2.0;
    if (!std::isfinite(hi)) return std::numeric_limits<double>::quiet_NaN();
  }
  for (int i = 0; i < kBisectIterations && hi - lo > 1e-14 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

GpdFit gpd_moments(std::span<const double> y) {
  if (y.size() < 2) throw ArgumentError("gpd_moments: need at least 2 excesses");
  const double n = static_cast<double>(y.size());
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double var = 0.0;
  for (double v : y) var += (v - mean) * (v - mean);
  var /= n - 1.0;
  GpdFit fit;
  fit.moments_fallback = true;
  if (!(var > 0.0)) {
    fit.shape = 0.0;
    fit.scale = std::max(mean, std::numeric_limits<double>::min());
  } else {
    const double ratio = mean * mean / var;
    fit.shape = 0.5 * (1.0 - ratio);
    fit.scale = 0.5 * mean * (ratio + 1.0);
  }
  fit.log_likelihood = gpd_log_likelihood(y, fit.shape, fit.scale);
  return fit;
}

GpdFit fit_gpd(std::span<const double> y) {
  if (y.size() < 2) throw ArgumentError("fit_gpd: need at least 2 excesses");
  for (double v : y) {
    if (!std::isfinite(v) || v < 0.0) throw ArgumentError("fit_gpd: excesses must be finite and >= 0");
  }

  const double step = (kShapeMax - kShapeMin) / static_cast<double>(kGridCells);
  std::size_t best_i = 0;
  double best_ll = kNegInf;
  for (std::size_t i = 0; i <= kGridCells; ++i) {
    const double ll = profile_ll(y, kShapeMin + step * static_cast<double>(i));
    if (ll > best_ll) {
      best_ll = ll;
      best_i = i;
    }
  }
  if (!std::isfinite(best_ll)) return gpd_moments(y);

  double a = std::max(kShapeMin, kShapeMin + step * (static_cast<double>(best_i) - 1.0));
  double b = std::min(kShapeMax, kShapeMin + step * (static_cast<double>(best_i) + 1.0));
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = profile_ll(y, c);
  double fd = profile_ll(y, d);
  for (int it = 0; it < kGoldenIterations; ++it) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = profile_ll(y, c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = profile_ll(y, d);
    }
  }
  double shape = 0.5 * (a + b);
  double ll = profile_ll(y, shape);
  const double grid_shape = kShapeMin + step * static_cast<double>(best_i);
  if (!(ll >= best_ll)) {
    shape = grid_shape;
    ll = best_ll;
  }
  GpdFit fit;
  fit.shape = std::abs(shape) < kShapeZero ? 0.0 : shape;
  fit.scale = gpd_profile_scale(y, fit.shape);
  fit.log_likelihood = ll;
  if (!std::isfinite(fit.scale) || !(fit.scale > 0.0) || !std::isfinite(ll)) return gpd_moments(y);
  return fit;
}

double pot_quantile(double u, double shape, double scale, double risk, std::size_t n,
                    std::size_t n_excess) {
  if (!(risk > 0.0 && risk < 1.0)) throw ArgumentError("risk level must lie in (0, 1)");
  if (n_excess == 0 || n == 0) throw ArgumentError("pot_quantile: no excesses");
  const double r = risk * static_cast<double>(n) / static_cast<double>(n_excess);
  if (std::abs(shape) < kShapeZero) return u - scale * std::log(r);
  return u + scale / shape * (std::pow(r, -shape) - 1.0);
}

double gpd_inverse_cdf(double shape, double scale, double uniform) {
  if (std::abs(shape) < kShapeZero) return -scale * std::log1p(-uniform);
  return scale / shape * (std::pow(1.0 - uniform, -shape) - 1.0);
}

}  // namespace radnet::incident
