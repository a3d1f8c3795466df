#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "radnet/error.hpp"
#include "radnet/gpd.hpp"

using namespace radnet;
using namespace radnet::incident;

namespace {

std::vector<double> gpd_sample(double shape, double scale, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> y(n);
  for (double& v : y) v = gpd_inverse_cdf(shape, scale, u(rng));
  return y;
}

}  // namespace

TEST_CASE("closed forms") {
  CHECK(gpd_inverse_cdf(0.0, 2.0, 0.5) == doctest::Approx(2.0 * std::log(2.0)));
  CHECK(gpd_inverse_cdf(0.5, 1.0, 0.75) == doctest::Approx((std::pow(0.25, -0.5) - 1.0) / 0.5));
  const std::vector<double> y{0.5, 1.0, 2.0};
  CHECK(gpd_log_likelihood(y, 0.0, 2.0) == doctest::Approx(-3.0 * std::log(2.0) - 3.5 / 2.0));
  const double g = 0.3, s = 1.5;
  double ll = -3.0 * std::log(s);
  for (double v : y) ll -= (1.0 + 1.0 / g) * std::log1p(g * v / s);
  CHECK(gpd_log_likelihood(y, g, s) == doctest::Approx(ll));
  CHECK(gpd_log_likelihood(y, -0.5, 0.5) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("profile scale solves the score equation") {
  const auto y = gpd_sample(0.2, 1.0, 500, 1);
  for (double g : {-0.3, 0.0, 0.2, 0.8}) {
    CAPTURE(g);
    const double s = gpd_profile_scale(y, g);
    double sum = 0.0;
    for (double v : y) sum += v / (s + g * v);
    CHECK((1.0 + g) * sum == doctest::Approx(static_cast<double>(y.size())).epsilon(1e-8));
  }
}

TEST_CASE("maximum likelihood recovers known parameters") {
  const auto y = gpd_sample(0.1, 2.0, 100000, 2);
  const auto fit = fit_gpd(y);
  CHECK_FALSE(fit.moments_fallback);
  CHECK(std::abs(fit.shape - 0.1) < 0.02);
  CHECK(std::abs(fit.scale / 2.0 - 1.0) < 0.03);
  CHECK(fit.log_likelihood >= gpd_log_likelihood(y, 0.1, 2.0) - 1e-6);

  const auto light = fit_gpd(gpd_sample(-0.2, 1.0, 50000, 3));
  CHECK(std::abs(light.shape + 0.2) < 0.03);
}

TEST_CASE("exponential tail quantile") {
  std::mt19937_64 rng(4);
  std::exponential_distribution<double> e(1.0);
  const std::size_t n = 200000;
  std::vector<double> x(n);
  for (double& v : x) v = e(rng);
  const double u = 3.0;
  std::vector<double> y;
  for (double v : x)
    if (v > u) y.push_back(v - u);
  const auto fit = fit_gpd(y);
  const double risk = 1e-4;
  const double est = pot_quantile(u, fit.shape, fit.scale, risk, n, y.size());
  const double truth = -std::log(risk);
  CHECK(std::abs(est / truth - 1.0) < 0.02);

  // the γ → 0 branch joins continuously
  const double at_zero = pot_quantile(1.0, 0.0, 2.0, 1e-3, 1000, 50);
  CHECK(at_zero == doctest::Approx(1.0 + 2.0 * std::log(50.0 / (1e-3 * 1000.0))));
  CHECK(pot_quantile(1.0, 1e-6, 2.0, 1e-3, 1000, 50) == doctest::Approx(at_zero).epsilon(1e-4));
}

TEST_CASE("method of moments") {
  const std::vector<double> y{1.0, 2.0, 3.0, 4.0};
  const auto m = gpd_moments(y);
  const double mean = 2.5;
  double var = 0.0;
  for (double v : y) var += (v - mean) * (v - mean) / 3.0;
  CHECK(m.moments_fallback);
  CHECK(m.shape == doctest::Approx(0.5 * (1.0 - mean * mean / var)));
  CHECK(m.scale == doctest::Approx(0.5 * mean * (mean * mean / var + 1.0)));
}

TEST_CASE("fit input validation") {
  const std::vector<double> one{1.0};
  CHECK_THROWS_AS(fit_gpd(one), ArgumentError);
  const std::vector<double> negative{1.0, -1.0};
  CHECK_THROWS_AS(fit_gpd(negative), ArgumentError);
  const std::vector<double> equal{1.0, 1.0, 1.0};
  const auto f = fit_gpd(equal);
  CHECK(std::isfinite(f.scale));
  CHECK(f.scale > 0.0);
}
