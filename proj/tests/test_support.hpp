#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "radnet/array.hpp"

namespace radnet::testing {

inline ad::DiffArray random_array(ad::Shape shape, std::mt19937_64& rng, bool requires_grad = true,
                                  double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(ad::shape_size(shape));
  for (double& x : v) x = u(rng);
  return ad::DiffArray(std::move(shape), std::move(v), requires_grad);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("radnet_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace radnet::testing
