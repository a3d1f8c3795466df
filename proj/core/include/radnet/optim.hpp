#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "radnet/parameters.hpp"

namespace radnet::ad {

struct AdamWConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
};

struct AdamWState {
  std::int64_t step_count = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

/// One AdamW update over a set of flat parameter buffers. Decay shrinks the
/// parameter directly (p -= lr*wd*p) before the bias-corrected Adam step.
/// Throws NumericError and leaves params/state untouched if any gradient is
/// non-finite or shapes disagree.
void adamw_step(std::span<const std::span<double>> params,
                std::span<const std::span<const double>> grads, AdamWState& state,
                const AdamWConfig& config);

class AdamW {
 public:
  explicit AdamW(AdamWConfig config) : config_(config) {}

  /// Applies one step using the gradients accumulated on every parameter in
  /// the store (missing gradients count as zero).
  void step(ParameterStore& store);

  const AdamWState& state() const { return state_; }
  const AdamWConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }

 private:
  AdamWConfig config_;
  AdamWState state_;
};

}  // namespace radnet::ad
