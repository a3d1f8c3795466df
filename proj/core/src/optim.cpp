#include "radnet/optim.hpp"

#include <cmath>
#include <string>

#include "radnet/error.hpp"

namespace radnet::ad {

void adamw_step(std::span<const std::span<double>> params,
                std::span<const std::span<const double>> grads, AdamWState& state,
                const AdamWConfig& config) {
  if (params.size() != grads.size()) {
    throw DimensionError("adamw_step: " + std::to_string(params.size()) + " params but " +
                         std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != grads[i].size()) {
      throw DimensionError("adamw_step: gradient " + std::to_string(i) + " has " +
                           std::to_string(grads[i].size()) + " entries, parameter has " +
                           std::to_string(params[i].size()));
    }
    if (!all_finite(grads[i])) {
      throw NumericError("adamw_step: non-finite gradient for parameter " + std::to_string(i) +
                         " at step " + std::to_string(state.step_count + 1));
    }
  }
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.size(), 0.0);
      state.second_moment.emplace_back(p.size(), 0.0);
    }
  } else if (state.first_moment.size() != params.size()) {
    throw DimensionError("adamw_step: optimizer state tracks a different parameter set");
  }

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bias1 = 1.0 - std::pow(config.beta1, t);
  const double bias2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i];
    auto g = grads[i];
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      p[j] -= config.lr * config.weight_decay * p[j];
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bias1;
      const double v_hat = v[j] / bias2;
      p[j] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
  }
}

void AdamW::step(ParameterStore& store) {
  std::vector<std::vector<double>> grad_storage;
  std::vector<std::span<double>> params;
  std::vector<std::span<const double>> grads;
  grad_storage.reserve(store.entries().size());
  for (auto& entry : store.entries()) {
    grad_storage.push_back(entry.value.grad());
    params.push_back(entry.value.mutable_values());
  }
  for (const auto& g : grad_storage) grads.emplace_back(g);
  adamw_step(params, grads, state_, config_);
}

}  // namespace radnet::ad
