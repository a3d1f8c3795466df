#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "radnet/array.hpp"
#include "radnet/graph.hpp"
#include "radnet/parameters.hpp"
#include "radnet/series.hpp"
#include "radnet/temporal.hpp"

namespace radnet::model {

enum class Variant {
  kFull,    // both paths, learned convex weights over (path1, path2, X^(t))
  kNoSkip,  // both paths, plain sum path1 + path2 + X^(t)
  kNoSt,    // temporo-spatial path only, weights over (path2, X^(t))
  kNoTs,    // spatio-temporal path only, weights over (path1, X^(t))
};

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);

enum class LayoutChoice { kAuto, kPerNode, kFlattened };

struct RadNetConfig {
  std::size_t window = 5;
  std::size_t horizon = 1;
  std::size_t nodes = 0;
  std::size_t features = 0;
  std::size_t gat_heads = 1;
  std::size_t transformer_heads = 0;  // 0 → one head per feature
  Variant variant = Variant::kFull;
  std::vector<std::size_t> decoder_hidden{64, 64};
  std::size_t transformer_ff_hidden = 16;
  double dropout = 0.1;
  double leaky_slope = ad::kDefaultLeakySlope;
  /// kAuto picks per-node rows unless D < 2, where a width-1 layer norm
  /// would erase the signal; then it flattens to N·D.
  LayoutChoice layout = LayoutChoice::kAuto;
  temporal::DecoderQuery decoder_query = temporal::DecoderQuery::kInputWindow;
  std::uint64_t seed = 0;

  void validate() const;
  temporal::TemporalLayout resolved_layout() const;
  std::size_t resolved_transformer_heads() const;

  nlohmann::json to_json() const;
  static RadNetConfig from_json(const nlohmann::json& j);
};

struct Forecast {
  ad::DiffArray prediction;  // [N, D] or [B, N, D]
  /// Convex fusion weights ([P] or [B, P]); absent for the no_skip variant.
  std::optional<ad::DiffArray> path_weights;
  std::size_t source_timestep = 0;
};

struct LedgerEntry {
  std::string name;
  ad::Shape shape;
  std::size_t count = 0;
};

class RadNet {
 public:
  RadNet(RadNetConfig config, graph::RoadGraph graph);
  RadNet(const RadNet&) = delete;
  RadNet& operator=(const RadNet&) = delete;
  RadNet(RadNet&&) = default;
  RadNet& operator=(RadNet&&) = default;

  /// window: [K, N, D] or [B, K, N, D].
  Forecast forward(const ad::DiffArray& window, const ad::RunMode& mode = {}) const;

  /// Transformer(GAT-over-window(W)) → [B, N, D].
  ad::DiffArray spatio_temporal(const ad::DiffArray& window, const ad::RunMode& mode) const;
  /// GAT(Transformer(W)) → [B, N, D].
  ad::DiffArray temporo_spatial(const ad::DiffArray& window, const ad::RunMode& mode) const;

  const RadNetConfig& config() const { return config_; }
  const graph::RoadGraph& graph() const { return graph_; }
  ad::ParameterStore& parameters() { return store_; }
  const ad::ParameterStore& parameters() const { return store_; }

  bool has_spatio_temporal() const;
  bool has_temporo_spatial() const;
  std::size_t fusion_width() const;

 private:
  ad::DiffArray as_batch(const ad::DiffArray& window) const;

  RadNetConfig config_;
  graph::RoadGraph graph_;
  ad::ParameterStore store_;
  graph::GatLayer gat_st_;
  temporal::Transformer transformer_st_;
  temporal::Transformer transformer_ts_;
  graph::GatLayer gat_ts_;
  ad::FeedForward fusion_;
  ad::FeedForward decoder_;
};

/// W^(t): the K matrices X^(t-K+1..t); indices below 0 replicate X^(0).
ad::DiffArray build_window(const FeatureSeries& series, std::size_t t, std::size_t window);
/// Stacked windows [B, K, N, D] for several end indices.
ad::DiffArray build_window_batch(const FeatureSeries& series, std::span<const std::size_t> ends,
                                 std::size_t window);
/// Stacked X^(t+H) targets [B, N, D].
ad::DiffArray build_target_batch(const FeatureSeries& series, std::span<const std::size_t> ends,
                                 std::size_t horizon);

/// ‖X_true − X̂‖ (Frobenius) for a single forecast.
ad::DiffArray loss(const ad::DiffArray& prediction, const ad::DiffArray& truth);
/// Mean over the leading batch axis of per-sample Frobenius losses.
ad::DiffArray batch_loss(const ad::DiffArray& prediction, const ad::DiffArray& truth);

/// RadNet*: apply a one-step model H times, each time dropping the oldest
/// slice and appending the newest forecast. H = 1 is exactly forward().
ad::DiffArray rollout_autoregressive(const RadNet& one_step, const ad::DiffArray& window,
                                     std::size_t horizon, const ad::RunMode& mode = {});

std::size_t count_parameters(const RadNet& model);
std::vector<LedgerEntry> parameter_ledger(const RadNet& model);

/// Bernoulli(p) draws deciding whether a rollout step is teacher-forced
/// (fed the true next matrix) during RadNet* training.
class TeacherForcing {
 public:
  TeacherForcing(double probability, std::uint64_t seed);
  bool draw();
  double probability() const { return probability_; }

 private:
  double probability_;
  ad::Rng rng_;
};

}  // namespace radnet::model
