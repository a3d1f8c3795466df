#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "radnet/gpd.hpp"
#include "radnet/series.hpp"

namespace radnet::incident {

/// Historical averages keyed by (weekday, clock). Each observed key holds the
/// mean of every fit-range matrix on the same weekday whose clock lies within
/// Δ of the key's clock. No wrap across midnight.
class BaselineTable {
 public:
  struct Key {
    int weekday = 0;
    std::int64_t clock = 0;
    auto operator<=>(const Key&) const = default;
  };

  struct Lookup {
    std::span<const double> mean;
    bool fallback = false;
  };

  static BaselineTable build(const FeatureSeries& series, std::span<const IndexRange> fit_ranges);

  BaselineTable() = default;
  BaselineTable(const BaselineTable& other);
  BaselineTable& operator=(const BaselineTable& other);
  BaselineTable(BaselineTable&&) noexcept;
  BaselineTable& operator=(BaselineTable&&) noexcept;

  /// Exact key or, if unseen, the nearest observed clock of that weekday
  /// (nearest weekday when the whole day is missing); bumps the fallback count.
  Lookup lookup(int weekday, std::int64_t clock) const;
  Lookup at(const FeatureSeries& series, std::size_t t) const;

  bool contains(int weekday, std::int64_t clock) const;
  std::size_t count(int weekday, std::int64_t clock) const;
  std::vector<Key> keys() const;
  std::size_t frame_size() const { return frame_size_; }
  std::int64_t delta_seconds() const { return delta_; }
  std::size_t fallback_count() const { return fallbacks_.load(); }

 private:
  struct Entry {
    std::vector<double> mean;
    std::size_t count = 0;
  };
  std::map<Key, Entry> entries_;
  std::size_t frame_size_ = 0;
  std::int64_t delta_ = 0;
  mutable std::atomic<std::size_t> fallbacks_{0};
};

/// Residual scores: S = ‖B − X‖ over the whole matrix and per link (row).
struct ScoreSeries {
  std::size_t nodes = 0;
  std::vector<std::size_t> timesteps;
  std::vector<double> network;
  std::vector<double> link;  // [timesteps × nodes]

  std::size_t size() const { return timesteps.size(); }
  std::span<const double> link_row(std::size_t i) const;
  std::vector<double> link_column(std::size_t node) const;
};

/// Writes network score and per-link scores for one aligned pair of matrices.
void residual_scores(std::span<const double> baseline, std::span<const double> frame,
                     std::size_t nodes, double& network, std::span<double> links);

/// `frames` holds one flat N·D matrix per entry of `timesteps` (original units);
/// baselines are looked up via the series' wall-clock metadata.
ScoreSeries residuals(const BaselineTable& baseline, const FeatureSeries& series,
                      std::span<const std::size_t> timesteps, std::span<const double> frames);

/// Scores of the series' own matrices at `timesteps`.
ScoreSeries residuals(const BaselineTable& baseline, const FeatureSeries& series,
                      std::span<const std::size_t> timesteps);

/// Linear-interpolation percentile, p in [0, 100].
double percentile(std::span<const double> values, double p);

struct PotConfig {
  double q0_percentile = 99.0;
  double risk = 1e-3;
  bool dynamic = true;
  std::size_t refit_every = 500;
  std::size_t min_excesses = 50;  // warn below

  void validate() const;
  nlohmann::json to_json() const;
  static PotConfig from_json(const nlohmann::json& j);
};

struct ThresholdState {
  double u = 0.0;
  double shape = 0.0;
  double scale = 1.0;
  double risk = 1e-3;
  std::size_t n = 0;
  std::size_t n_excess = 0;
  double phi = 0.0;
  bool moments_fallback = false;
  bool no_excesses = false;
  double max_score = 0.0;
  std::vector<double> excesses;

  /// Refits the GPD on the stored excesses and recomputes φ (≥ u).
  void refit();
  nlohmann::json to_json() const;
};

ThresholdState pot_fit(std::span<const double> calibration, double q0_percentile, double risk);

/// Score stream with per-step thresholds and the labels 1(score ≥ φ).
struct LabelStream {
  std::vector<double> scores;
  std::vector<double> thresholds;
  std::vector<std::uint8_t> labels;
};

/// Static mode holds φ fixed. Dynamic mode updates the state after each step
/// (non-anomalous scores only), refitting every `refit_every` scores.
LabelStream label(std::span<const double> scores, ThresholdState state, bool dynamic,
                  std::size_t refit_every = 500);

/// Applies given per-step thresholds to another score stream.
LabelStream label_with(std::span<const double> scores, std::span<const double> thresholds);

struct IncidentLabels {
  std::size_t horizon = 1;
  std::size_t nodes = 0;
  std::vector<std::size_t> timesteps;
  LabelStream network;
  // Per-link channels, [timesteps × nodes].
  std::vector<double> link_scores;
  std::vector<double> link_thresholds;
  std::vector<std::uint8_t> link_labels;

  std::size_t size() const { return timesteps.size(); }
  void append(const IncidentLabels& other);
};

/// One network-level state plus one independent state per link.
struct Detector {
  PotConfig config;
  ThresholdState network;
  std::vector<ThresholdState> links;
};

Detector calibrate(const ScoreSeries& calibration, const PotConfig& config);

/// Labels for the true stream; in dynamic mode thresholds evolve with it.
IncidentLabels generate_ground_truth(const Detector& detector, const ScoreSeries& truth,
                                     std::size_t horizon);

/// Predicted labels judged against the same per-step thresholds as `truth`.
IncidentLabels label_predictions(const ScoreSeries& predicted, const IncidentLabels& truth);

void write_labels_csv(const std::filesystem::path& path, const IncidentLabels& labels);
IncidentLabels read_labels_csv(const std::filesystem::path& path, std::size_t horizon = 1);

/// Initial q0 percentile per horizon position and its decrement per step.
struct PercentileSchedule {
  double initial = 99.0;
  double delta = 0.5;

  double at(std::size_t horizon_index) const;
  static PercentileSchedule preset(const std::string& dataset);
};

}  // namespace radnet::incident
