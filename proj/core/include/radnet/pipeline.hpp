#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "radnet/evaluation.hpp"
#include "radnet/graph.hpp"
#include "radnet/incident.hpp"
#include "radnet/model.hpp"
#include "radnet/series.hpp"
#include "radnet/training.hpp"

namespace radnet::pipeline {

struct PipelineConfig {
  model::RadNetConfig model;  // nodes/features are taken from the data
  training::TrainConfig train;
  incident::PotConfig pot;
  /// Train a one-step model and roll it out to each horizon.
  bool autoregressive = false;
  /// Fold used by single-fold commands; negative counts from the end.
  int fold = -1;

  nlohmann::json to_json() const;
  static PipelineConfig from_json(const nlohmann::json& j);
};

/// Model configuration for a dataset and horizon.
model::RadNetConfig model_config_for(const PipelineConfig& config, const FeatureSeries& series,
                                     std::size_t horizon);
training::TrainConfig train_config_for(const PipelineConfig& config, std::size_t horizon);
std::size_t resolve_fold(int fold, std::size_t folds);

/// Forecasts in original units for the target timesteps t+H.
struct Forecasts {
  std::size_t horizon = 1;
  std::vector<std::size_t> targets;
  std::vector<double> values;  // [targets × N·D]
};

Forecasts forecast(const model::RadNet& model, const training::Normalizer& normalizer,
                   const FeatureSeries& series, std::span<const std::size_t> ends,
                   std::size_t horizon);

/// Validation window ends of a split for a given horizon.
std::vector<std::size_t> validation_ends(const training::FoldSplit& split, std::size_t window,
                                         std::size_t horizon);

struct Detection {
  incident::BaselineTable baseline;
  incident::Detector detector;
  incident::ScoreSeries truth_scores;
  incident::ScoreSeries predicted_scores;
  incident::IncidentLabels truth;
  incident::IncidentLabels predicted;
};

/// Baseline and thresholds come from the train blocks; labels cover the
/// forecast targets.
Detection detect(const FeatureSeries& series, const training::FoldSplit& split,
                 const Forecasts& forecasts, const incident::PotConfig& pot);

struct FoldRun {
  std::size_t fold = 0;
  training::TrainResult train;
  Forecasts forecasts;
  Detection detection;
};

struct HorizonRun {
  std::size_t horizon = 1;
  std::vector<FoldRun> folds;
  incident::IncidentLabels truth;
  incident::IncidentLabels predicted;
  eval::EvalReport report;
  double mean_validation_mse = 0.0;
};

using Progress = std::function<void(const std::string&)>;

/// Trains and evaluates one fold.
FoldRun run_fold(const FeatureSeries& series, const graph::RoadGraph& graph,
                 const PipelineConfig& config, std::size_t horizon, std::size_t fold,
                 model::RadNet* trained = nullptr);

/// Cross-validated detection: every fold's validation block is labeled by a
/// model trained on the rest, and labels are pooled before scoring. With
/// `folds` empty all folds are run.
HorizonRun run_detection(const FeatureSeries& series, const graph::RoadGraph& graph,
                         const PipelineConfig& config, std::size_t horizon,
                         std::span<const std::size_t> folds = {}, const Progress& progress = {});

}  // namespace radnet::pipeline
