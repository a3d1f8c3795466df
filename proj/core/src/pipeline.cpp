#include "radnet/pipeline.hpp"

#include <spdlog/spdlog.h>

#include "radnet/error.hpp"

namespace radnet::pipeline {

nlohmann::json PipelineConfig::to_json() const {
  return {{"model", model.to_json()},
          {"train", train.to_json()},
          {"pot", pot.to_json()},
          {"autoregressive", autoregressive},
          {"fold", fold}};
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  PipelineConfig c;
  if (j.contains("model")) c.model = model::RadNetConfig::from_json(j.at("model"));
  if (j.contains("train")) c.train = training::TrainConfig::from_json(j.at("train"));
  if (j.contains("pot")) c.pot = incident::PotConfig::from_json(j.at("pot"));
  c.autoregressive = j.value("autoregressive", c.autoregressive);
  c.fold = j.value("fold", c.fold);
  return c;
}

model::RadNetConfig model_config_for(const PipelineConfig& config, const FeatureSeries& series,
                                     std::size_t horizon) {
  if (horizon < 1) throw ArgumentError("horizon must be >= 1");
  auto m = config.model;
  m.nodes = series.nodes();
  m.features = series.features();
  m.horizon = config.autoregressive ? 1 : horizon;
  m.validate();
  return m;
}

training::TrainConfig train_config_for(const PipelineConfig& config, std::size_t horizon) {
  auto t = config.train;
  t.autoregressive_steps = config.autoregressive && horizon > 1 ? horizon : 0;
  t.validate();
  return t;
}

std::size_t resolve_fold(int fold, std::size_t folds) {
  const auto k = static_cast<long long>(folds);
  const long long f = fold < 0 ? k + fold : fold;
  if (f < 0 || f >= k) {
    throw ArgumentError("fold " + std::to_string(fold) + " outside [0, " + std::to_string(folds) +
                        ")");
  }
  return static_cast<std::size_t>(f);
}

Forecasts forecast(const model::RadNet& model, const training::Normalizer& normalizer,
                   const FeatureSeries& series, std::span<const std::size_t> ends,
                   std::size_t horizon) {
  const auto& cfg = model.config();
  std::size_t rollout = 0;
  if (cfg.horizon != horizon) {
    if (cfg.horizon != 1) {
      throw ArgumentError("model forecasts H=" + std::to_string(cfg.horizon) +
                          " directly and cannot serve H=" + std::to_string(horizon));
    }
    rollout = horizon;
  }
  const auto normalized = normalizer.apply(series);
  Forecasts out;
  out.horizon = horizon;
  out.values = training::predict(model, normalized, ends, 256, rollout);
  normalizer.invert(out.values);
  out.targets.reserve(ends.size());
  for (std::size_t t : ends) out.targets.push_back(t + horizon);
  return out;
}

std::vector<std::size_t> validation_ends(const training::FoldSplit& split, std::size_t window,
                                         std::size_t horizon) {
  const IndexRange range[] = {split.validation};
  return training::sample_ends(range, window, horizon);
}

Detection detect(const FeatureSeries& series, const training::FoldSplit& split,
                 const Forecasts& forecasts, const incident::PotConfig& pot) {
  Detection d;
  d.baseline = incident::BaselineTable::build(series, split.train);
  std::vector<std::size_t> train_steps;
  for (const auto& r : split.train)
    for (std::size_t t = r.begin; t < r.end; ++t) train_steps.push_back(t);
  const auto calibration = incident::residuals(d.baseline, series, train_steps);
  d.detector = incident::calibrate(calibration, pot);
  d.truth_scores = incident::residuals(d.baseline, series, forecasts.targets);
  d.predicted_scores =
      incident::residuals(d.baseline, series, forecasts.targets, forecasts.values);
  d.truth = incident::generate_ground_truth(d.detector, d.truth_scores, forecasts.horizon);
  d.predicted = incident::label_predictions(d.predicted_scores, d.truth);
  return d;
}

FoldRun run_fold(const FeatureSeries& series, const graph::RoadGraph& graph,
                 const PipelineConfig& config, std::size_t horizon, std::size_t fold,
                 model::RadNet* trained) {
  const auto mcfg = model_config_for(config, series, horizon);
  const auto tcfg = train_config_for(config, horizon);
  const auto splits = training::split_folds(series.timesteps(), tcfg.folds, mcfg.window, horizon);
  if (fold >= splits.size()) throw ArgumentError("fold " + std::to_string(fold) + " out of range");
  const auto& split = splits[fold];

  model::RadNet model(mcfg, graph);
  FoldRun run;
  run.fold = fold;
  run.train = training::train(model, series, split, tcfg);
  const auto ends = validation_ends(split, mcfg.window, horizon);
  run.forecasts = forecast(model, run.train.normalizer, series, ends, horizon);
  run.detection = detect(series, split, run.forecasts, config.pot);
  if (trained != nullptr) *trained = std::move(model);
  return run;
}

HorizonRun run_detection(const FeatureSeries& series, const graph::RoadGraph& graph,
                         const PipelineConfig& config, std::size_t horizon,
                         std::span<const std::size_t> folds, const Progress& progress) {
  std::vector<std::size_t> all;
  if (folds.empty()) {
    for (std::size_t f = 0; f < config.train.folds; ++f) all.push_back(f);
    folds = all;
  }
  HorizonRun out;
  out.horizon = horizon;
  double mse_sum = 0.0;
  for (std::size_t f : folds) {
    auto run = run_fold(series, graph, config, horizon, f);
    if (progress) {
      progress("fold " + std::to_string(f) + ": best epoch " + std::to_string(run.train.best_epoch) +
               ", validation loss " + std::to_string(run.train.best_validation_loss));
    }
    out.truth.append(run.detection.truth);
    out.predicted.append(run.detection.predicted);
    mse_sum += run.train.best_validation_mse;
    out.folds.push_back(std::move(run));
  }
  out.mean_validation_mse = mse_sum / static_cast<double>(folds.size());
  out.truth.horizon = out.predicted.horizon = horizon;
  out.report = eval::evaluate(out.predicted, out.truth);
  out.report.metadata["folds"] = folds.size();
  out.report.metadata["validation_mse"] = out.mean_validation_mse;
  return out;
}

}  // namespace radnet::pipeline
