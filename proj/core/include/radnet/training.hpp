#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "radnet/model.hpp"
#include "radnet/series.hpp"

namespace radnet::training {

using radnet::IndexRange;

struct FoldSplit {
  std::vector<IndexRange> train;  // one or two contiguous blocks
  IndexRange validation;
};

/// Contiguous, unshuffled k-fold partition of [0, T). Fold f validates on
/// [floor(f·T/k), floor((f+1)·T/k)) and trains on the rest.
std::vector<FoldSplit> split_folds(std::size_t timesteps, std::size_t folds, std::size_t window,
                                   std::size_t horizon);

/// Window end indices t whose inputs max(0, t-K+1)..t and target t+H all lie
/// inside one of `ranges`.
std::vector<std::size_t> sample_ends(std::span<const IndexRange> ranges, std::size_t window,
                                     std::size_t horizon);

/// Per-feature z-score fitted on selected timesteps (all nodes pooled).
struct Normalizer {
  std::vector<double> mean;
  std::vector<double> stddev;

  static Normalizer fit(const FeatureSeries& series, std::span<const IndexRange> ranges);
  FeatureSeries apply(const FeatureSeries& series) const;
  /// In-place inverse on flat N·D frames (any number of them).
  void invert(std::span<double> frames) const;

  nlohmann::json to_json() const;
  static Normalizer from_json(const nlohmann::json& j);
};

struct TrainConfig {
  double lr = 5e-4;
  double weight_decay = 1e-5;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  std::size_t folds = 5;
  std::size_t batch = 32;
  std::uint64_t seed = 0;
  /// > 0 switches to RadNet* training: roll the one-step model this many
  /// steps, teacher-forcing each step with `teacher_forcing` probability.
  std::size_t autoregressive_steps = 0;
  double teacher_forcing = 0.2;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Stops after `patience` consecutive epochs without strict improvement.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience);
  /// Records one epoch's validation loss; true when training should stop.
  bool update(double validation_loss);
  std::size_t best_epoch() const { return best_epoch_; }  // 1-based
  double best_loss() const { return best_loss_; }
  std::size_t epochs_seen() const { return epochs_; }
  bool improved_last() const { return improved_last_; }

 private:
  std::size_t patience_;
  std::size_t epochs_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t since_best_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
  bool improved_last_ = false;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
  double validation_mse = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> curve;
  std::size_t best_epoch = 0;
  double best_validation_loss = 0.0;
  double best_validation_mse = 0.0;
  Normalizer normalizer;
  bool stopped_early = false;
};

/// Fits the normalizer on the train blocks, then runs AdamW over shuffled
/// window batches with early stopping on validation loss. The model is left
/// holding the minimum-validation-loss parameters.
TrainResult train(model::RadNet& model, const FeatureSeries& series, const FoldSplit& split,
                  const TrainConfig& config);

struct Evaluation {
  double loss = 0.0;  // mean Frobenius loss per window
  double mse = 0.0;   // mean squared error per entry
};

/// Eval-mode loss over the given window ends on an already-normalized series.
Evaluation evaluate_loss(const model::RadNet& model, const FeatureSeries& normalized,
                         std::span<const std::size_t> ends, std::size_t batch = 256);

/// Eval-mode forecasts X̂^(t+H) for each end t, flat [|ends|·N·D], in the
/// normalized units of `normalized`. With `autoregressive` the one-step model
/// is rolled forward `horizon` times instead.
std::vector<double> predict(const model::RadNet& model, const FeatureSeries& normalized,
                            std::span<const std::size_t> ends, std::size_t batch = 256,
                            std::size_t autoregressive_horizon = 0);

void write_loss_curve(const std::filesystem::path& path, std::span<const EpochRecord> curve);

}  // namespace radnet::training
