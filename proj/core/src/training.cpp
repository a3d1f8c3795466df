#include "radnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <spdlog/spdlog.h>

#include "radnet/error.hpp"
#include "radnet/optim.hpp"

namespace radnet::training {

using ad::DiffArray;

std::vector<FoldSplit> split_folds(std::size_t timesteps, std::size_t folds, std::size_t window,
                                   std::size_t horizon) {
  if (folds < 2) throw ArgumentError("split_folds: need at least 2 folds");
  if (timesteps < folds * (window + horizon)) {
    throw ArgumentError("split_folds: T=" + std::to_string(timesteps) + " is shorter than folds·(K+H)=" +
                        std::to_string(folds * (window + horizon)));
  }
  std::vector<FoldSplit> splits;
  splits.reserve(folds);
  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t begin = f * timesteps / folds;
    const std::size_t end = (f + 1) * timesteps / folds;
    FoldSplit split;
    split.validation = {begin, end};
    if (begin > 0) split.train.push_back({0, begin});
    if (end < timesteps) split.train.push_back({end, timesteps});
    splits.push_back(std::move(split));
  }
  return splits;
}

std::vector<std::size_t> sample_ends(std::span<const IndexRange> ranges, std::size_t window,
                                     std::size_t horizon) {
  std::vector<std::size_t> ends;
  for (const auto& r : ranges) {
    for (std::size_t t = r.begin; t + horizon < r.end; ++t) {
      const std::size_t first_input = t + 1 >= window ? t + 1 - window : 0;
      if (first_input >= r.begin) ends.push_back(t);
    }
  }
  return ends;
}

Normalizer Normalizer::fit(const FeatureSeries& series, std::span<const IndexRange> ranges) {
  const std::size_t d = series.features();
  Normalizer z;
  z.mean.assign(d, 0.0);
  z.stddev.assign(d, 0.0);
  std::vector<double> count(d, 0.0);
  for (const auto& r : ranges)
    for (std::size_t t = r.begin; t < r.end; ++t) {
      const auto x = series.frame(t);
      for (std::size_t i = 0; i < x.size(); ++i) {
        z.mean[i % d] += x[i];
        count[i % d] += 1.0;
      }
    }
  for (std::size_t f = 0; f < d; ++f) {
    if (count[f] == 0.0) throw ArgumentError("Normalizer::fit: empty fit range");
    z.mean[f] /= count[f];
  }
  for (const auto& r : ranges)
    for (std::size_t t = r.begin; t < r.end; ++t) {
      const auto x = series.frame(t);
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double dev = x[i] - z.mean[i % d];
        z.stddev[i % d] += dev * dev;
      }
    }
  for (std::size_t f = 0; f < d; ++f) {
    z.stddev[f] = std::sqrt(z.stddev[f] / count[f]);
    if (z.stddev[f] < 1e-12) z.stddev[f] = 1.0;  // constant feature
  }
  return z;
}

FeatureSeries Normalizer::apply(const FeatureSeries& series) const {
  const std::size_t d = series.features();
  if (mean.size() != d) throw DimensionError("Normalizer: feature count mismatch");
  std::vector<double> out(series.data().begin(), series.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - mean[i % d]) / stddev[i % d];
  return series.with_data(std::move(out));
}

void Normalizer::invert(std::span<double> frames) const {
  const std::size_t d = mean.size();
  for (std::size_t i = 0; i < frames.size(); ++i) frames[i] = frames[i] * stddev[i % d] + mean[i % d];
}

nlohmann::json Normalizer::to_json() const { return {{"mean", mean}, {"stddev", stddev}}; }

Normalizer Normalizer::from_json(const nlohmann::json& j) {
  Normalizer z;
  z.mean = j.at("mean").get<std::vector<double>>();
  z.stddev = j.at("stddev").get<std::vector<double>>();
  if (z.mean.size() != z.stddev.size()) throw FormatError("normalizer: mean/stddev size mismatch");
  return z;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ArgumentError("learning rate must be > 0");
  if (patience < 1) throw ArgumentError("patience must be >= 1");
  if (folds < 2) throw ArgumentError("folds must be >= 2");
  if (batch < 1) throw ArgumentError("batch must be >= 1");
  if (max_epochs < 1) throw ArgumentError("max_epochs must be >= 1");
  if (teacher_forcing < 0.0 || teacher_forcing > 1.0) {
    throw ArgumentError("teacher-forcing probability must be in [0, 1]");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lr", lr},
          {"weight_decay", weight_decay},
          {"max_epochs", max_epochs},
          {"patience", patience},
          {"folds", folds},
          {"batch", batch},
          {"seed", seed},
          {"autoregressive_steps", autoregressive_steps},
          {"teacher_forcing", teacher_forcing}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.folds = j.value("folds", c.folds);
  c.batch = j.value("batch", c.batch);
  c.seed = j.value("seed", c.seed);
  c.autoregressive_steps = j.value("autoregressive_steps", c.autoregressive_steps);
  c.teacher_forcing = j.value("teacher_forcing", c.teacher_forcing);
  return c;
}

EarlyStopper::EarlyStopper(std::size_t patience) : patience_(patience) {
  if (patience < 1) throw ArgumentError("EarlyStopper: patience must be >= 1");
}

bool EarlyStopper::update(double validation_loss) {
  ++epochs_;
  improved_last_ = validation_loss < best_loss_;
  if (improved_last_) {
    best_loss_ = validation_loss;
    best_epoch_ = epochs_;
    since_best_ = 0;
    return false;
  }
  ++since_best_;
  return since_best_ >= patience_;
}

namespace {

DiffArray shift_in(const DiffArray& window, const DiffArray& newest) {
  const std::size_t k = window.dim(1);
  auto lifted = reshape(newest, {newest.dim(0), 1, newest.dim(1), newest.dim(2)});
  if (k == 1) return lifted;
  return ad::concat({slice(window, 1, 1, k - 1), lifted}, 1);
}

// Per-sample Frobenius losses [B] for one forecast step.
DiffArray per_sample_loss(const DiffArray& prediction, const DiffArray& truth) {
  const std::size_t b = prediction.dim(0);
  return ad::norm_last(reshape(sub(truth, prediction), {b, prediction.size() / b}));
}

/// 0 for windows (inputs and target) that are finite, NaN otherwise.
std::vector<double> window_finiteness(const FeatureSeries& series,
                                      std::span<const std::size_t> ends, std::size_t window,
                                      std::size_t reach) {
  std::vector<double> out;
  out.reserve(ends.size());
  for (std::size_t t : ends) {
    const std::size_t first = t + 1 >= window ? t + 1 - window : 0;
    bool finite = true;
    for (std::size_t s = first; s <= t + reach && finite; ++s) {
      for (double v : series.frame(s)) finite = finite && std::isfinite(v);
    }
    out.push_back(finite ? 0.0 : std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

[[noreturn]] void throw_non_finite(const DiffArray& per_sample, std::span<const std::size_t> ends,
                                   double lr, std::int64_t step) {
  std::size_t offending = ends.empty() ? 0 : ends.front();
  for (std::size_t i = 0; i < per_sample.size(); ++i) {
    if (!std::isfinite(per_sample.values()[i])) {
      offending = ends[i];
      break;
    }
  }
  throw NumericError("training diverged: non-finite loss at step " + std::to_string(step) +
                     " (lr=" + std::to_string(lr) + ", window index " +
                     std::to_string(offending) + ")");
}

}  // namespace

Evaluation evaluate_loss(const model::RadNet& model, const FeatureSeries& normalized,
                         std::span<const std::size_t> ends, std::size_t batch) {
  const auto& cfg = model.config();
  Evaluation e;
  if (ends.empty()) return e;
  double loss_sum = 0.0;
  double sq_sum = 0.0;
  for (std::size_t start = 0; start < ends.size(); start += batch) {
    const auto chunk = ends.subspan(start, std::min(batch, ends.size() - start));
    auto w = model::build_window_batch(normalized, chunk, cfg.window);
    auto target = model::build_target_batch(normalized, chunk, cfg.horizon);
    auto pred = model.forward(w).prediction;
    auto losses = per_sample_loss(pred, target);
    for (double l : losses.values()) {
      loss_sum += l;
      sq_sum += l * l;
    }
  }
  const double n = static_cast<double>(ends.size());
  e.loss = loss_sum / n;
  e.mse = sq_sum / (n * static_cast<double>(normalized.frame_size()));
  return e;
}

namespace {

// RadNet* objective: mean over rollout steps of the batch loss. Validation
// (no RNG) never teacher-forces.
DiffArray rollout_loss(const model::RadNet& model, const FeatureSeries& normalized,
                       std::span<const std::size_t> ends, std::size_t steps,
                       const ad::RunMode& mode, model::TeacherForcing* forcing,
                       std::vector<double>* per_sample_sum) {
  auto w = model::build_window_batch(normalized, ends, model.config().window);
  DiffArray total;
  for (std::size_t i = 1; i <= steps; ++i) {
    auto pred = model.forward(w, mode).prediction;
    auto target = model::build_target_batch(normalized, ends, i);
    auto per_sample = per_sample_loss(pred, target);
    if (per_sample_sum != nullptr) {
      per_sample_sum->resize(ends.size(), 0.0);
      for (std::size_t b = 0; b < ends.size(); ++b) (*per_sample_sum)[b] += per_sample.values()[b];
    }
    auto step_loss = ad::mean(per_sample);
    total = i == 1 ? step_loss : add(total, step_loss);
    if (i < steps) {
      const bool forced = forcing != nullptr && forcing->draw();
      w = shift_in(w, forced ? target : pred);
    }
  }
  return scale(total, 1.0 / static_cast<double>(steps));
}

Evaluation evaluate_rollout(const model::RadNet& model, const FeatureSeries& normalized,
                            std::span<const std::size_t> ends, std::size_t steps,
                            std::size_t batch) {
  Evaluation e;
  if (ends.empty()) return e;
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < ends.size(); start += batch) {
    const auto chunk = ends.subspan(start, std::min(batch, ends.size() - start));
    std::vector<double> sums;
    rollout_loss(model, normalized, chunk, steps, {}, nullptr, &sums);
    for (double s : sums) loss_sum += s / static_cast<double>(steps);
  }
  e.loss = loss_sum / static_cast<double>(ends.size());
  e.mse = std::numeric_limits<double>::quiet_NaN();
  return e;
}

}  // namespace

TrainResult train(model::RadNet& model, const FeatureSeries& series, const FoldSplit& split,
                  const TrainConfig& config) {
  config.validate();
  const auto& mcfg = model.config();
  if (series.nodes() != mcfg.nodes || series.features() != mcfg.features) {
    throw DimensionError("train: series is N=" + std::to_string(series.nodes()) + ", D=" +
                         std::to_string(series.features()) + " but the model expects N=" +
                         std::to_string(mcfg.nodes) + ", D=" + std::to_string(mcfg.features));
  }
  const bool autoregressive = config.autoregressive_steps > 0;
  if (autoregressive && mcfg.horizon != 1) {
    throw ArgumentError("autoregressive training needs a one-step (H=1) model");
  }
  const std::size_t reach = autoregressive ? config.autoregressive_steps : mcfg.horizon;
  auto train_ends = sample_ends(split.train, mcfg.window, reach);
  const IndexRange val_range[] = {split.validation};
  const auto val_ends = sample_ends(val_range, mcfg.window, reach);
  if (train_ends.empty() || val_ends.empty()) {
    throw ArgumentError("train: split leaves no complete training or validation windows");
  }

  TrainResult result;
  result.normalizer = Normalizer::fit(series, split.train);
  const auto normalized = result.normalizer.apply(series);

  auto& store = model.parameters();
  ad::AdamW optimizer({config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
  ad::Rng rng(config.seed);
  model::TeacherForcing forcing(config.teacher_forcing, config.seed ^ 0x9e3779b97f4a7c15ULL);
  EarlyStopper stopper(config.patience);
  auto best = store.snapshot();
  double best_mse = 0.0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(train_ends.begin(), train_ends.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < train_ends.size(); start += config.batch) {
      const std::span<const std::size_t> chunk(
          train_ends.data() + start, std::min(config.batch, train_ends.size() - start));
      store.zero_grad();
      const auto mode = ad::RunMode::train(rng);
      DiffArray batch_loss;
      std::vector<double> sample_losses;
      try {
        if (autoregressive) {
          batch_loss = rollout_loss(model, normalized, chunk, config.autoregressive_steps, mode,
                                    &forcing, &sample_losses);
          for (double& s : sample_losses) s /= static_cast<double>(config.autoregressive_steps);
        } else {
          auto w = model::build_window_batch(normalized, chunk, mcfg.window);
          auto target = model::build_target_batch(normalized, chunk, mcfg.horizon);
          auto per_sample = per_sample_loss(model.forward(w, mode).prediction, target);
          sample_losses.assign(per_sample.values().begin(), per_sample.values().end());
          batch_loss = ad::mean(per_sample);
        }
      } catch (const NumericError&) {
        // A NaN/Inf input trips a numeric guard inside the forward pass
        // before any loss exists; report the first window touching it.
        DiffArray losses({chunk.size()}, window_finiteness(normalized, chunk, mcfg.window, reach));
        throw_non_finite(losses, chunk, optimizer.config().lr, optimizer.state().step_count + 1);
      }
      if (!std::isfinite(batch_loss.item())) {
        DiffArray losses({sample_losses.size()}, sample_losses);
        throw_non_finite(losses, chunk, optimizer.config().lr, optimizer.state().step_count + 1);
      }
      batch_loss.backward();
      optimizer.step(store);
      for (double s : sample_losses) loss_sum += s;
    }
    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(train_ends.size());
    const auto val = autoregressive
                         ? evaluate_rollout(model, normalized, val_ends,
                                            config.autoregressive_steps, 256)
                         : evaluate_loss(model, normalized, val_ends);
    if (!std::isfinite(val.loss)) {
      throw NumericError("training diverged: non-finite validation loss at epoch " +
                         std::to_string(epoch) + " (lr=" + std::to_string(config.lr) + ")");
    }
    record.validation_loss = val.loss;
    record.validation_mse = val.mse;
    result.curve.push_back(record);
    const bool stop = stopper.update(val.loss);
    if (stopper.improved_last()) {
      best = store.snapshot();
      best_mse = val.mse;
    }
    spdlog::debug("epoch {} train {:.6f} val {:.6f}", epoch, record.train_loss, val.loss);
    if (stop) {
      result.stopped_early = true;
      break;
    }
  }
  store.restore(best);
  result.best_epoch = stopper.best_epoch();
  result.best_validation_loss = stopper.best_loss();
  result.best_validation_mse = best_mse;
  return result;
}

std::vector<double> predict(const model::RadNet& model, const FeatureSeries& normalized,
                            std::span<const std::size_t> ends, std::size_t batch,
                            std::size_t autoregressive_horizon) {
  const auto& cfg = model.config();
  std::vector<double> out;
  out.reserve(ends.size() * normalized.frame_size());
  for (std::size_t start = 0; start < ends.size(); start += batch) {
    const auto chunk = ends.subspan(start, std::min(batch, ends.size() - start));
    auto w = model::build_window_batch(normalized, chunk, cfg.window);
    auto pred = autoregressive_horizon > 0
                    ? model::rollout_autoregressive(model, w, autoregressive_horizon)
                    : model.forward(w).prediction;
    out.insert(out.end(), pred.values().begin(), pred.values().end());
  }
  return out;
}

void write_loss_curve(const std::filesystem::path& path, std::span<const EpochRecord> curve) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write loss curve '" + path.string() + "'");
  out.precision(17);
  out << "epoch,train_loss,val_loss\n";
  for (const auto& r : curve) out << r.epoch << ',' << r.train_loss << ',' << r.validation_loss << '\n';
}

}  // namespace radnet::training
