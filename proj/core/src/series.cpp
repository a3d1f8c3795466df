#include "radnet/series.hpp"

#include <chrono>

#include "radnet/error.hpp"

namespace radnet {

namespace {
constexpr std::int64_t kSecondsPerDay = 86400;

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}
}  // namespace

FeatureSeries::FeatureSeries(std::size_t timesteps, std::size_t nodes, std::size_t features,
                             std::vector<double> data, std::int64_t start_epoch,
                             std::int64_t delta_seconds, std::vector<std::string> feature_names)
    : timesteps_(timesteps),
      nodes_(nodes),
      features_(features),
      data_(std::move(data)),
      start_epoch_(start_epoch),
      delta_seconds_(delta_seconds),
      feature_names_(std::move(feature_names)) {
  if (data_.size() != timesteps * nodes * features) {
    throw DimensionError("FeatureSeries: " + std::to_string(data_.size()) +
                         " values for T=" + std::to_string(timesteps) + ", N=" +
                         std::to_string(nodes) + ", D=" + std::to_string(features));
  }
  if (delta_seconds <= 0) throw ArgumentError("FeatureSeries: interval duration must be > 0");
  if (feature_names_.empty()) {
    for (std::size_t f = 0; f < features; ++f) feature_names_.push_back("f" + std::to_string(f));
  }
  if (feature_names_.size() != features) {
    throw DimensionError("FeatureSeries: " + std::to_string(feature_names_.size()) +
                         " feature names for D=" + std::to_string(features));
  }
}

std::span<const double> FeatureSeries::frame(std::size_t t) const {
  if (t >= timesteps_) {
    throw IndexError("timestep " + std::to_string(t) + " outside [0, " +
                     std::to_string(timesteps_) + ")");
  }
  return std::span<const double>(data_).subspan(t * frame_size(), frame_size());
}

double FeatureSeries::at(std::size_t t, std::size_t node, std::size_t feature) const {
  if (node >= nodes_ || feature >= features_) throw IndexError("FeatureSeries::at out of range");
  return frame(t)[node * features_ + feature];
}

std::int64_t FeatureSeries::timestamp(std::size_t t) const {
  return start_epoch_ + static_cast<std::int64_t>(t) * delta_seconds_;
}

int FeatureSeries::weekday(std::size_t t) const {
  using namespace std::chrono;
  const sys_days day{days{floor_div(timestamp(t), kSecondsPerDay)}};
  // iso_encoding: Monday = 1 ... Sunday = 7
  return static_cast<int>(std::chrono::weekday{day}.iso_encoding()) - 1;
}

std::int64_t FeatureSeries::clock_seconds(std::size_t t) const {
  const std::int64_t ts = timestamp(t);
  return ts - floor_div(ts, kSecondsPerDay) * kSecondsPerDay;
}

FeatureSeries FeatureSeries::with_data(std::vector<double> data) const {
  return FeatureSeries(timesteps_, nodes_, features_, std::move(data), start_epoch_,
                       delta_seconds_, feature_names_);
}

}  // namespace radnet
