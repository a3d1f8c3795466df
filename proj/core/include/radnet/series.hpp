#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace radnet {

/// Half-open timestep range [begin, end).
struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool contains(std::size_t t) const { return t >= begin && t < end; }
  bool operator==(const IndexRange&) const = default;
};

/// Uniformly sampled trace of N×D feature matrices, stored t-major, then
/// node, then feature. Timestep t covers wall-clock start_epoch + t·Δ (UTC).
class FeatureSeries {
 public:
  FeatureSeries() = default;
  FeatureSeries(std::size_t timesteps, std::size_t nodes, std::size_t features,
                std::vector<double> data, std::int64_t start_epoch, std::int64_t delta_seconds,
                std::vector<std::string> feature_names = {});

  std::size_t timesteps() const { return timesteps_; }
  std::size_t nodes() const { return nodes_; }
  std::size_t features() const { return features_; }
  std::size_t frame_size() const { return nodes_ * features_; }
  std::int64_t start_epoch() const { return start_epoch_; }
  std::int64_t delta_seconds() const { return delta_seconds_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }

  std::span<const double> data() const { return data_; }
  std::span<double> mutable_data() { return data_; }
  /// X^(t) as a flat N·D row-major span.
  std::span<const double> frame(std::size_t t) const;
  double at(std::size_t t, std::size_t node, std::size_t feature) const;

  std::int64_t timestamp(std::size_t t) const;
  /// d(t): 0 = Monday ... 6 = Sunday.
  int weekday(std::size_t t) const;
  /// c(t): seconds since midnight.
  std::int64_t clock_seconds(std::size_t t) const;

  /// Same metadata, different values (e.g. after normalization).
  FeatureSeries with_data(std::vector<double> data) const;

 private:
  std::size_t timesteps_ = 0;
  std::size_t nodes_ = 0;
  std::size_t features_ = 0;
  std::vector<double> data_;
  std::int64_t start_epoch_ = 0;
  std::int64_t delta_seconds_ = 300;
  std::vector<std::string> feature_names_;
};

}  // namespace radnet
