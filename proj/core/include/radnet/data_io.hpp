#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "radnet/graph.hpp"
#include "radnet/series.hpp"

namespace radnet::io {

struct DatasetMeta {
  std::string name;
  std::size_t timesteps = 0;
  std::size_t nodes = 0;
  std::size_t edges = 0;
  std::size_t features = 0;
  std::int64_t delta_seconds = 300;
  std::int64_t start_epoch = 0;
  std::vector<std::string> feature_names;

  nlohmann::json to_json() const;
};

/// Published sizes of the reference datasets (T, N, |E|, D).
const std::vector<DatasetMeta>& reference_datasets();

/// Feature schema of the seven-channel signal-cycle dataset.
const std::vector<std::string>& radset_feature_names();

struct Dataset {
  FeatureSeries series;
  graph::RoadGraph graph;
  DatasetMeta meta;
};

/// Directory with meta.json, features.bin (little-endian float64, t-major,
/// then node, then feature) and edges.csv.
Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const std::filesystem::path& dir, const std::string& name,
                  const FeatureSeries& series, const graph::RoadGraph& graph);

struct FeatureStats {
  std::string name;
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
  double stddev = 0.0;
};

struct DatasetStats {
  DatasetMeta meta;
  std::vector<FeatureStats> features;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

DatasetStats stats(const FeatureSeries& series, const graph::RoadGraph& graph,
                   const std::string& name);

struct IncidentEvent {
  std::size_t start = 0;
  std::size_t link = 0;
  std::size_t duration = 6;
  double depth = 0.5;
};

struct SynthConfig {
  std::size_t nodes = 4;
  std::size_t days = 14;
  std::int64_t delta_seconds = 300;
  std::int64_t start_epoch = 1704067200;  // Monday 2024-01-01 00:00 UTC
  std::size_t features = 1;
  double level = 50.0;
  double daily_amplitude = 0.3;
  /// Per-weekday multiplicative factor spread (weekends lowest).
  double weekly_amplitude = 0.1;
  /// Noise std as a fraction of the link level, smoothed over neighbors.
  double noise = 0.03;
  /// Randomly placed events (non-overlapping in time).
  std::size_t incidents = 0;
  double depth = 0.5;
  std::size_t duration = 6;
  /// Explicit events, placed in addition to the random ones.
  std::vector<IncidentEvent> events;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);
};

struct SynthResult {
  FeatureSeries series;
  graph::RoadGraph graph;
  std::vector<std::uint8_t> truth;  // [T × N], 1 inside an injected window
  std::vector<IncidentEvent> events;
};

/// Daily sinusoid × weekday factor + one-step graph-diffused Gaussian noise.
/// Incidents scale even-indexed features by (1 − depth) and odd-indexed ones
/// by (1 + depth), so speed/flow drop while queue/congestion channels rise.
SynthResult synth_traffic(const SynthConfig& config);

void write_truth_csv(const std::filesystem::path& path, const SynthResult& result);

}  // namespace radnet::io
