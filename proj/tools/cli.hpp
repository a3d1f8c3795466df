#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "radnet/data_io.hpp"
#include "radnet/pipeline.hpp"

namespace radnet::cli {

struct RunConfig {
  std::filesystem::path data;
  std::vector<std::size_t> horizons{1, 3, 6, 12};
  std::string variant = "full";
  std::filesystem::path out = "radnet_out";
  std::filesystem::path checkpoint;  // empty: same as out
  std::uint64_t seed = 0;
  /// Dataset preset for the initial POT percentile per horizon; empty keeps
  /// pot.q0_percentile for every horizon.
  std::string percentile_preset;
  pipeline::PipelineConfig pipeline;
  io::SynthConfig synth;

  std::filesystem::path checkpoint_dir() const { return checkpoint.empty() ? out : checkpoint; }
  /// Pipeline settings with seed, variant and per-horizon percentile applied.
  pipeline::PipelineConfig pipeline_for(std::size_t horizon_index) const;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  void validate() const;
};

/// Values given on the command line; unset fields defer to the file/defaults.
struct Flags {
  std::optional<std::filesystem::path> data;
  std::optional<std::vector<std::size_t>> horizons;
  std::optional<std::string> variant;
  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::uint64_t> seed;
};

/// defaults < config file < flags.
RunConfig resolve_config(const std::optional<std::filesystem::path>& file, const Flags& flags);

/// Runs the tool; returns the process exit code.
int run(int argc, char** argv);

}  // namespace radnet::cli
