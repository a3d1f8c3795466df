#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "radnet/parameters.hpp"

namespace radnet::ad {

/// Checkpoint layout: `<stem>.json` lists array names and shapes in order
/// together with the seed and free-form hyperparameters; `<stem>.bin` holds
/// every array's values as little-endian float64, row-major, concatenated in
/// manifest order.
struct CheckpointManifest {
  std::uint64_t seed = 0;
  nlohmann::json hyperparameters = nlohmann::json::object();
  std::vector<std::pair<std::string, Shape>> arrays;
};

void save_checkpoint(const std::filesystem::path& stem, const ParameterStore& store,
                     std::uint64_t seed, const nlohmann::json& hyperparameters);

CheckpointManifest read_manifest(const std::filesystem::path& stem);

/// Loads values into an already-constructed store. Names and shapes must
/// match the manifest entry-for-entry.
CheckpointManifest load_checkpoint(const std::filesystem::path& stem, ParameterStore& store);

}  // namespace radnet::ad
