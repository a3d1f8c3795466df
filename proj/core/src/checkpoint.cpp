#include "radnet/checkpoint.hpp"

#include <fstream>

#include "radnet/binary_io.hpp"
#include "radnet/error.hpp"

namespace radnet::ad {

namespace {

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* suffix) {
  return std::filesystem::path(stem.string() + suffix);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& stem, const ParameterStore& store,
                     std::uint64_t seed, const nlohmann::json& hyperparameters) {
  nlohmann::json manifest;
  manifest["format"] = "radnet-checkpoint";
  manifest["version"] = 1;
  manifest["seed"] = seed;
  manifest["hyperparameters"] = hyperparameters;
  manifest["arrays"] = nlohmann::json::array();
  std::vector<double> blob;
  blob.reserve(store.scalar_count());
  for (const auto& p : store.entries()) {
    manifest["arrays"].push_back({{"name", p.name}, {"shape", p.value.shape()}});
    blob.insert(blob.end(), p.value.values().begin(), p.value.values().end());
  }
  std::ofstream out(with_suffix(stem, ".json"));
  if (!out) throw FormatError("cannot write checkpoint manifest for '" + stem.string() + "'");
  out << manifest.dump(2) << '\n';
  io::write_f64_le(with_suffix(stem, ".bin"), blob);
}

CheckpointManifest read_manifest(const std::filesystem::path& stem) {
  const auto path = with_suffix(stem, ".json");
  std::ifstream in(path);
  if (!in) throw FormatError("missing checkpoint manifest '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("invalid checkpoint manifest '" + path.string() + "': " + e.what());
  }
  if (j.value("format", "") != "radnet-checkpoint") {
    throw FormatError("'" + path.string() + "' is not a radnet checkpoint manifest");
  }
  CheckpointManifest m;
  m.seed = j.value("seed", std::uint64_t{0});
  m.hyperparameters = j.value("hyperparameters", nlohmann::json::object());
  for (const auto& a : j.at("arrays")) {
    m.arrays.emplace_back(a.at("name").get<std::string>(), a.at("shape").get<Shape>());
  }
  return m;
}

CheckpointManifest load_checkpoint(const std::filesystem::path& stem, ParameterStore& store) {
  auto manifest = read_manifest(stem);
  auto& entries = store.entries();
  if (manifest.arrays.size() != entries.size()) {
    throw FormatError("checkpoint has " + std::to_string(manifest.arrays.size()) +
                      " arrays, model expects " + std::to_string(entries.size()));
  }
  std::size_t total = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& [name, shape] = manifest.arrays[i];
    if (name != entries[i].name || shape != entries[i].value.shape()) {
      throw FormatError("checkpoint entry " + std::to_string(i) + " is '" + name + "' " +
                        shape_to_string(shape) + ", model expects '" + entries[i].name + "' " +
                        shape_to_string(entries[i].value.shape()));
    }
    total += shape_size(shape);
  }
  const auto blob = io::read_f64_le(with_suffix(stem, ".bin"), total);
  std::size_t offset = 0;
  for (auto& entry : entries) {
    auto dst = entry.value.mutable_values();
    std::copy_n(blob.begin() + static_cast<std::ptrdiff_t>(offset), dst.size(), dst.begin());
    offset += dst.size();
  }
  return manifest;
}

}  // namespace radnet::ad
