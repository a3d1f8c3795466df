#include "radnet/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "radnet/binary_io.hpp"
#include "radnet/error.hpp"

namespace radnet::io {

namespace fs = std::filesystem;

nlohmann::json DatasetMeta::to_json() const {
  return {{"name", name},
          {"T", timesteps},
          {"N", nodes},
          {"E", edges},
          {"D", features},
          {"delta_seconds", delta_seconds},
          {"start_epoch", start_epoch},
          {"feature_names", feature_names}};
}

const std::vector<DatasetMeta>& reference_datasets() {
  static const std::vector<DatasetMeta> table = {
      {"METR-LA", 34272, 207, 2833, 1, 300, 0, {}},
      {"PEMS", 52116, 325, 4483, 1, 300, 0, {}},
      {"RadSet", 209739, 24, 166, 7, 0, 0, radset_feature_names()},
  };
  return table;
}

const std::vector<std::string>& radset_feature_names() {
  static const std::vector<std::string> names = {"del",      "flow", "flow_raw", "cong",
                                                 "cong_raw", "occ",  "ql"};
  return names;
}

namespace {

const std::set<std::string> kMetaFields = {"name",          "T",           "N",
                                           "D",             "E",           "delta_seconds",
                                           "start_epoch",   "feature_names"};

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("invalid JSON in '" + path.string() + "': " + e.what());
  }
}

template <typename T>
T required(const nlohmann::json& j, const char* key, const fs::path& path) {
  if (!j.contains(key)) throw FormatError(path.string() + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw FormatError(path.string() + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace

Dataset load_dataset(const fs::path& dir) {
  const auto meta_path = dir / "meta.json";
  const auto j = read_json(meta_path);
  for (const auto& [key, _] : j.items()) {
    if (!kMetaFields.count(key)) spdlog::warn("{}: ignoring unknown field '{}'", meta_path.string(), key);
  }
  DatasetMeta meta;
  meta.name = j.value("name", dir.filename().string());
  meta.timesteps = required<std::size_t>(j, "T", meta_path);
  meta.nodes = required<std::size_t>(j, "N", meta_path);
  meta.features = required<std::size_t>(j, "D", meta_path);
  meta.delta_seconds = required<std::int64_t>(j, "delta_seconds", meta_path);
  meta.start_epoch = required<std::int64_t>(j, "start_epoch", meta_path);
  meta.feature_names = j.value("feature_names", std::vector<std::string>{});
  if (meta.timesteps == 0 || meta.nodes == 0 || meta.features == 0) {
    throw FormatError(meta_path.string() + ": T, N and D must be positive");
  }
  if (!meta.feature_names.empty() && meta.feature_names.size() != meta.features) {
    throw FormatError(meta_path.string() + ": " + std::to_string(meta.feature_names.size()) +
                      " feature names for D=" + std::to_string(meta.features));
  }
  const auto& radset = radset_feature_names();
  for (const auto& f : meta.feature_names) {
    const bool known = std::find(radset.begin(), radset.end(), f) != radset.end();
    if (meta.name == "RadSet" && !known) {
      spdlog::warn("{}: unknown feature '{}' in the RadSet schema", meta_path.string(), f);
    }
  }

  auto data = read_f64_le(dir / "features.bin", meta.timesteps * meta.nodes * meta.features);
  FeatureSeries series(meta.timesteps, meta.nodes, meta.features, std::move(data),
                       meta.start_epoch, meta.delta_seconds, meta.feature_names);
  auto graph = graph::read_edge_list(dir / "edges.csv", meta.nodes);
  if (j.contains("E") && j.at("E").get<std::size_t>() != graph.n_edges()) {
    spdlog::warn("{}: declares E={} but edges.csv has {} distinct edges", meta_path.string(),
                 j.at("E").get<std::size_t>(), graph.n_edges());
  }
  meta.edges = graph.n_edges();
  meta.feature_names = series.feature_names();
  return {std::move(series), std::move(graph), std::move(meta)};
}

void save_dataset(const fs::path& dir, const std::string& name, const FeatureSeries& series,
                  const graph::RoadGraph& graph) {
  if (graph.n_nodes() != series.nodes()) {
    throw DimensionError("save_dataset: graph has " + std::to_string(graph.n_nodes()) +
                         " nodes, series has " + std::to_string(series.nodes()));
  }
  fs::create_directories(dir);
  DatasetMeta meta{name,
                   series.timesteps(),
                   series.nodes(),
                   graph.n_edges(),
                   series.features(),
                   series.delta_seconds(),
                   series.start_epoch(),
                   series.feature_names()};
  std::ofstream out(dir / "meta.json", std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + (dir / "meta.json").string() + "'");
  out << meta.to_json().dump(2) << '\n';
  out.close();
  write_f64_le(dir / "features.bin", series.data());
  graph::write_edge_list(dir / "edges.csv", graph);
}

nlohmann::json DatasetStats::to_json() const {
  nlohmann::json j = meta.to_json();
  j["features"] = nlohmann::json::array();
  for (const auto& f : features) {
    j["features"].push_back(
        {{"name", f.name}, {"min", f.min}, {"mean", f.mean}, {"max", f.max}, {"stddev", f.stddev}});
  }
  return j;
}

std::string DatasetStats::to_text() const {
  std::ostringstream out;
  out << "dataset    " << meta.name << '\n'
      << "timesteps  " << meta.timesteps << '\n'
      << "nodes      " << meta.nodes << '\n'
      << "edges      " << meta.edges << '\n'
      << "features   " << meta.features << '\n'
      << "interval   " << meta.delta_seconds << " s\n\n";
  std::size_t w = 8;
  for (const auto& f : features) w = std::max(w, f.name.size() + 2);
  out << std::left;
  out.width(static_cast<std::streamsize>(w));
  out << "feature";
  for (const char* h : {"min", "mean", "max", "stddev"}) {
    out.width(14);
    out << std::right << h << std::left;
  }
  out << '\n';
  for (const auto& f : features) {
    out.width(static_cast<std::streamsize>(w));
    out << f.name;
    for (double v : {f.min, f.mean, f.max, f.stddev}) {
      std::ostringstream cell;
      cell.precision(6);
      cell << v;
      out.width(14);
      out << std::right << cell.str() << std::left;
    }
    out << '\n';
  }
  return out.str();
}

DatasetStats stats(const FeatureSeries& series, const graph::RoadGraph& graph,
                   const std::string& name) {
  DatasetStats s;
  s.meta = {name,
            series.timesteps(),
            series.nodes(),
            graph.n_edges(),
            series.features(),
            series.delta_seconds(),
            series.start_epoch(),
            series.feature_names()};
  const std::size_t d = series.features();
  const auto data = series.data();
  for (std::size_t f = 0; f < d; ++f) {
    FeatureStats fsu;
    fsu.name = series.feature_names()[f];
    fsu.min = std::numeric_limits<double>::infinity();
    fsu.max = -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = f; i < data.size(); i += d) {
      fsu.min = std::min(fsu.min, data[i]);
      fsu.max = std::max(fsu.max, data[i]);
      sum += data[i];
      ++count;
    }
    fsu.mean = count ? sum / static_cast<double>(count) : 0.0;
    if (count) fsu.mean = std::clamp(fsu.mean, fsu.min, fsu.max);
    double sq = 0.0;
    for (std::size_t i = f; i < data.size(); i += d) sq += (data[i] - fsu.mean) * (data[i] - fsu.mean);
    fsu.stddev = count ? std::sqrt(sq / static_cast<double>(count)) : 0.0;
    s.features.push_back(fsu);
  }
  return s;
}

}  // namespace radnet::io
