#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "radnet/incident.hpp"

namespace radnet::eval {

struct Prf1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  bool degenerate = false;  // some denominator was zero
};

Prf1 prf1(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth);

/// Link ids ordered by descending score, ties by ascending id.
std::vector<std::size_t> rank_links(std::span<const double> scores);

/// k = ⌈pct/100 · |truth|⌉.
std::size_t cutoff(double pct, std::size_t truth_size);

double hitrate_at(std::span<const std::size_t> ranking, std::span<const std::size_t> truth,
                  double pct);
double ndcg_at(std::span<const std::size_t> ranking, std::span<const std::size_t> truth,
               double pct);

struct EvalReport {
  std::size_t horizon = 1;
  Prf1 detection;
  Prf1 link_detection;
  std::map<int, double> hitrate;  // keyed by P%
  std::map<int, double> ndcg;
  std::size_t diagnosed_timesteps = 0;
  std::size_t timesteps = 0;
  nlohmann::json metadata = nlohmann::json::object();

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
  /// Aligned columns: H P R F1 H@100 H@150 N@100 N@150.
  std::string table() const;
};

/// Header plus one row per report.
std::string format_table(std::span<const EvalReport> reports);

/// Detection metrics on the network-level labels; diagnosis metrics rank
/// links by predicted per-link score at every timestep that has at least one
/// truly incident link. Diagnosis averages are 0 when no such timestep exists.
EvalReport evaluate(const incident::IncidentLabels& predicted,
                    const incident::IncidentLabels& truth, std::span<const int> pcts = {});

}  // namespace radnet::eval
