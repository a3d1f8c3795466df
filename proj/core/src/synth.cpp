#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <spdlog/spdlog.h>

#include "radnet/data_io.hpp"
#include "radnet/error.hpp"

namespace radnet::io {

namespace {

constexpr std::int64_t kDay = 86400;

// Weekday factors, Monday first; weekend traffic lighter.
constexpr double kWeekShape[7] = {0.2, 0.4, 0.4, 0.2, 0.0, -0.6, -1.0};

std::vector<graph::Edge> synth_edges(std::size_t n, std::mt19937_64& rng) {
  std::vector<graph::Edge> edges;
  for (std::size_t i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
  if (n > 2) edges.emplace_back(n - 1, 0);
  std::bernoulli_distribution chord(0.3);
  for (std::size_t i = 0; n > 4 && i < n; ++i) {
    if (chord(rng)) edges.emplace_back(i, (i + 2) % n);
  }
  return edges;
}

bool overlaps(const IncidentEvent& a, const IncidentEvent& b) {
  // Keep one event-length of quiet between events so each stays distinct.
  const std::size_t a_end = a.start + 2 * a.duration;
  const std::size_t b_end = b.start + 2 * b.duration;
  return a.start < b_end && b.start < a_end;
}

}  // namespace

void SynthConfig::validate() const {
  if (nodes < 1) throw ArgumentError("synth: need at least one node");
  if (days < 2) throw ArgumentError("synth: days must be >= 2");
  if (delta_seconds <= 0 || kDay % delta_seconds != 0) {
    throw ArgumentError("synth: interval must divide one day");
  }
  if (features < 1) throw ArgumentError("synth: need at least one feature");
  if (!(depth >= 0.0 && depth <= 1.0)) throw ArgumentError("synth: depth must be in [0, 1]");
  if (duration < 1) throw ArgumentError("synth: incident duration must be >= 1");
  if (noise < 0.0) throw ArgumentError("synth: noise must be >= 0");
  if (days < 8) spdlog::warn("synth: fewer than 8 days leaves one sample per weekday key");
}

nlohmann::json SynthConfig::to_json() const {
  nlohmann::json ev = nlohmann::json::array();
  for (const auto& e : events) {
    ev.push_back({{"start", e.start}, {"link", e.link}, {"duration", e.duration}, {"depth", e.depth}});
  }
  return {{"nodes", nodes},
          {"days", days},
          {"delta_seconds", delta_seconds},
          {"start_epoch", start_epoch},
          {"features", features},
          {"level", level},
          {"daily_amplitude", daily_amplitude},
          {"weekly_amplitude", weekly_amplitude},
          {"noise", noise},
          {"incidents", incidents},
          {"depth", depth},
          {"duration", duration},
          {"events", ev},
          {"seed", seed}};
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
  SynthConfig c;
  c.nodes = j.value("nodes", c.nodes);
  c.days = j.value("days", c.days);
  c.delta_seconds = j.value("delta_seconds", c.delta_seconds);
  c.start_epoch = j.value("start_epoch", c.start_epoch);
  c.features = j.value("features", c.features);
  c.level = j.value("level", c.level);
  c.daily_amplitude = j.value("daily_amplitude", c.daily_amplitude);
  c.weekly_amplitude = j.value("weekly_amplitude", c.weekly_amplitude);
  c.noise = j.value("noise", c.noise);
  c.incidents = j.value("incidents", c.incidents);
  c.depth = j.value("depth", c.depth);
  c.duration = j.value("duration", c.duration);
  c.seed = j.value("seed", c.seed);
  if (j.contains("events")) {
    for (const auto& e : j.at("events")) {
      c.events.push_back({e.at("start").get<std::size_t>(), e.at("link").get<std::size_t>(),
                          e.value("duration", c.duration), e.value("depth", c.depth)});
    }
  }
  return c;
}

SynthResult synth_traffic(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.nodes;
  const std::size_t d = cfg.features;
  const std::size_t steps = cfg.days * static_cast<std::size_t>(kDay / cfg.delta_seconds);
  std::mt19937_64 rng(cfg.seed);
  graph::RoadGraph g(n, synth_edges(n, rng));

  std::vector<std::string> names;
  if (d == radset_feature_names().size()) names = radset_feature_names();
  FeatureSeries series(steps, n, d, std::vector<double>(steps * n * d, 0.0), cfg.start_epoch,
                       cfg.delta_seconds, names);

  std::vector<double> level(n * d);
  std::vector<double> phase(n);
  for (std::size_t i = 0; i < n; ++i) {
    phase[i] = 2.0 * std::numbers::pi * static_cast<double>(i) / (8.0 * static_cast<double>(n));
    for (std::size_t f = 0; f < d; ++f) {
      level[i * d + f] = cfg.level * (1.0 + 0.1 * static_cast<double>(i) / static_cast<double>(n)) *
                         (1.0 + 0.5 * static_cast<double>(f));
    }
  }

  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> raw(n * d);
  auto data = series.mutable_data();
  for (std::size_t t = 0; t < steps; ++t) {
    const double clock = static_cast<double>(series.clock_seconds(t)) / static_cast<double>(kDay);
    const double week = 1.0 + cfg.weekly_amplitude * kWeekShape[series.weekday(t)];
    for (double& r : raw) r = gauss(rng);
    for (std::size_t i = 0; i < n; ++i) {
      const double daily =
          1.0 + cfg.daily_amplitude * std::sin(2.0 * std::numbers::pi * clock + phase[i]);
      const auto& nb = g.neighborhood(i);
      for (std::size_t f = 0; f < d; ++f) {
        double smooth = 0.0;
        for (std::size_t j : nb) smooth += raw[j * d + f];
        smooth /= static_cast<double>(nb.size());
        const double lv = level[i * d + f];
        data[(t * n + i) * d + f] = lv * daily * week + cfg.noise * lv * smooth;
      }
    }
  }

  SynthResult out;
  out.truth.assign(steps * n, 0);
  auto inject = [&](IncidentEvent e) {
    if (e.link >= n) {
      throw ArgumentError("synth: incident link " + std::to_string(e.link) + " >= N=" +
                          std::to_string(n));
    }
    if (e.start >= steps) {
      spdlog::warn("synth: incident at t={} starts after the series end; dropped", e.start);
      return;
    }
    if (e.start + e.duration > steps) {
      spdlog::warn("synth: incident at t={} clipped to the series end", e.start);
      e.duration = steps - e.start;
    }
    for (std::size_t t = e.start; t < e.start + e.duration; ++t) {
      out.truth[t * n + e.link] = 1;
      for (std::size_t f = 0; f < d; ++f) {
        const double factor = f % 2 == 0 ? 1.0 - e.depth : 1.0 + e.depth;
        data[(t * n + e.link) * d + f] *= factor;
      }
    }
    out.events.push_back(e);
  };

  std::vector<IncidentEvent> planned;
  std::uniform_int_distribution<std::size_t> pick_link(0, n - 1);
  if (cfg.incidents > 0 && steps < cfg.duration) throw ArgumentError("synth: series too short");
  std::uniform_int_distribution<std::size_t> pick_start(0, steps - cfg.duration);
  for (std::size_t k = 0; k < cfg.incidents; ++k) {
    IncidentEvent e{0, 0, cfg.duration, cfg.depth};
    bool placed = false;
    for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
      e.start = pick_start(rng);
      e.link = pick_link(rng);
      placed = std::none_of(planned.begin(), planned.end(),
                            [&](const IncidentEvent& o) { return overlaps(e, o); });
    }
    if (!placed) throw ArgumentError("synth: cannot place " + std::to_string(cfg.incidents) + " incidents");
    planned.push_back(e);
  }
  std::sort(planned.begin(), planned.end(),
            [](const IncidentEvent& a, const IncidentEvent& b) { return a.start < b.start; });
  for (const auto& e : planned) inject(e);
  for (const auto& e : cfg.events) inject(e);

  for (double& v : data) v = std::max(v, 0.0);
  out.series = std::move(series);
  out.graph = std::move(g);
  return out;
}

void write_truth_csv(const std::filesystem::path& path, const SynthResult& result) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out << "start,link,duration,depth\n";
  for (const auto& e : result.events) {
    out << e.start << ',' << e.link << ',' << e.duration << ',' << e.depth << '\n';
  }
}

}  // namespace radnet::io
