#include "radnet/incident.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <spdlog/spdlog.h>

#include "radnet/error.hpp"

namespace radnet::incident {

namespace {
constexpr double kNoExcessMargin = 1e-6;
}

BaselineTable::BaselineTable(const BaselineTable& other)
    : entries_(other.entries_),
      frame_size_(other.frame_size_),
      delta_(other.delta_),
      fallbacks_(other.fallbacks_.load()) {}

BaselineTable& BaselineTable::operator=(const BaselineTable& other) {
  entries_ = other.entries_;
  frame_size_ = other.frame_size_;
  delta_ = other.delta_;
  fallbacks_ = other.fallbacks_.load();
  return *this;
}

BaselineTable::BaselineTable(BaselineTable&& other) noexcept
    : entries_(std::move(other.entries_)),
      frame_size_(other.frame_size_),
      delta_(other.delta_),
      fallbacks_(other.fallbacks_.load()) {}

BaselineTable& BaselineTable::operator=(BaselineTable&& other) noexcept {
  entries_ = std::move(other.entries_);
  frame_size_ = other.frame_size_;
  delta_ = other.delta_;
  fallbacks_ = other.fallbacks_.load();
  return *this;
}

BaselineTable BaselineTable::build(const FeatureSeries& series,
                                   std::span<const IndexRange> fit_ranges) {
  const std::size_t fs = series.frame_size();
  // Per-key sums of the matrices observed exactly at that key.
  std::map<Key, Entry> sums;
  for (const auto& r : fit_ranges) {
    if (r.end > series.timesteps() || r.begin > r.end) {
      throw IndexError("baseline fit range [" + std::to_string(r.begin) + ", " +
                       std::to_string(r.end) + ") outside the series");
    }
    for (std::size_t t = r.begin; t < r.end; ++t) {
      auto& e = sums[{series.weekday(t), series.clock_seconds(t)}];
      if (e.mean.empty()) e.mean.assign(fs, 0.0);
      const auto x = series.frame(t);
      for (std::size_t i = 0; i < fs; ++i) e.mean[i] += x[i];
      ++e.count;
    }
  }
  if (sums.empty()) throw ArgumentError("build_baseline: empty fit range");

  BaselineTable table;
  table.frame_size_ = fs;
  table.delta_ = series.delta_seconds();
  for (const auto& [key, _] : sums) {
    Entry out;
    out.mean.assign(fs, 0.0);
    auto it = sums.lower_bound({key.weekday, key.clock - table.delta_});
    const auto stop = sums.upper_bound({key.weekday, key.clock + table.delta_});
    for (; it != stop; ++it) {
      for (std::size_t i = 0; i < fs; ++i) out.mean[i] += it->second.mean[i];
      out.count += it->second.count;
    }
    for (double& v : out.mean) v /= static_cast<double>(out.count);
    table.entries_.emplace(key, std::move(out));
  }
  return table;
}

bool BaselineTable::contains(int weekday, std::int64_t clock) const {
  return entries_.count({weekday, clock}) != 0;
}

std::size_t BaselineTable::count(int weekday, std::int64_t clock) const {
  const auto it = entries_.find({weekday, clock});
  return it == entries_.end() ? 0 : it->second.count;
}

std::vector<BaselineTable::Key> BaselineTable::keys() const {
  std::vector<Key> out;
  out.reserve(entries_.size());
  for (const auto& [k, _] : entries_) out.push_back(k);
  return out;
}

BaselineTable::Lookup BaselineTable::lookup(int weekday, std::int64_t clock) const {
  if (entries_.empty()) throw ArgumentError("baseline table is empty");
  if (const auto it = entries_.find({weekday, clock}); it != entries_.end()) {
    return {it->second.mean, false};
  }
  ++fallbacks_;
  // Nearest weekday that has any keys: same day first, then ±1, ±2, ±3.
  for (int dist = 0; dist <= 3; ++dist) {
    for (int sign : {-1, 1}) {
      const int day = ((weekday + sign * dist) % 7 + 7) % 7;
      const auto first = entries_.lower_bound({day, INT64_MIN});
      const auto last = entries_.lower_bound({day + 1, INT64_MIN});
      if (first == last) {
        if (dist == 0) break;
        continue;
      }
      auto hi = entries_.lower_bound({day, clock});
      if (hi == last) return {std::prev(hi)->second.mean, true};
      if (hi == first) return {hi->second.mean, true};
      const auto lo = std::prev(hi);
      const bool take_lo = clock - lo->first.clock <= hi->first.clock - clock;
      return {(take_lo ? lo : hi)->second.mean, true};
    }
  }
  throw ArgumentError("baseline lookup failed");  // unreachable with a non-empty table
}

BaselineTable::Lookup BaselineTable::at(const FeatureSeries& series, std::size_t t) const {
  if (series.frame_size() != frame_size_) {
    throw DimensionError("baseline frame size " + std::to_string(frame_size_) +
                         " does not match series frame size " +
                         std::to_string(series.frame_size()));
  }
  return lookup(series.weekday(t), series.clock_seconds(t));
}

std::span<const double> ScoreSeries::link_row(std::size_t i) const {
  return std::span<const double>(link).subspan(i * nodes, nodes);
}

std::vector<double> ScoreSeries::link_column(std::size_t node) const {
  std::vector<double> out(size());
  for (std::size_t i = 0; i < size(); ++i) out[i] = link[i * nodes + node];
  return out;
}

void residual_scores(std::span<const double> baseline, std::span<const double> frame,
                     std::size_t nodes, double& network, std::span<double> links) {
  if (baseline.size() != frame.size() || nodes == 0 || frame.size() % nodes != 0 ||
      links.size() != nodes) {
    throw DimensionError("residual_scores: misaligned shapes");
  }
  const std::size_t d = frame.size() / nodes;
  double total = 0.0;
  for (std::size_t n = 0; n < nodes; ++n) {
    double acc = 0.0;
    for (std::size_t f = 0; f < d; ++f) {
      const double diff = baseline[n * d + f] - frame[n * d + f];
      acc += diff * diff;
    }
    links[n] = std::sqrt(acc);
    total += acc;
  }
  network = std::sqrt(total);
}

ScoreSeries residuals(const BaselineTable& baseline, const FeatureSeries& series,
                      std::span<const std::size_t> timesteps, std::span<const double> frames) {
  const std::size_t fs = series.frame_size();
  if (frames.size() != timesteps.size() * fs) {
    throw DimensionError("residuals: " + std::to_string(frames.size()) + " values for " +
                         std::to_string(timesteps.size()) + " frames of size " +
                         std::to_string(fs));
  }
  ScoreSeries out;
  out.nodes = series.nodes();
  out.timesteps.assign(timesteps.begin(), timesteps.end());
  out.network.resize(timesteps.size());
  out.link.resize(timesteps.size() * out.nodes);
  for (std::size_t i = 0; i < timesteps.size(); ++i) {
    const auto b = baseline.at(series, timesteps[i]).mean;
    residual_scores(b, frames.subspan(i * fs, fs), out.nodes, out.network[i],
                    std::span<double>(out.link).subspan(i * out.nodes, out.nodes));
  }
  return out;
}

ScoreSeries residuals(const BaselineTable& baseline, const FeatureSeries& series,
                      std::span<const std::size_t> timesteps) {
  std::vector<double> frames;
  frames.reserve(timesteps.size() * series.frame_size());
  for (std::size_t t : timesteps) {
    const auto x = series.frame(t);
    frames.insert(frames.end(), x.begin(), x.end());
  }
  return residuals(baseline, series, timesteps, frames);
}

double percentile(std::span<const double> values, double p) {
  if (values.empty()) throw ArgumentError("percentile of an empty sequence");
  if (!(p >= 0.0 && p <= 100.0)) throw ArgumentError("percentile must lie in [0, 100]");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double pos = p / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

void PotConfig::validate() const {
  if (!(q0_percentile >= 0.0 && q0_percentile < 100.0)) {
    throw ArgumentError("initial percentile must lie in [0, 100)");
  }
  if (!(risk > 0.0 && risk < 1.0)) throw ArgumentError("risk level must lie in (0, 1)");
  if (refit_every < 1) throw ArgumentError("refit cadence must be >= 1");
}

nlohmann::json PotConfig::to_json() const {
  return {{"q0_percentile", q0_percentile},
          {"risk", risk},
          {"dynamic", dynamic},
          {"refit_every", refit_every},
          {"min_excesses", min_excesses}};
}

PotConfig PotConfig::from_json(const nlohmann::json& j) {
  PotConfig c;
  c.q0_percentile = j.value("q0_percentile", c.q0_percentile);
  c.risk = j.value("risk", c.risk);
  c.dynamic = j.value("dynamic", c.dynamic);
  c.refit_every = j.value("refit_every", c.refit_every);
  c.min_excesses = j.value("min_excesses", c.min_excesses);
  return c;
}

void ThresholdState::refit() {
  n_excess = excesses.size();
  no_excesses = n_excess == 0;
  moments_fallback = false;
  if (no_excesses) {
    spdlog::warn("POT: no scores above the initial threshold {:.6g}; using max score", u);
    phi = max_score > 0.0 ? max_score * (1.0 + kNoExcessMargin) : max_score + kNoExcessMargin;
    return;
  }
  if (n_excess == 1) {
    shape = 0.0;
    scale = std::max(excesses.front(), std::numeric_limits<double>::min());
  } else {
    const auto fit = fit_gpd(excesses);
    shape = fit.shape;
    scale = fit.scale;
    moments_fallback = fit.moments_fallback;
  }
  phi = std::max(u, pot_quantile(u, shape, scale, risk, n, n_excess));
}

nlohmann::json ThresholdState::to_json() const {
  return {{"u", u},          {"shape", shape}, {"scale", scale},
          {"risk", risk},    {"n", n},         {"n_excess", n_excess},
          {"phi", phi},      {"moments_fallback", moments_fallback},
          {"no_excesses", no_excesses}};
}

ThresholdState pot_fit(std::span<const double> calibration, double q0_percentile, double risk) {
  if (calibration.empty()) throw ArgumentError("pot_fit: empty calibration sequence");
  if (!(risk > 0.0 && risk < 1.0)) throw ArgumentError("risk level must lie in (0, 1)");
  ThresholdState s;
  s.risk = risk;
  s.u = percentile(calibration, q0_percentile);
  s.n = calibration.size();
  s.max_score = *std::max_element(calibration.begin(), calibration.end());
  for (double v : calibration)
    if (v > s.u) s.excesses.push_back(v - s.u);
  if (!s.excesses.empty() && s.excesses.size() < 50) {
    spdlog::warn("POT: only {} excesses above u={:.6g}; the tail fit is unreliable",
                 s.excesses.size(), s.u);
  }
  s.refit();
  return s;
}

LabelStream label(std::span<const double> scores, ThresholdState state, bool dynamic,
                  std::size_t refit_every) {
  if (refit_every < 1) throw ArgumentError("refit cadence must be >= 1");
  LabelStream out;
  out.scores.assign(scores.begin(), scores.end());
  out.thresholds.reserve(scores.size());
  out.labels.reserve(scores.size());
  std::size_t since_refit = 0;
  for (double s : scores) {
    const bool flagged = s >= state.phi;
    out.thresholds.push_back(state.phi);
    out.labels.push_back(flagged ? 1 : 0);
    if (!dynamic || flagged) continue;
    ++state.n;
    state.max_score = std::max(state.max_score, s);
    if (s > state.u) state.excesses.push_back(s - state.u);
    if (++since_refit >= refit_every) {
      state.refit();
      since_refit = 0;
    }
  }
  return out;
}

LabelStream label_with(std::span<const double> scores, std::span<const double> thresholds) {
  if (scores.size() != thresholds.size()) {
    throw ArgumentError("label_with: " + std::to_string(scores.size()) + " scores but " +
                        std::to_string(thresholds.size()) + " thresholds");
  }
  LabelStream out;
  out.scores.assign(scores.begin(), scores.end());
  out.thresholds.assign(thresholds.begin(), thresholds.end());
  out.labels.resize(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out.labels[i] = scores[i] >= thresholds[i] ? 1 : 0;
  return out;
}

void IncidentLabels::append(const IncidentLabels& other) {
  if (timesteps.empty() && nodes == 0) {
    nodes = other.nodes;
    horizon = other.horizon;
  }
  if (other.nodes != nodes) throw DimensionError("IncidentLabels::append: node count mismatch");
  timesteps.insert(timesteps.end(), other.timesteps.begin(), other.timesteps.end());
  auto cat = [](auto& a, const auto& b) { a.insert(a.end(), b.begin(), b.end()); };
  cat(network.scores, other.network.scores);
  cat(network.thresholds, other.network.thresholds);
  cat(network.labels, other.network.labels);
  cat(link_scores, other.link_scores);
  cat(link_thresholds, other.link_thresholds);
  cat(link_labels, other.link_labels);
}

Detector calibrate(const ScoreSeries& calibration, const PotConfig& config) {
  config.validate();
  Detector d;
  d.config = config;
  d.network = pot_fit(calibration.network, config.q0_percentile, config.risk);
  d.links.reserve(calibration.nodes);
  for (std::size_t n = 0; n < calibration.nodes; ++n) {
    d.links.push_back(pot_fit(calibration.link_column(n), config.q0_percentile, config.risk));
  }
  return d;
}

IncidentLabels generate_ground_truth(const Detector& detector, const ScoreSeries& truth,
                                     std::size_t horizon) {
  if (detector.links.size() != truth.nodes) {
    throw DimensionError("detector has " + std::to_string(detector.links.size()) +
                         " link states but scores cover " + std::to_string(truth.nodes) + " links");
  }
  const auto& cfg = detector.config;
  IncidentLabels out;
  out.horizon = horizon;
  out.nodes = truth.nodes;
  out.timesteps = truth.timesteps;
  out.network = label(truth.network, detector.network, cfg.dynamic, cfg.refit_every);
  const std::size_t m = truth.size();
  out.link_scores = truth.link;
  out.link_thresholds.resize(m * truth.nodes);
  out.link_labels.resize(m * truth.nodes);
  for (std::size_t n = 0; n < truth.nodes; ++n) {
    const auto stream =
        label(truth.link_column(n), detector.links[n], cfg.dynamic, cfg.refit_every);
    for (std::size_t i = 0; i < m; ++i) {
      out.link_thresholds[i * truth.nodes + n] = stream.thresholds[i];
      out.link_labels[i * truth.nodes + n] = stream.labels[i];
    }
  }
  return out;
}

IncidentLabels label_predictions(const ScoreSeries& predicted, const IncidentLabels& truth) {
  if (predicted.timesteps != truth.timesteps || predicted.nodes != truth.nodes) {
    throw ArgumentError("label_predictions: predicted scores are not aligned with the truth stream");
  }
  IncidentLabels out;
  out.horizon = truth.horizon;
  out.nodes = truth.nodes;
  out.timesteps = truth.timesteps;
  out.network = label_with(predicted.network, truth.network.thresholds);
  out.link_scores = predicted.link;
  out.link_thresholds = truth.link_thresholds;
  const auto links = label_with(predicted.link, truth.link_thresholds);
  out.link_labels = links.labels;
  return out;
}

void write_labels_csv(const std::filesystem::path& path, const IncidentLabels& labels) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write labels '" + path.string() + "'");
  out.precision(17);
  out << "timestep,link_id,score,threshold,label\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out << labels.timesteps[i] << ",-1," << labels.network.scores[i] << ','
        << labels.network.thresholds[i] << ',' << int(labels.network.labels[i]) << '\n';
    for (std::size_t n = 0; n < labels.nodes; ++n) {
      const std::size_t k = i * labels.nodes + n;
      out << labels.timesteps[i] << ',' << n << ',' << labels.link_scores[k] << ','
          << labels.link_thresholds[k] << ',' << int(labels.link_labels[k]) << '\n';
    }
  }
}

IncidentLabels read_labels_csv(const std::filesystem::path& path, std::size_t horizon) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open labels '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != "timestep,link_id,score,threshold,label") {
    throw FormatError(path.string() + ": expected header 'timestep,link_id,score,threshold,label'");
  }
  IncidentLabels out;
  out.horizon = horizon;
  std::size_t row = 1;
  std::vector<std::size_t> links_seen;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::size_t t = 0;
    long long link = 0;
    double score = 0.0;
    double thr = 0.0;
    int lab = 0;
    char c1 = 0, c2 = 0, c3 = 0, c4 = 0;
    if (!(ss >> t >> c1 >> link >> c2 >> score >> c3 >> thr >> c4 >> lab) || c1 != ',' ||
        c2 != ',' || c3 != ',' || c4 != ',' || (lab != 0 && lab != 1)) {
      throw FormatError(path.string() + ": malformed row " + std::to_string(row) + ": '" +
                        line + "'");
    }
    if (link < 0) {
      out.timesteps.push_back(t);
      out.network.scores.push_back(score);
      out.network.thresholds.push_back(thr);
      out.network.labels.push_back(static_cast<std::uint8_t>(lab));
      links_seen.push_back(0);
    } else {
      if (out.timesteps.empty() || out.timesteps.back() != t ||
          static_cast<std::size_t>(link) != links_seen.back()) {
        throw FormatError(path.string() + ": row " + std::to_string(row) +
                          " is out of order: '" + line + "'");
      }
      ++links_seen.back();
      out.link_scores.push_back(score);
      out.link_thresholds.push_back(thr);
      out.link_labels.push_back(static_cast<std::uint8_t>(lab));
    }
  }
  out.nodes = links_seen.empty() ? 0 : links_seen.front();
  for (std::size_t k : links_seen) {
    if (k != out.nodes) throw FormatError(path.string() + ": inconsistent link count per timestep");
  }
  return out;
}

double PercentileSchedule::at(std::size_t horizon_index) const {
  return std::max(0.0, initial - delta * static_cast<double>(horizon_index));
}

PercentileSchedule PercentileSchedule::preset(const std::string& dataset) {
  std::string key;
  for (char c : dataset) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      key += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  if (key == "radset") return {99.0, 0.5};
  if (key == "metrla") return {50.0, 2.5};
  if (key == "pems" || key == "pemsbay") return {45.0, 2.5};
  throw ArgumentError("no percentile preset for dataset '" + dataset + "'");
}

}  // namespace radnet::incident
