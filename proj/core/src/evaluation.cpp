#include "radnet/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "radnet/error.hpp"

namespace radnet::eval {

namespace {
constexpr int kDefaultPcts[] = {100, 150};
}

Prf1 prf1(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
  if (pred.size() != truth.size()) {
    throw ArgumentError("prf1: " + std::to_string(pred.size()) + " predictions but " +
                        std::to_string(truth.size()) + " truth labels");
  }
  Prf1 r;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0;
    const bool t = truth[i] != 0;
    r.tp += p && t;
    r.fp += p && !t;
    r.fn += !p && t;
  }
  const double tp = static_cast<double>(r.tp);
  if (r.tp + r.fp == 0 || r.tp + r.fn == 0) r.degenerate = true;
  r.precision = r.tp + r.fp == 0 ? 0.0 : tp / static_cast<double>(r.tp + r.fp);
  r.recall = r.tp + r.fn == 0 ? 0.0 : tp / static_cast<double>(r.tp + r.fn);
  const double sum = r.precision + r.recall;
  r.f1 = sum == 0.0 ? 0.0 : 2.0 * r.precision * r.recall / sum;
  return r;
}

std::vector<std::size_t> rank_links(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

std::size_t cutoff(double pct, std::size_t truth_size) {
  if (!(pct > 0.0)) throw ArgumentError("P% must be > 0");
  // Integer arithmetic for integral P% avoids 1.5·8 = 12.000000000000002.
  const double exact = pct * static_cast<double>(truth_size);
  const auto rounded = std::llround(exact);
  if (std::abs(exact - static_cast<double>(rounded)) < 1e-9) {
    return static_cast<std::size_t>((rounded + 99) / 100);
  }
  return static_cast<std::size_t>(std::ceil(exact / 100.0));
}

namespace {

void check_inputs(std::span<const std::size_t> ranking, std::span<const std::size_t> truth) {
  if (ranking.empty()) throw ArgumentError("empty ranking");
  if (truth.empty()) throw ArgumentError("empty truth set");
}

bool in_truth(std::span<const std::size_t> truth, std::size_t id) {
  return std::find(truth.begin(), truth.end(), id) != truth.end();
}

}  // namespace

double hitrate_at(std::span<const std::size_t> ranking, std::span<const std::size_t> truth,
                  double pct) {
  check_inputs(ranking, truth);
  const std::size_t k = std::min(cutoff(pct, truth.size()), ranking.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < k; ++i) hits += in_truth(truth, ranking[i]);
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double ndcg_at(std::span<const std::size_t> ranking, std::span<const std::size_t> truth,
               double pct) {
  check_inputs(ranking, truth);
  const std::size_t k = std::min(cutoff(pct, truth.size()), ranking.size());
  double dcg = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (in_truth(truth, ranking[i])) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  }
  double ideal = 0.0;
  for (std::size_t i = 0; i < std::min(k, truth.size()); ++i) {
    ideal += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  }
  return dcg / ideal;
}

namespace {

nlohmann::json prf1_json(const Prf1& p) {
  return {{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}, {"tp", p.tp},
          {"fp", p.fp},               {"fn", p.fn},         {"degenerate", p.degenerate}};
}

Prf1 prf1_from(const nlohmann::json& j) {
  Prf1 p;
  p.precision = j.at("precision").get<double>();
  p.recall = j.at("recall").get<double>();
  p.f1 = j.at("f1").get<double>();
  p.tp = j.value("tp", std::size_t{0});
  p.fp = j.value("fp", std::size_t{0});
  p.fn = j.value("fn", std::size_t{0});
  p.degenerate = j.value("degenerate", false);
  return p;
}

nlohmann::json pct_map(const std::map<int, double>& m) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : m) j[std::to_string(k)] = v;
  return j;
}

std::map<int, double> pct_map_from(const nlohmann::json& j) {
  std::map<int, double> m;
  for (const auto& [k, v] : j.items()) m[std::stoi(k)] = v.get<double>();
  return m;
}

std::string cell(const std::map<int, double>& m, int pct) {
  const auto it = m.find(pct);
  if (it == m.end()) return "-";
  std::ostringstream s;
  s << std::fixed << std::setprecision(3) << it->second;
  return s.str();
}

}  // namespace

nlohmann::json EvalReport::to_json() const {
  return {{"horizon", horizon},
          {"precision", detection.precision},
          {"recall", detection.recall},
          {"f1", detection.f1},
          {"detection", prf1_json(detection)},
          {"link_detection", prf1_json(link_detection)},
          {"hitrate", pct_map(hitrate)},
          {"ndcg", pct_map(ndcg)},
          {"diagnosed_timesteps", diagnosed_timesteps},
          {"timesteps", timesteps},
          {"metadata", metadata}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  r.horizon = j.at("horizon").get<std::size_t>();
  r.detection = prf1_from(j.at("detection"));
  if (j.contains("link_detection")) r.link_detection = prf1_from(j.at("link_detection"));
  r.hitrate = pct_map_from(j.at("hitrate"));
  r.ndcg = pct_map_from(j.at("ndcg"));
  r.diagnosed_timesteps = j.value("diagnosed_timesteps", std::size_t{0});
  r.timesteps = j.value("timesteps", std::size_t{0});
  r.metadata = j.value("metadata", nlohmann::json::object());
  return r;
}

std::string format_table(std::span<const EvalReport> reports) {
  std::ostringstream out;
  const int w = 8;
  out << std::left << std::setw(4) << "H";
  for (const char* h : {"P", "R", "F1", "H@100", "H@150", "N@100", "N@150"}) {
    out << std::right << std::setw(w) << h;
  }
  out << '\n';
  for (const auto& r : reports) {
    out << std::left << std::setw(4) << r.horizon << std::right << std::fixed
        << std::setprecision(3) << std::setw(w) << r.detection.precision << std::setw(w)
        << r.detection.recall << std::setw(w) << r.detection.f1;
    for (const auto& m : {&r.hitrate, &r.ndcg})
      for (int pct : {100, 150}) out << std::setw(w) << cell(*m, pct);
    out << '\n';
  }
  return out.str();
}

std::string EvalReport::table() const { return format_table(std::span(this, 1)); }

EvalReport evaluate(const incident::IncidentLabels& predicted,
                    const incident::IncidentLabels& truth, std::span<const int> pcts) {
  if (predicted.timesteps != truth.timesteps || predicted.nodes != truth.nodes ||
      predicted.link_scores.size() != truth.link_labels.size()) {
    throw ArgumentError("evaluate: predicted and truth streams are not aligned");
  }
  if (pcts.empty()) pcts = kDefaultPcts;
  EvalReport r;
  r.horizon = truth.horizon;
  r.timesteps = truth.size();
  r.detection = prf1(predicted.network.labels, truth.network.labels);
  r.link_detection = prf1(predicted.link_labels, truth.link_labels);

  std::map<int, double> hit_sum;
  std::map<int, double> ndcg_sum;
  for (int p : pcts) hit_sum[p] = ndcg_sum[p] = 0.0;
  const std::size_t n = truth.nodes;
  std::vector<std::size_t> truth_links;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    truth_links.clear();
    for (std::size_t k = 0; k < n; ++k)
      if (truth.link_labels[i * n + k]) truth_links.push_back(k);
    if (truth_links.empty()) continue;
    ++r.diagnosed_timesteps;
    const auto ranking =
        rank_links(std::span<const double>(predicted.link_scores).subspan(i * n, n));
    for (int p : pcts) {
      hit_sum[p] += hitrate_at(ranking, truth_links, p);
      ndcg_sum[p] += ndcg_at(ranking, truth_links, p);
    }
  }
  const double m = static_cast<double>(std::max<std::size_t>(r.diagnosed_timesteps, 1));
  for (int p : pcts) {
    r.hitrate[p] = hit_sum[p] / m;
    r.ndcg[p] = ndcg_sum[p] / m;
  }
  return r;
}

}  // namespace radnet::eval
