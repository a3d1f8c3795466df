// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "radnet/data_io.hpp"
#include "radnet/evaluation.hpp"
#include "radnet/gpd.hpp"
#include "radnet/grad_check.hpp"
#include "radnet/incident.hpp"
#include "radnet/model.hpp"
#include "radnet/pipeline.hpp"
#include "radnet/training.hpp"

using namespace radnet;
using ad::DiffArray;

namespace {

// Pinned tolerances and budgets.
constexpr double kGradTolerance = 1e-4;
constexpr double kGradBudgetSeconds = 30.0;
constexpr double kSimplexTolerance = 1e-9;
constexpr double kBaselineTolerance = 1e-12;
constexpr double kShapeLo = 0.05, kShapeHi = 0.15;
constexpr double kScaleLo = 1.9, kScaleHi = 2.1;
constexpr double kExpQuantileTolerance = 0.02;
constexpr double kMinF1 = 0.7;
constexpr double kMinHitRate = 0.6;
constexpr double kEndToEndBudgetSeconds = 600.0;
constexpr double kTeacherForcingP = 0.2;
constexpr double kTeacherForcingTolerance = 0.01;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

DiffArray uniform(ad::Shape shape, std::mt19937_64& rng, double lo, double hi,
                  bool requires_grad = false) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(ad::shape_size(shape));
  for (double& x : v) x = u(rng);
  return DiffArray(std::move(shape), std::move(v), requires_grad);
}

graph::RoadGraph ring(std::size_t n) {
  std::vector<graph::Edge> e;
  for (std::size_t i = 0; i < n; ++i) e.emplace_back(i, (i + 1) % n);
  return graph::RoadGraph(n, e);
}

model::RadNetConfig toy_config() {
  model::RadNetConfig c;
  c.window = 5;
  c.nodes = 4;
  c.features = 1;
  c.seed = 1;
  return c;
}

io::SynthConfig benchmark_synth() {
  io::SynthConfig s;
  s.nodes = 4;
  s.days = 14;
  s.delta_seconds = 300;
  s.incidents = 20;
  s.depth = 0.5;
  s.duration = 6;
  s.noise = 0.03;
  s.seed = 7;
  return s;
}

Outcome gradient_fidelity() {
  const auto t0 = std::chrono::steady_clock::now();
  auto cfg = toy_config();
  cfg.dropout = 0.0;
  model::RadNet m(cfg, ring(4));
  std::mt19937_64 rng(11);
  auto w = uniform({2, 5, 4, 1}, rng, -1.0, 1.0, true);
  auto y = uniform({2, 4, 1}, rng, -1.0, 1.0);
  std::vector<DiffArray> params{w};
  for (auto& p : m.parameters().entries()) params.push_back(p.value);
  const auto r = ad::grad_check([&] { return model::batch_loss(m.forward(w).prediction, y); }, params);
  const double secs = seconds_since(t0);
  return {r.max_relative_error < kGradTolerance && secs < kGradBudgetSeconds,
          fmt("max relative error %.3g over %zu entries (limit %.0e), %.1f s (limit %.0f s)",
              r.max_relative_error, r.checked, kGradTolerance, secs, kGradBudgetSeconds)};
}

Outcome fusion_convexity() {
  model::RadNet m(toy_config(), ring(4));
  std::mt19937_64 rng(12);
  double worst_sum = 0.0;
  double min_weight = 1.0;
  for (int i = 0; i < 1000; ++i) {
    const auto f = m.forward(uniform({5, 4, 1}, rng, -10.0, 10.0));
    double total = 0.0;
    for (double v : f.path_weights->values()) {
      min_weight = std::min(min_weight, v);
      total += v;
    }
    worst_sum = std::max(worst_sum, std::abs(total - 1.0));
  }
  return {min_weight >= 0.0 && worst_sum <= kSimplexTolerance,
          fmt("min weight %.3g, max |sum - 1| %.3g over 1000 inputs", min_weight, worst_sum)};
}

Outcome attention_normalization() {
  std::mt19937_64 rng(13);
  ad::Rng init(13);
  ad::ParameterStore store;
  graph::GatLayer gat(store, "gat", {3, 4, 2, graph::HeadAggregation::kConcat}, init);
  graph::RoadGraph g(6, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {0, 3}, {1, 5}});
  temporal::MultiHeadAttention mha(store, "mha", 4, 2, init);
  const auto mask = ad::causal_mask(7);
  double worst = 0.0;
  double future = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = uniform({6, 3}, rng, -5.0, 5.0);
    for (std::size_t h = 0; h < 2; ++h) {
      const auto a = gat.attention(x, g, h);
      for (std::size_t i = 0; i < 6; ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < 6; ++j) {
          total += a.at({i, j});
          if (!g.adjacent(i, j)) future = std::max(future, std::abs(a.at({i, j})));
        }
        worst = std::max(worst, std::abs(total - 1.0));
      }
    }
    const auto q = uniform({2, 7, 4}, rng, -3.0, 3.0);
    for (std::size_t h = 0; h < 2; ++h) {
      const auto a = mha.attention_weights(q, q, h, &mask);
      for (std::size_t b = 0; b < 2; ++b) {
        for (std::size_t i = 0; i < 7; ++i) {
          double total = 0.0;
          for (std::size_t j = 0; j < 7; ++j) {
            const double v = a.at({b, i, j});
            total += v;
            if (j > i) future = std::max(future, std::abs(v));
          }
          worst = std::max(worst, std::abs(total - 1.0));
        }
      }
    }
  }
  return {worst <= kSimplexTolerance && future == 0.0,
          fmt("max |row sum - 1| %.3g, max masked weight %.3g", worst, future)};
}

Outcome baseline_oracle() {
  auto s = benchmark_synth();
  s.incidents = 0;
  s.noise = 0.1;
  const auto data = io::synth_traffic(s);
  const auto& series = data.series;
  const IndexRange fit[] = {{0, series.timesteps()}};
  const auto table = incident::BaselineTable::build(series, fit);
  const std::size_t frame = series.frame_size();
  double worst = 0.0;
  std::size_t count_mismatch = 0;
  const auto keys = table.keys();
  for (const auto& key : keys) {
    std::vector<double> sum(frame, 0.0);
    std::size_t count = 0;
    for (std::size_t t = 0; t < series.timesteps(); ++t) {
      if (series.weekday(t) != key.weekday) continue;
      if (std::llabs(series.clock_seconds(t) - key.clock) > series.delta_seconds()) continue;
      for (std::size_t i = 0; i < frame; ++i) sum[i] += series.frame(t)[i];
      ++count;
    }
    count_mismatch += count != table.count(key.weekday, key.clock);
    const auto got = table.lookup(key.weekday, key.clock).mean;
    for (std::size_t i = 0; i < frame; ++i) {
      const double ref = sum[i] / static_cast<double>(count);
      worst = std::max(worst, std::abs(got[i] - ref) / std::max(1.0, std::abs(ref)));
    }
  }
  return {worst <= kBaselineTolerance && count_mismatch == 0 && keys.size() == 7 * 288,
          fmt("%zu keys, max deviation %.3g, %zu count mismatches", keys.size(), worst,
              count_mismatch)};
}

Outcome gpd_recovery() {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> y(100000);
  for (double& v : y) v = incident::gpd_inverse_cdf(0.1, 2.0, u(rng));
  const auto fit = incident::fit_gpd(y);

  std::exponential_distribution<double> e(1.0);
  const std::size_t n = 200000;
  const double thresh = 3.0;
  std::vector<double> tail;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = e(rng);
    if (v > thresh) tail.push_back(v - thresh);
  }
  const auto exp_fit = incident::fit_gpd(tail);
  const double risk = 1e-4;
  const double est =
      incident::pot_quantile(thresh, exp_fit.shape, exp_fit.scale, risk, n, tail.size());
  const double closed = -std::log(risk);
  const double rel = std::abs(est / closed - 1.0);
  const bool ok = fit.shape >= kShapeLo && fit.shape <= kShapeHi && fit.scale >= kScaleLo &&
                  fit.scale <= kScaleHi && rel < kExpQuantileTolerance;
  return {ok, fmt("shape %.4f, scale %.4f; exponential quantile %.4f vs %.4f (rel %.3g)",
                  fit.shape, fit.scale, est, closed, rel)};
}

Outcome metric_oracles() {
  std::mt19937_64 rng(15);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 30;
    std::vector<std::uint8_t> pred(n), truth(n);
    for (auto& v : pred) v = rng() % 2;
    for (auto& v : truth) v = rng() % 2;
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      tp += pred[i] && truth[i];
      fp += pred[i] && !truth[i];
      fn += !pred[i] && truth[i];
    }
    const double p = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double r = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    const double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    const auto m = eval::prf1(pred, truth);
    mismatches += m.tp != tp || m.fp != fp || m.fn != fn || m.precision != p || m.recall != r ||
                  m.f1 != f;

    const std::size_t links = 2 + rng() % 15;
    std::vector<double> scores(links);
    for (double& s : scores) s = static_cast<double>(rng() % 5);
    std::vector<std::size_t> ids(links);
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin(), ids.end(), rng);
    const std::vector<std::size_t> incident(ids.begin(), ids.begin() + 1 + rng() % links);
    std::vector<std::size_t> order(links);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
    });
    const auto ranking = eval::rank_links(scores);
    mismatches += ranking != order;
    for (int pct : {100, 150}) {
      const std::size_t k = std::min<std::size_t>((pct * incident.size() + 99) / 100, links);
      double hits = 0.0, dcg = 0.0, ideal = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        const bool hit = std::count(incident.begin(), incident.end(), order[i]) > 0;
        hits += hit;
        if (hit) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
        if (i < incident.size()) ideal += 1.0 / std::log2(static_cast<double>(i) + 2.0);
      }
      mismatches += eval::hitrate_at(ranking, incident, pct) !=
                    hits / static_cast<double>(incident.size());
      mismatches += eval::ndcg_at(ranking, incident, pct) != dcg / ideal;
    }
  }
  const bool worked = eval::cutoff(100, 8) == 8 && eval::cutoff(150, 8) == 12;
  return {mismatches == 0 && worked,
          fmt("%zu mismatches over 1000 instances; 8 incident links -> top %zu at 100%%, top %zu "
              "at 150%%",
              mismatches, eval::cutoff(100, 8), eval::cutoff(150, 8))};
}

Outcome end_to_end() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto data = io::synth_traffic(benchmark_synth());
  pipeline::PipelineConfig pc;
  pc.model.seed = 7;
  pc.train.seed = 7;
  pc.pot.q0_percentile = 90.0;
  pc.pot.risk = 0.01;
  const auto run = pipeline::run_detection(data.series, data.graph, pc, 1);
  const double secs = seconds_since(t0);
  const auto& r = run.report;
  const bool ok =
      r.detection.f1 >= kMinF1 && r.hitrate.at(100) >= kMinHitRate && secs < kEndToEndBudgetSeconds;
  return {ok, fmt("F1 %.3f (P %.3f, R %.3f), HitRate@100%% %.3f, NDCG@100%% %.3f, %.0f s",
                  r.detection.f1, r.detection.precision, r.detection.recall, r.hitrate.at(100),
                  r.ndcg.at(100), secs)};
}

Outcome ablation_ordering() {
  const auto data = io::synth_traffic(benchmark_synth());
  const std::uint64_t seeds[] = {1, 2, 3};
  struct Row {
    std::string name;
    double mean = 0.0;
    double sd = 0.0;
  };
  std::vector<Row> rows;
  for (const char* v : {"full", "no_skip", "no_st", "no_ts"}) {
    std::vector<double> mse;
    for (auto seed : seeds) {
      pipeline::PipelineConfig pc;
      pc.model.variant = model::parse_variant(v);
      pc.model.seed = seed;
      pc.train.seed = seed;
      const auto mcfg = pipeline::model_config_for(pc, data.series, 1);
      const auto splits = training::split_folds(data.series.timesteps(), pc.train.folds, mcfg.window, 1);
      model::RadNet m(mcfg, data.graph);
      mse.push_back(training::train(m, data.series, splits.back(), pc.train).best_validation_mse);
    }
    Row row{v};
    row.mean = std::accumulate(mse.begin(), mse.end(), 0.0) / 3.0;
    for (double x : mse) row.sd += (x - row.mean) * (x - row.mean) / 2.0;
    row.sd = std::sqrt(row.sd);
    rows.push_back(row);
  }
  bool ok = true;
  std::string detail;
  for (const auto& row : rows) {
    detail += fmt("%s %.5f±%.5f  ", row.name.c_str(), row.mean, row.sd);
    if (row.name != "full") ok = ok && rows[0].mean <= row.mean + std::max(rows[0].sd, row.sd);
  }
  return {ok, detail + "(full ≤ ablated + max sd)"};
}

Outcome radnet_star() {
  auto cfg = toy_config();
  model::RadNet m(cfg, ring(4));
  std::mt19937_64 rng(16);
  std::size_t differing = 0;
  for (int i = 0; i < 50; ++i) {
    const auto w = uniform({3, 5, 4, 1}, rng, -2.0, 2.0);
    const auto a = model::rollout_autoregressive(m, w, 1);
    const auto b = m.forward(w).prediction;
    differing += !std::equal(a.values().begin(), a.values().end(), b.values().begin(),
                             b.values().end());
  }
  model::TeacherForcing forcing(kTeacherForcingP, 2024);
  std::size_t hits = 0;
  const std::size_t draws = 10000;
  for (std::size_t i = 0; i < draws; ++i) hits += forcing.draw();
  const double freq = static_cast<double>(hits) / draws;
  return {differing == 0 && std::abs(freq - kTeacherForcingP) <= kTeacherForcingTolerance,
          fmt("%zu/50 rollouts differ from forward; teacher-forcing frequency %.4f", differing, freq)};
}

Outcome parameter_ledger() {
  model::RadNet m(toy_config(), ring(4));
  // N=4, D=1 flattens to width w = 4 with one head.
  const std::size_t w = 4, flat = 4, ff = 16;
  const std::size_t gat = 1 + 2 + 1;
  const std::size_t mha = 4 * w * w;
  const std::size_t encoder = mha + 2 * w + (w * ff + ff + ff * w + w) + 2 * w;
  const std::size_t decoder = 2 * mha + 4 * w;
  const std::size_t fusion = flat * 3 + 3;
  const std::size_t head = flat * 64 + 64 + 64 * 64 + 64 + 64 * flat + flat;
  const std::size_t expected = 2 * (gat + encoder + decoder) + fusion + head;
  const std::size_t counted = model::count_parameters(m);

  std::printf("  recorded, not asserted: published RadNet 5-min F1 RadSet 0.930, METR-LA 0.678, "
              "PEMS 0.617\n");
  std::printf("  recorded, not asserted: published parameter counts METR-LA 1.16M, PEMS 2.93M, "
              "RadSet 0.77M\n");
  for (const auto& ref : io::reference_datasets()) {
    model::RadNetConfig c;
    c.nodes = ref.nodes;
    c.features = ref.features;
    model::RadNet full_size(c, graph::RoadGraph(ref.nodes, {}));
    std::printf("  this implementation at %s shape (N=%zu, D=%zu): %zu parameters\n",
                ref.name.c_str(), ref.nodes, ref.features, model::count_parameters(full_size));
  }
  return {counted == expected,
          fmt("toy model has %zu parameters, analytic ledger %zu", counted, expected)};
}

}  // namespace

/// Optional arguments select criteria by number; none runs all.
int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::err);
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient fidelity", gradient_fidelity},
      {"fusion convexity", fusion_convexity},
      {"attention normalization", attention_normalization},
      {"baseline oracle", baseline_oracle},
      {"GPD recovery", gpd_recovery},
      {"metric oracles", metric_oracles},
      {"end-to-end synthetic", end_to_end},
      {"ablation ordering", ablation_ordering},
      {"autoregressive consistency", radnet_star},
      {"parameter ledger", parameter_ledger},
  };
  std::vector<bool> selected(criteria.size(), argc < 2);
  for (int a = 1; a < argc; ++a) {
    const auto k = static_cast<std::size_t>(std::atoi(argv[a]));
    if (k >= 1 && k <= criteria.size()) selected[k - 1] = true;
  }
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected[i]) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
