#include <cmath>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "radnet/data_io.hpp"
#include "radnet/gpd.hpp"
#include "radnet/incident.hpp"
#include "radnet/model.hpp"

using namespace radnet;

namespace {

graph::RoadGraph ring(std::size_t n) {
  std::vector<graph::Edge> e;
  for (std::size_t i = 0; i < n; ++i) e.emplace_back(i, (i + 1) % n);
  return graph::RoadGraph(n, e);
}

model::RadNet make_model(std::size_t nodes, std::size_t features) {
  model::RadNetConfig c;
  c.window = 5;
  c.nodes = nodes;
  c.features = features;
  c.seed = 1;
  return model::RadNet(c, ring(nodes));
}

ad::DiffArray random_array(ad::Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  std::vector<double> v(ad::shape_size(shape));
  for (double& x : v) x = n(rng);
  return ad::DiffArray(std::move(shape), std::move(v));
}

void BM_Forward(benchmark::State& state) {
  const auto nodes = static_cast<std::size_t>(state.range(0));
  const auto m = make_model(nodes, 2);
  const auto w = random_array({16, 5, nodes, 2}, 1);
  for (auto _ : state) {
    auto f = m.forward(w);
    benchmark::DoNotOptimize(f.prediction.values().data());
  }
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_Forward)->Arg(4)->Arg(16);

void BM_ForwardBackward(benchmark::State& state) {
  const auto nodes = static_cast<std::size_t>(state.range(0));
  auto m = make_model(nodes, 2);
  const auto w = random_array({16, 5, nodes, 2}, 1);
  const auto y = random_array({16, nodes, 2}, 2);
  for (auto _ : state) {
    m.parameters().zero_grad();
    auto l = model::batch_loss(m.forward(w).prediction, y);
    l.backward();
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_ForwardBackward)->Arg(4)->Arg(16);

void BM_GpdFit(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> y(static_cast<std::size_t>(state.range(0)));
  for (double& v : y) v = 2.0 / 0.1 * (std::pow(1.0 - u(rng), -0.1) - 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(incident::fit_gpd(y));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GpdFit)->Arg(1000)->Arg(100000);

void BM_BaselineBuild(benchmark::State& state) {
  io::SynthConfig s;
  s.nodes = static_cast<std::size_t>(state.range(0));
  s.days = 14;
  s.seed = 4;
  const auto data = io::synth_traffic(s);
  const IndexRange fit[] = {{0, data.series.timesteps()}};
  for (auto _ : state) benchmark::DoNotOptimize(incident::BaselineTable::build(data.series, fit));
}
BENCHMARK(BM_BaselineBuild)->Arg(4)->Arg(24);

}  // namespace

BENCHMARK_MAIN();
