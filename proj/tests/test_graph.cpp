#include <doctest.h>

#include <cmath>
#include <fstream>

#include "radnet/error.hpp"
#include "radnet/grad_check.hpp"
#include "radnet/graph.hpp"
#include "test_support.hpp"

using namespace radnet;
using namespace radnet::graph;
using ad::DiffArray;
using radnet::testing::random_array;

namespace {

double lrelu(double x) { return x > 0 ? x : 0.01 * x; }
double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void set_head(const GatLayer& layer, std::size_t h, double w, double src, double dst, double bias) {
  auto head = layer.heads()[h];
  head.weight.mutable_values()[0] = w;
  head.score_src.mutable_values()[0] = src;
  head.score_dst.mutable_values()[0] = dst;
  head.score_bias.mutable_values()[0] = bias;
}

}  // namespace

TEST_CASE("road graph invariants") {
  RoadGraph g(4, {{0, 1}, {1, 0}, {2, 2}, {1, 2}});
  CHECK(g.n_edges() == 2);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& hood = g.neighborhood(i);
    CHECK(std::find(hood.begin(), hood.end(), i) != hood.end());
    for (std::size_t j = 0; j < 4; ++j) CHECK(g.adjacent(i, j) == g.adjacent(j, i));
  }
  CHECK(g.neighborhood(3) == std::vector<std::size_t>{3});
  CHECK(g.neighborhood(1) == std::vector<std::size_t>{0, 1, 2});
  CHECK_THROWS_AS(RoadGraph(3, {{0, 3}}), StructuralError);
  CHECK_THROWS_AS(g.neighborhood(4), IndexError);
}

TEST_CASE("edge list files") {
  const auto dir = radnet::testing::scratch_dir("graph");
  RoadGraph g(5, {{0, 1}, {1, 2}, {3, 4}});
  write_edge_list(dir / "ok.csv", g);
  CHECK(read_edge_list(dir / "ok.csv", 5).edges() == g.edges());

  {
    std::ofstream f(dir / "bad.csv");
    f << "src,dst\n0,1\n1,7\n";
  }
  try {
    read_edge_list(dir / "bad.csv", 5);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("row 3") != std::string::npos);
  }
  {
    std::ofstream f(dir / "junk.csv");
    f << "src,dst\n0;1\n";
  }
  CHECK_THROWS_AS(read_edge_list(dir / "junk.csv", 5), FormatError);
}

TEST_CASE("isolated node attends only to itself") {
  ad::ParameterStore store;
  ad::Rng rng(1);
  GatLayer gat(store, "gat", {1, 1, 1}, rng);
  RoadGraph g(1, {});
  auto x = DiffArray::matrix({{0.7}});
  CHECK(gat.attention_coefficients(x, g, 0).at(0, 0) == doctest::Approx(1.0));
  const double w = gat.heads()[0].weight.values()[0];
  CHECK(gat.forward(x, g).item() == doctest::Approx(sigm(w * 0.7)));
}

TEST_CASE("symmetric pair splits attention evenly") {
  ad::ParameterStore store;
  ad::Rng rng(2);
  GatLayer gat(store, "gat", {1, 1, 1}, rng);
  RoadGraph g(2, {{0, 1}});
  auto x = DiffArray::matrix({{1.3}, {1.3}});
  const auto map = gat.attention_coefficients(x, g, 0);
  CHECK(map.at(0, 0) == doctest::Approx(0.5));
  CHECK(map.at(0, 1) == doctest::Approx(0.5));
  CHECK(map.at(1, 0) == doctest::Approx(0.5));
}

TEST_CASE("three-node path hand-evaluated") {
  ad::ParameterStore store;
  ad::Rng rng(3);
  GatLayer gat(store, "gat", {1, 1, 1}, rng);
  const double w = 0.8, src = 0.5, dst = -1.2, bias = 0.1;
  set_head(gat, 0, w, src, dst, bias);
  RoadGraph g(3, {{0, 1}, {1, 2}});
  const std::vector<double> h{1.0, -2.0, 0.5};
  auto x = DiffArray::matrix({{h[0]}, {h[1]}, {h[2]}});

  const auto out = gat.forward(x, g);
  const auto map = gat.attention_coefficients(x, g, 0);
  for (std::size_t i = 0; i < 3; ++i) {
    std::vector<std::size_t> hood;
    for (std::size_t j = 0; j < 3; ++j)
      if (i == j || (i > j ? i - j : j - i) == 1) hood.push_back(j);
    double z = 0.0;
    for (std::size_t j : hood) z += std::exp(lrelu(src * w * h[i] + dst * w * h[j] + bias));
    double agg = 0.0;
    for (std::size_t j : hood) {
      const double a = std::exp(lrelu(src * w * h[i] + dst * w * h[j] + bias)) / z;
      CHECK(map.at(i, j) == doctest::Approx(a).epsilon(1e-12));
      agg += a * w * h[j];
    }
    CHECK(out.values()[i] == doctest::Approx(sigm(agg)).epsilon(1e-12));
  }
  CHECK(map.at(0, 2) == 0.0);
}

TEST_CASE("zero weights give one half") {
  ad::ParameterStore store;
  ad::Rng rng(4);
  GatLayer gat(store, "gat", {3, 2, 2, HeadAggregation::kConcat}, rng);
  for (auto& p : store.entries())
    for (double& v : p.value.mutable_values()) v = 0.0;
  RoadGraph g(4, {{0, 1}, {1, 2}, {2, 3}});
  std::mt19937_64 r(5);
  const auto y = gat.forward(random_array({4, 3}, r, false), g);
  CHECK(y.shape() == ad::Shape{4, 4});
  for (double v : y.values()) CHECK(v == 0.5);
}

TEST_CASE("attention rows are distributions over the neighborhood") {
  ad::ParameterStore store;
  ad::Rng rng(6);
  GatLayer gat(store, "gat", {2, 3, 2}, rng);
  RoadGraph g(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4}, {1, 3}});
  std::mt19937_64 r(7);
  auto x = random_array({5, 2}, r, false, -3.0, 3.0);
  for (std::size_t head = 0; head < 2; ++head) {
    const auto dense = gat.attention(x, g, head);
    for (std::size_t i = 0; i < 5; ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < 5; ++j) {
        const double a = dense.at({i, j});
        CHECK(a >= 0.0);
        if (!g.adjacent(i, j)) CHECK(a == 0.0);
        total += a;
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("gat gradients match finite differences") {
  ad::ParameterStore store;
  ad::Rng rng(8);
  GatLayer gat(store, "gat", {2, 3, 2, HeadAggregation::kConcat}, rng);
  RoadGraph g(4, {{0, 1}, {1, 2}, {2, 3}});
  std::mt19937_64 r(9);
  auto x = random_array({2, 4, 2}, r);
  std::vector<DiffArray> params{x};
  for (auto& p : store.entries()) params.push_back(p.value);
  const auto report = ad::grad_check(
      [&] {
        auto y = gat.forward(x, g);
        return ad::sum(ad::mul(y, y));
      },
      params);
  CHECK(report.max_relative_error < 1e-5);
}

TEST_CASE("window application equals per-slice calls") {
  ad::ParameterStore store;
  ad::Rng rng(10);
  GatLayer gat(store, "gat", {2, 2, 1}, rng);
  RoadGraph g(3, {{0, 1}, {1, 2}});
  std::mt19937_64 r(11);
  auto w = random_array({2, 4, 3, 2}, r, false);
  const auto y = gat.over_window(w, g);
  CHECK(y.shape() == ad::Shape{2, 4, 3, 2});
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t k = 0; k < 4; ++k) {
      const auto slice = ad::select(ad::select(w, 0, b), 0, k);
      const auto ref = gat.forward(slice, g);
      for (std::size_t i = 0; i < ref.size(); ++i)
        CHECK(y.values()[(b * 4 + k) * 6 + i] == doctest::Approx(ref.values()[i]).epsilon(1e-14));
    }
}

TEST_CASE("permutation equivariance") {
  ad::ParameterStore store;
  ad::Rng rng(12);
  GatLayer gat(store, "gat", {2, 2, 2}, rng);
  RoadGraph g(4, {{0, 1}, {1, 2}, {1, 3}});
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  std::mt19937_64 r(13);
  auto x = random_array({4, 2}, r, false);
  std::vector<double> px(8);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t d = 0; d < 2; ++d) px[perm[i] * 2 + d] = x.values()[i * 2 + d];
  const auto y = gat.forward(x, g);
  const auto py = gat.forward(DiffArray({4, 2}, px), g.permuted(perm));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t d = 0; d < 2; ++d)
      CHECK(py.values()[perm[i] * 2 + d] == doctest::Approx(y.values()[i * 2 + d]).epsilon(1e-12));
}

TEST_CASE("gat shape errors") {
  ad::ParameterStore store;
  ad::Rng rng(14);
  GatLayer gat(store, "gat", {2, 2, 1}, rng);
  RoadGraph g(3, {{0, 1}});
  CHECK_THROWS_AS(gat.forward(DiffArray::zeros({4, 2}), g), DimensionError);
  CHECK_THROWS_AS(gat.forward(DiffArray::zeros({3, 3}), g), DimensionError);
  CHECK_THROWS_AS(gat.attention(DiffArray::zeros({3, 2}), g, 1), IndexError);
}
