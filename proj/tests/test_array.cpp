#include <doctest.h>

#include <cmath>
#include <fstream>

#include "radnet/binary_io.hpp"
#include "radnet/checkpoint.hpp"
#include "radnet/error.hpp"
#include "radnet/grad_check.hpp"
#include "radnet/optim.hpp"
#include "radnet/parameters.hpp"
#include "test_support.hpp"

using namespace radnet;
using namespace radnet::ad;
using radnet::testing::random_array;

TEST_CASE("elementwise closed forms") {
  CHECK(leaky_relu(DiffArray::scalar(-1.0)).item() == doctest::Approx(-0.01));
  CHECK(leaky_relu(DiffArray::scalar(2.0)).item() == 2.0);
  CHECK(sigmoid(DiffArray::scalar(0.0)).item() == 0.5);
  CHECK(norm(DiffArray::zeros({3, 2})).item() == 0.0);
  CHECK(norm(DiffArray::matrix({{3.0, 4.0}})).item() == doctest::Approx(5.0));
}

TEST_CASE("broadcasting add matches manual expansion") {
  auto a = DiffArray::matrix({{1, 2, 3}, {4, 5, 6}});
  auto b = DiffArray::vector({10, 20, 30});
  auto c = add(a, b);
  CHECK(c.shape() == Shape{2, 3});
  CHECK(c.at({1, 2}) == 36.0);
  CHECK_THROWS_AS(add(a, DiffArray::vector({1, 2})), DimensionError);
}

TEST_CASE("matmul shared and batched") {
  auto a = DiffArray::matrix({{1, 2}, {3, 4}});
  auto b = DiffArray::matrix({{5, 6}, {7, 8}});
  auto c = matmul(a, b);
  CHECK(c.at({0, 0}) == 19.0);
  CHECK(c.at({1, 1}) == 50.0);
  CHECK_THROWS_AS(matmul(a, DiffArray::zeros({3, 2})), DimensionError);
}

TEST_CASE("softmax slices are convex") {
  std::mt19937_64 rng(1);
  auto x = random_array({4, 5, 6}, rng, false, -20.0, 20.0);
  auto s = softmax(x, 2);
  for (std::size_t i = 0; i < 20; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < 6; ++j) {
      CHECK(s.values()[i * 6 + j] >= 0.0);
      total += s.values()[i * 6 + j];
    }
    CHECK(std::abs(total - 1.0) < 1e-9);
  }
}

TEST_CASE("softmax rejects NaN") {
  auto x = DiffArray::vector({0.0, std::nan("")});
  CHECK_THROWS_AS(softmax(x, 0), NumericError);
}

TEST_CASE("masked softmax zeroes disallowed entries") {
  std::mt19937_64 rng(2);
  auto x = random_array({2, 3, 3}, rng);
  const auto mask = causal_mask(3);
  auto s = masked_softmax(x, mask, {3, 3});
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = i + 1; j < 3; ++j) CHECK(s.at({b, i, j}) == 0.0);
  CHECK(s.at({0, 0, 0}) == 1.0);
  std::vector<unsigned char> none(9, 0);
  CHECK_THROWS_AS(masked_softmax(x, none, {3, 3}), StructuralError);
}

TEST_CASE("layer norm contract") {
  auto y = layer_norm(DiffArray::vector({1, 2, 3}));
  double mean = 0.0, var = 0.0;
  for (double v : y.values()) mean += v / 3.0;
  for (double v : y.values()) var += (v - mean) * (v - mean) / 3.0;
  CHECK(std::abs(mean) < 1e-12);
  CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
  auto c = layer_norm(DiffArray::vector({5, 5, 5}));
  for (double v : c.values()) CHECK(v == 0.0);
  CHECK_THROWS_AS(layer_norm(DiffArray::vector({1})), DimensionError);
}

TEST_CASE("reverse-mode gradients match finite differences") {
  std::mt19937_64 rng(3);
  auto a = random_array({2, 3}, rng);
  auto b = random_array({3, 4}, rng);
  auto v = random_array({3}, rng);

  struct Case {
    const char* name;
    std::function<DiffArray()> f;
    std::vector<DiffArray> params;
  };
  std::vector<Case> cases = {
      {"add-broadcast", [&] { return sum(mul(add(a, v), a)); }, {a, v}},
      {"sub/scale", [&] { return sum(scale(sub(a, v), 1.7)); }, {a, v}},
      {"matmul", [&] { return sum(mul(matmul(a, b), matmul(a, b))); }, {a, b}},
      {"leaky", [&] { return sum(leaky_relu(a)); }, {a}},
      {"sigmoid", [&] { return sum(sigmoid(matmul(a, b))); }, {a, b}},
      {"softmax", [&] { return sum(mul(softmax(matmul(a, b), 1), matmul(a, b))); }, {a, b}},
      {"masked", [&] {
         auto sq = matmul(transpose(a), a);
         return sum(mul(masked_softmax(sq, causal_mask(3), {3, 3}), sq));
       }, {a}},
      {"layer_norm", [&] { return sum(mul(layer_norm(matmul(a, b)), matmul(a, b))); }, {a, b}},
      {"norm", [&] { return norm(matmul(a, b)); }, {a, b}},
      {"norm_last", [&] { return sum(norm_last(matmul(a, b))); }, {a, b}},
      {"mean/sum_axis", [&] { return mean(mul(sum_axis(matmul(a, b), 0), sum_axis(matmul(a, b), 0))); }, {a, b}},
      {"permute/reshape", [&] {
         auto p = permute(reshape(matmul(a, b), {2, 2, 2}), {2, 0, 1});
         return sum(mul(p, p));
       }, {a, b}},
      {"concat/slice/select/stack", [&] {
         auto c = concat({a, a}, 0);
         auto s = stack({slice(c, 0, 1, 2), select(reshape(c, {2, 2, 3}), 0, 1)});
         return sum(mul(s, s));
       }, {a}},
  };
  for (auto& c : cases) {
    CAPTURE(c.name);
    const auto report = grad_check(c.f, c.params);
    CHECK(report.max_relative_error < 1e-5);
  }
}

TEST_CASE("grad_check reference cases") {
  std::mt19937_64 rng(4);
  auto p = random_array({5}, rng);
  auto r = grad_check([&] { return sum(p); }, {p});
  CHECK(r.max_relative_error < 1e-9);

  auto w = random_array({3, 2}, rng);
  auto x = random_array({2, 1}, rng, false);
  auto f = [&] {
    auto y = matmul(w, x);
    return sum(mul(y, y));
  };
  auto loss = f();
  loss.backward();
  // d/dW ‖Wx‖² = 2 (Wx) xᵀ
  const auto g = w.grad();
  for (std::size_t i = 0; i < 3; ++i) {
    double wx = 0.0;
    for (std::size_t k = 0; k < 2; ++k) wx += w.at({i, k}) * x.at({k, 0});
    for (std::size_t j = 0; j < 2; ++j) CHECK(g[i * 2 + j] == doctest::Approx(2.0 * wx * x.at({j, 0})));
  }
  w.zero_grad();
  CHECK(grad_check(f, {w}).max_relative_error < 1e-6);
}

TEST_CASE("backward releases the tape") {
  auto a = DiffArray::vector({1.0, 2.0}, true);
  auto y = sum(mul(a, a));
  y.backward();
  CHECK(y.node()->parents.empty());
  CHECK(a.grad()[1] == 4.0);
}

TEST_CASE("dropout") {
  Rng r1(9), r2(9);
  auto x = DiffArray::full({1000}, 1.0);
  auto d1 = dropout(x, 0.1, true, r1);
  auto d2 = dropout(x, 0.1, true, r2);
  CHECK(std::equal(d1.values().begin(), d1.values().end(), d2.values().begin()));
  std::size_t kept = 0;
  for (double v : d1.values()) {
    CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.9)));
    kept += v != 0.0;
  }
  CHECK(kept > 850);
  CHECK(kept < 950);
  auto e = dropout(x, 0.1, false, r1);
  CHECK(std::equal(e.values().begin(), e.values().end(), x.values().begin()));
}

TEST_CASE("feed forward") {
  ParameterStore store;
  Rng rng(5);
  Linear lin(store, "lin", 3, 3, rng);
  for (auto& v : store.entries()[0].value.mutable_values()) v = 0.0;
  auto x = DiffArray::matrix({{1, -2, 3}});
  const auto zero_out = lin(x);
  for (double v : zero_out.values()) CHECK(v == 0.0);
  auto wv = store.entries()[0].value.mutable_values();
  for (std::size_t i = 0; i < 3; ++i) wv[i * 3 + i] = 1.0;
  auto y = lin(x);
  CHECK(std::equal(y.values().begin(), y.values().end(), x.values().begin()));
  CHECK_THROWS_AS(lin(DiffArray::matrix({{1, 2}})), DimensionError);

  ParameterStore s2;
  FeedForward ff(s2, "ff", {{4, 6, 2}}, rng);
  CHECK(s2.scalar_count() == 4 * 6 + 6 + 6 * 2 + 2);
  auto in = random_array({3, 4}, rng, false);
  std::vector<DiffArray> params;
  for (auto& p : s2.entries()) params.push_back(p.value);
  auto report = grad_check([&] {
    auto o = ff(in);
    return sum(mul(o, o));
  }, params);
  CHECK(report.max_relative_error < 1e-5);
}

TEST_CASE("adamw step matches the reference recurrence") {
  std::vector<double> p{1.0};
  std::vector<double> g{1.0};
  std::vector<std::span<double>> ps{p};
  std::vector<std::span<const double>> gs{g};
  AdamWState state;
  AdamWConfig cfg{0.1, 0.9, 0.999, 1e-8, 0.0};
  adamw_step(ps, gs, state, cfg);
  const double m = 0.1 * 1.0;
  const double v = 0.001 * 1.0;
  const double mhat = m / (1.0 - 0.9);
  const double vhat = v / (1.0 - 0.999);
  CHECK(p[0] == doctest::Approx(1.0 - 0.1 * mhat / (std::sqrt(vhat) + 1e-8)).epsilon(1e-15));
  CHECK(state.step_count == 1);
}

TEST_CASE("adamw zero gradient and decay") {
  std::vector<double> p{0.7, -1.3};
  std::vector<double> zero{0.0, 0.0};
  std::vector<std::span<double>> ps{p};
  std::vector<std::span<const double>> gs{zero};
  AdamWState state;
  adamw_step(ps, gs, state, {0.1, 0.9, 0.999, 1e-8, 0.0});
  CHECK(p[0] == 0.7);
  CHECK(p[1] == -1.3);

  auto run = [](double wd) {
    std::vector<double> q{2.0};
    std::vector<double> gq{0.5};
    std::vector<std::span<double>> qs{q};
    std::vector<std::span<const double>> gqs{gq};
    AdamWState st;
    for (int i = 0; i < 10; ++i) adamw_step(qs, gqs, st, {0.01, 0.9, 0.999, 1e-8, wd});
    return q[0];
  };
  CHECK(std::abs(run(1e-5)) < std::abs(run(0.0)));

  std::vector<double> bad{std::nan("")};
  std::vector<double> q{1.0};
  std::vector<std::span<double>> qs{q};
  std::vector<std::span<const double>> bs{bad};
  AdamWState st;
  CHECK_THROWS_AS(adamw_step(qs, bs, st, {}), NumericError);
  CHECK(q[0] == 1.0);
  CHECK(st.step_count == 0);
}

TEST_CASE("binary blob round trip and truncation") {
  const auto dir = radnet::testing::scratch_dir("blob");
  std::vector<double> v{1.5, -0.0, 1e300, 3.25};
  io::write_f64_le(dir / "x.bin", v);
  CHECK(io::read_f64_le(dir / "x.bin", 4) == v);
  try {
    io::read_f64_le(dir / "x.bin", 5);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("40") != std::string::npos);
    CHECK(msg.find("32") != std::string::npos);
  }
}

TEST_CASE("checkpoint round trip") {
  const auto dir = radnet::testing::scratch_dir("ckpt");
  ParameterStore a;
  Rng rng(6);
  a.add("w", {2, 3}, Init::kGlorotUniform, rng);
  a.add("b", {3}, Init::kGlorotUniform, rng);
  save_checkpoint(dir / "m", a, 42, {{"k", 5}});

  ParameterStore b;
  Rng other(7);
  b.add("w", {2, 3}, Init::kGlorotUniform, other);
  b.add("b", {3}, Init::kZeros, other);
  const auto manifest = load_checkpoint(dir / "m", b);
  CHECK(manifest.seed == 42);
  CHECK(manifest.hyperparameters.at("k") == 5);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto x = a.entries()[i].value.values();
    const auto y = b.entries()[i].value.values();
    CHECK(std::equal(x.begin(), x.end(), y.begin()));
  }

  ParameterStore c;
  c.add("w", {3, 2}, Init::kZeros, other);
  c.add("b", {3}, Init::kZeros, other);
  CHECK_THROWS_AS(load_checkpoint(dir / "m", c), FormatError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing", b), FormatError);
}

TEST_CASE("duplicate parameter names are rejected") {
  ParameterStore s;
  Rng rng(1);
  s.add("x", {1}, Init::kZeros, rng);
  CHECK_THROWS(s.add("x", {1}, Init::kZeros, rng));
}
