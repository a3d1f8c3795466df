#include <doctest.h>

#include <cmath>
#include <fstream>

#include "radnet/data_io.hpp"
#include "radnet/error.hpp"
#include "radnet/training.hpp"
#include "test_support.hpp"

using namespace radnet;
using namespace radnet::training;

namespace {

model::RadNetConfig tiny_model(const FeatureSeries& s) {
  model::RadNetConfig c;
  c.window = 3;
  c.nodes = s.nodes();
  c.features = s.features();
  c.decoder_hidden = {8};
  c.seed = 3;
  return c;
}

TrainConfig tiny_train(std::size_t epochs) {
  TrainConfig t;
  t.max_epochs = epochs;
  t.lr = 1e-3;
  t.seed = 5;
  return t;
}

io::SynthResult small_synth() {
  io::SynthConfig c;
  c.nodes = 3;
  c.days = 2;
  c.delta_seconds = 1200;
  c.seed = 9;
  return io::synth_traffic(c);
}

}  // namespace

TEST_CASE("contiguous folds") {
  const auto splits = split_folds(100, 5, 5, 1);
  REQUIRE(splits.size() == 5);
  for (std::size_t f = 0; f < 5; ++f) {
    CHECK(splits[f].validation == IndexRange{f * 20, f * 20 + 20});
    std::vector<int> covered(100, 0);
    for (std::size_t t = splits[f].validation.begin; t < splits[f].validation.end; ++t) ++covered[t];
    for (const auto& r : splits[f].train)
      for (std::size_t t = r.begin; t < r.end; ++t) ++covered[t];
    for (int c : covered) CHECK(c == 1);
  }
  CHECK(splits[0].train.size() == 1);
  CHECK(splits[2].train.size() == 2);
  CHECK(splits[4].train == std::vector<IndexRange>{{0, 80}});

  const auto uneven = split_folds(103, 5, 2, 1);
  CHECK(uneven[0].validation.size() == 20);
  CHECK(uneven[4].validation.end == 103);

  CHECK_THROWS_AS(split_folds(20, 5, 3, 2), ArgumentError);
  CHECK_THROWS_AS(split_folds(100, 1, 3, 2), ArgumentError);
}

TEST_CASE("window ends stay inside their block") {
  const IndexRange ranges[] = {{0, 10}, {20, 30}};
  const auto ends = sample_ends(ranges, 3, 2);
  // first_input >= begin and t + H < end in each block
  const std::vector<std::size_t> expected{0, 1, 2, 3, 4, 5, 6, 7, 22, 23, 24, 25, 26, 27};
  CHECK(ends == expected);

  const auto splits = split_folds(100, 5, 4, 3);
  for (const auto& split : splits) {
    for (std::size_t t : sample_ends(split.train, 4, 3)) {
      CHECK_FALSE(split.validation.contains(t));
      CHECK_FALSE(split.validation.contains(t + 3));
      if (t >= 3) CHECK_FALSE(split.validation.contains(t - 3));
    }
  }
}

TEST_CASE("early stopping") {
  EarlyStopper s(2);
  const double losses[] = {5.0, 4.0, 3.0, 3.5, 3.6, 3.7};
  std::size_t stopped_at = 0;
  for (std::size_t i = 0; i < 6; ++i) {
    if (s.update(losses[i])) {
      stopped_at = i + 1;
      break;
    }
  }
  CHECK(stopped_at == 5);
  CHECK(s.best_epoch() == 3);
  CHECK(s.best_loss() == 3.0);

  EarlyStopper ties(1);
  CHECK_FALSE(ties.update(1.0));
  CHECK(ties.update(1.0));
  CHECK(ties.best_epoch() == 1);
}

TEST_CASE("normalizer uses training blocks only") {
  std::vector<double> v;
  for (int t = 0; t < 10; ++t) v.insert(v.end(), {t < 5 ? 1.0 : 100.0, t < 5 ? 3.0 : -7.0, 2.0, 4.0});
  FeatureSeries s(10, 2, 2, v, 0, 300);
  const IndexRange train[] = {{0, 5}};
  const auto n = Normalizer::fit(s, train);
  CHECK(n.mean[0] == doctest::Approx(1.5));
  CHECK(n.mean[1] == doctest::Approx(3.5));
  CHECK(n.stddev[0] == doctest::Approx(0.5));
  const auto z = n.apply(s);
  CHECK(z.at(0, 0, 0) == doctest::Approx(-1.0));
  std::vector<double> frame(z.frame(7).begin(), z.frame(7).end());
  n.invert(frame);
  CHECK(frame[0] == doctest::Approx(100.0));

  FeatureSeries flat(4, 1, 1, {2, 2, 2, 2}, 0, 300);
  const IndexRange all[] = {{0, 4}};
  const auto c = Normalizer::fit(flat, all);
  CHECK(c.stddev[0] == 1.0);
  const auto back = Normalizer::from_json(n.to_json());
  CHECK(back.mean == n.mean);
  CHECK(back.stddev == n.stddev);
}

TEST_CASE("training is deterministic under a fixed seed") {
  const auto data = small_synth();
  const auto split = split_folds(data.series.timesteps(), 5, 3, 1)[4];
  model::RadNet a(tiny_model(data.series), data.graph);
  model::RadNet b(tiny_model(data.series), data.graph);
  const auto ra = train(a, data.series, split, tiny_train(3));
  const auto rb = train(b, data.series, split, tiny_train(3));
  REQUIRE(ra.curve.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(ra.curve[i].train_loss == rb.curve[i].train_loss);
    CHECK(ra.curve[i].validation_loss == rb.curve[i].validation_loss);
  }
  double best = ra.curve[0].validation_loss;
  for (const auto& e : ra.curve) best = std::min(best, e.validation_loss);
  CHECK(ra.best_validation_loss == best);
}

TEST_CASE("restored parameters reproduce the best validation loss") {
  const auto data = small_synth();
  const auto split = split_folds(data.series.timesteps(), 5, 3, 1)[4];
  model::RadNet m(tiny_model(data.series), data.graph);
  const auto r = train(m, data.series, split, tiny_train(6));
  const IndexRange val[] = {split.validation};
  const auto ends = sample_ends(val, 3, 1);
  const auto eval = evaluate_loss(m, r.normalizer.apply(data.series), ends);
  CHECK(eval.loss == doctest::Approx(r.best_validation_loss).epsilon(1e-12));
  CHECK(eval.mse == doctest::Approx(r.best_validation_mse).epsilon(1e-12));
}

TEST_CASE("constant series is learned quickly") {
  FeatureSeries s(150, 3, 1, std::vector<double>(450, 7.0), 0, 300);
  graph::RoadGraph g(3, {{0, 1}, {1, 2}});
  const auto split = split_folds(150, 5, 3, 1)[4];
  model::RadNet m(tiny_model(s), g);
  auto cfg = tiny_train(40);
  cfg.lr = 5e-3;
  const auto r = train(m, s, split, cfg);
  CHECK(r.best_validation_loss < 0.05);
  CHECK(r.best_validation_loss < r.curve.front().validation_loss);
  const IndexRange val[] = {split.validation};
  const auto ends = sample_ends(val, 3, 1);
  auto pred = predict(m, r.normalizer.apply(s), ends);
  r.normalizer.invert(pred);
  for (double v : pred) CHECK(v == doctest::Approx(7.0).epsilon(0.01));
}

TEST_CASE("non-finite loss raises a diagnostic") {
  auto data = small_synth();
  auto values = std::vector<double>(data.series.data().begin(), data.series.data().end());
  values[10 * 3 + 1] = std::nan("");
  const auto broken = data.series.with_data(values);
  const auto split = split_folds(broken.timesteps(), 5, 3, 1)[4];
  model::RadNet m(tiny_model(broken), data.graph);
  try {
    train(m, broken, split, tiny_train(2));
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("lr=") != std::string::npos);
    CHECK(msg.find("step 1") != std::string::npos);
    const auto at = msg.find("window index ");
    REQUIRE(at != std::string::npos);
    // windows ending at 9..12 read timestep 10 as input or target
    const auto index = std::stoul(msg.substr(at + 13));
    CHECK(index >= 9);
    CHECK(index <= 12);
  }
}

TEST_CASE("autoregressive training runs the rollout") {
  const auto data = small_synth();
  const auto split = split_folds(data.series.timesteps(), 5, 3, 3)[4];
  model::RadNet m(tiny_model(data.series), data.graph);
  auto cfg = tiny_train(2);
  cfg.autoregressive_steps = 3;
  const auto r = train(m, data.series, split, cfg);
  CHECK(r.curve.size() == 2);
  for (const auto& e : r.curve) CHECK(std::isfinite(e.validation_loss));
}

TEST_CASE("config validation and loss curve file") {
  TrainConfig c;
  c.lr = -1.0;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = TrainConfig{};
  c.teacher_forcing = 2.0;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = TrainConfig{};
  c.patience = 4;
  CHECK(TrainConfig::from_json(c.to_json()).to_json() == c.to_json());

  const auto dir = radnet::testing::scratch_dir("training");
  const EpochRecord curve[] = {{1, 2.0, 3.0, 0.5}, {2, 1.5, 2.5, 0.4}};
  write_loss_curve(dir / "loss.csv", curve);
  std::ifstream in(dir / "loss.csv");
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  CHECK(header == "epoch,train_loss,val_loss");
  CHECK(first.rfind("1,", 0) == 0);
}
