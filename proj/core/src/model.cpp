#include "radnet/model.hpp"

#include <algorithm>

#include "radnet/error.hpp"

namespace radnet::model {

using ad::DiffArray;

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kNoSkip: return "no_skip";
    case Variant::kNoSt: return "no_st";
    case Variant::kNoTs: return "no_ts";
  }
  return "full";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : {Variant::kFull, Variant::kNoSkip, Variant::kNoSt, Variant::kNoTs}) {
    if (to_string(v) == name) return v;
  }
  throw ArgumentError("unknown variant '" + std::string(name) +
                      "' (expected full, no_skip, no_st or no_ts)");
}

namespace {

std::string_view layout_name(LayoutChoice c) {
  switch (c) {
    case LayoutChoice::kAuto: return "auto";
    case LayoutChoice::kPerNode: return "per_node";
    case LayoutChoice::kFlattened: return "flattened";
  }
  return "auto";
}

LayoutChoice parse_layout(std::string_view name) {
  for (auto c : {LayoutChoice::kAuto, LayoutChoice::kPerNode, LayoutChoice::kFlattened}) {
    if (layout_name(c) == name) return c;
  }
  throw ArgumentError("unknown temporal layout '" + std::string(name) + "'");
}

std::string_view query_name(temporal::DecoderQuery q) {
  return q == temporal::DecoderQuery::kInputWindow ? "input_window" : "last_observation";
}

temporal::DecoderQuery parse_query(std::string_view name) {
  if (name == "input_window") return temporal::DecoderQuery::kInputWindow;
  if (name == "last_observation") return temporal::DecoderQuery::kLastObservation;
  throw ArgumentError("unknown decoder query '" + std::string(name) + "'");
}

}  // namespace

void RadNetConfig::validate() const {
  if (window < 1) throw ArgumentError("window K must be >= 1");
  if (horizon < 1) throw ArgumentError("horizon H must be >= 1");
  if (nodes < 1 || features < 1) throw ArgumentError("N and D must be >= 1");
  if (gat_heads < 1) throw ArgumentError("gat_heads must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ArgumentError("dropout must be in [0, 1)");
  const std::size_t width = temporal::temporal_width(resolved_layout(), nodes, features);
  if (width < 2) {
    throw ArgumentError("transformer width " + std::to_string(width) +
                        " is too small for layer normalization");
  }
  if (width % resolved_transformer_heads() != 0) {
    throw ArgumentError("transformer width " + std::to_string(width) +
                        " is not divisible by " + std::to_string(resolved_transformer_heads()) +
                        " heads");
  }
}

temporal::TemporalLayout RadNetConfig::resolved_layout() const {
  switch (layout) {
    case LayoutChoice::kPerNode: return temporal::TemporalLayout::kPerNode;
    case LayoutChoice::kFlattened: return temporal::TemporalLayout::kFlattened;
    case LayoutChoice::kAuto: break;
  }
  return features >= 2 ? temporal::TemporalLayout::kPerNode : temporal::TemporalLayout::kFlattened;
}

std::size_t RadNetConfig::resolved_transformer_heads() const {
  return transformer_heads == 0 ? features : transformer_heads;
}

nlohmann::json RadNetConfig::to_json() const {
  return {{"window", window},
          {"horizon", horizon},
          {"nodes", nodes},
          {"features", features},
          {"gat_heads", gat_heads},
          {"transformer_heads", transformer_heads},
          {"variant", to_string(variant)},
          {"decoder_hidden", decoder_hidden},
          {"transformer_ff_hidden", transformer_ff_hidden},
          {"dropout", dropout},
          {"leaky_slope", leaky_slope},
          {"layout", layout_name(layout)},
          {"decoder_query", query_name(decoder_query)},
          {"seed", seed}};
}

RadNetConfig RadNetConfig::from_json(const nlohmann::json& j) {
  RadNetConfig c;
  c.window = j.value("window", c.window);
  c.horizon = j.value("horizon", c.horizon);
  c.nodes = j.value("nodes", c.nodes);
  c.features = j.value("features", c.features);
  c.gat_heads = j.value("gat_heads", c.gat_heads);
  c.transformer_heads = j.value("transformer_heads", c.transformer_heads);
  c.variant = parse_variant(j.value("variant", std::string(to_string(c.variant))));
  c.decoder_hidden = j.value("decoder_hidden", c.decoder_hidden);
  c.transformer_ff_hidden = j.value("transformer_ff_hidden", c.transformer_ff_hidden);
  c.dropout = j.value("dropout", c.dropout);
  c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
  c.layout = parse_layout(j.value("layout", std::string(layout_name(c.layout))));
  c.decoder_query =
      parse_query(j.value("decoder_query", std::string(query_name(c.decoder_query))));
  c.seed = j.value("seed", c.seed);
  return c;
}

namespace {

graph::GatConfig gat_config(const RadNetConfig& c) {
  return {c.features, c.features, c.gat_heads, graph::HeadAggregation::kMean, c.leaky_slope};
}

temporal::TransformerConfig transformer_config(const RadNetConfig& c) {
  return {temporal::temporal_width(c.resolved_layout(), c.nodes, c.features),
          c.resolved_transformer_heads(), c.transformer_ff_hidden, c.dropout, c.leaky_slope};
}

}  // namespace

RadNet::RadNet(RadNetConfig config, graph::RoadGraph graph)
    : config_(std::move(config)), graph_(std::move(graph)) {
  config_.validate();
  if (graph_.n_nodes() != config_.nodes) {
    throw DimensionError("RadNet: config has N=" + std::to_string(config_.nodes) +
                         " but the graph has " + std::to_string(graph_.n_nodes()) + " nodes");
  }
  ad::Rng rng(config_.seed);
  if (has_spatio_temporal()) {
    gat_st_ = graph::GatLayer(store_, "st.gat", gat_config(config_), rng);
    transformer_st_ = temporal::Transformer(store_, "st.transformer", transformer_config(config_), rng);
  }
  if (has_temporo_spatial()) {
    transformer_ts_ = temporal::Transformer(store_, "ts.transformer", transformer_config(config_), rng);
    gat_ts_ = graph::GatLayer(store_, "ts.gat", gat_config(config_), rng);
  }
  const std::size_t flat = config_.nodes * config_.features;
  if (config_.variant != Variant::kNoSkip) {
    fusion_ = ad::FeedForward(store_, "fusion", {{flat, fusion_width()}}, rng);
  }
  std::vector<std::size_t> widths{flat};
  widths.insert(widths.end(), config_.decoder_hidden.begin(), config_.decoder_hidden.end());
  widths.push_back(flat);
  decoder_ = ad::FeedForward(
      store_, "decoder",
      {widths, ad::Activation::kLeakyRelu, ad::Activation::kIdentity, config_.leaky_slope}, rng);
}

bool RadNet::has_spatio_temporal() const { return config_.variant != Variant::kNoSt; }
bool RadNet::has_temporo_spatial() const { return config_.variant != Variant::kNoTs; }

std::size_t RadNet::fusion_width() const {
  if (config_.variant == Variant::kNoSkip) return 0;
  return (has_spatio_temporal() ? 1 : 0) + (has_temporo_spatial() ? 1 : 0) + 1;
}

DiffArray RadNet::as_batch(const DiffArray& window) const {
  const bool ok_rank = window.rank() == 3 || window.rank() == 4;
  const auto& s = window.shape();
  const std::size_t off = window.rank() == 4 ? 1 : 0;
  if (!ok_rank || s[off] != config_.window || s[off + 1] != config_.nodes ||
      s[off + 2] != config_.features) {
    throw DimensionError("RadNet: expected window [" + std::to_string(config_.window) + ", " +
                         std::to_string(config_.nodes) + ", " +
                         std::to_string(config_.features) + "] (optionally batched), got " +
                         ad::shape_to_string(s));
  }
  return off == 1 ? window : reshape(window, {1, s[0], s[1], s[2]});
}

DiffArray RadNet::spatio_temporal(const DiffArray& window, const ad::RunMode& mode) const {
  auto w = as_batch(window);
  auto spatial = gat_st_.over_window(w, graph_);
  return temporal::transformer_forward(transformer_st_, spatial, config_.resolved_layout(),
                                       config_.decoder_query, mode);
}

DiffArray RadNet::temporo_spatial(const DiffArray& window, const ad::RunMode& mode) const {
  auto w = as_batch(window);
  auto temporal_out = temporal::transformer_forward(transformer_ts_, w, config_.resolved_layout(),
                                                    config_.decoder_query, mode);
  return gat_ts_.forward(temporal_out, graph_);
}

Forecast RadNet::forward(const DiffArray& window, const ad::RunMode& mode) const {
  const bool batched = window.rank() == 4;
  auto w = as_batch(window);
  const std::size_t b = w.dim(0);
  const std::size_t n = config_.nodes;
  const std::size_t d = config_.features;
  auto last = select(w, 1, config_.window - 1);  // X^(t): [B, N, D]

  std::vector<DiffArray> paths;
  if (has_spatio_temporal()) paths.push_back(spatio_temporal(w, mode));
  if (has_temporo_spatial()) paths.push_back(temporo_spatial(w, mode));
  paths.push_back(last);

  Forecast out;
  DiffArray fused;
  if (config_.variant == Variant::kNoSkip) {
    fused = paths[0];
    for (std::size_t i = 1; i < paths.size(); ++i) fused = add(fused, paths[i]);
  } else {
    auto weights = ad::softmax(fusion_(reshape(last, {b, n * d})), 1);  // [B, P]
    for (std::size_t i = 0; i < paths.size(); ++i) {
      auto wi = reshape(select(weights, 1, i), {b, 1, 1});
      auto term = mul(wi, paths[i]);
      fused = i == 0 ? term : add(fused, term);
    }
    out.path_weights = batched ? weights : reshape(weights, {paths.size()});
  }
  auto decoded = reshape(decoder_(reshape(fused, {b, n * d})), {b, n, d});
  out.prediction = batched ? decoded : reshape(decoded, {n, d});
  return out;
}

DiffArray build_window(const FeatureSeries& series, std::size_t t, std::size_t window) {
  if (t >= series.timesteps()) {
    throw IndexError("build_window: t=" + std::to_string(t) + " outside [0, " +
                     std::to_string(series.timesteps()) + ")");
  }
  if (window < 1) throw ArgumentError("build_window: K must be >= 1");
  const std::size_t frame = series.frame_size();
  std::vector<double> values(window * frame);
  for (std::size_t k = 0; k < window; ++k) {
    const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) -
                               static_cast<std::ptrdiff_t>(window - 1) +
                               static_cast<std::ptrdiff_t>(k);
    const auto x = series.frame(static_cast<std::size_t>(std::max<std::ptrdiff_t>(src, 0)));
    std::copy(x.begin(), x.end(), values.begin() + static_cast<std::ptrdiff_t>(k * frame));
  }
  return DiffArray({window, series.nodes(), series.features()}, std::move(values));
}

DiffArray build_window_batch(const FeatureSeries& series, std::span<const std::size_t> ends,
                             std::size_t window) {
  const std::size_t frame = series.frame_size();
  std::vector<double> values;
  values.reserve(ends.size() * window * frame);
  for (std::size_t t : ends) {
    auto w = build_window(series, t, window);
    values.insert(values.end(), w.values().begin(), w.values().end());
  }
  return DiffArray({ends.size(), window, series.nodes(), series.features()}, std::move(values));
}

DiffArray build_target_batch(const FeatureSeries& series, std::span<const std::size_t> ends,
                             std::size_t horizon) {
  std::vector<double> values;
  values.reserve(ends.size() * series.frame_size());
  for (std::size_t t : ends) {
    const auto x = series.frame(t + horizon);
    values.insert(values.end(), x.begin(), x.end());
  }
  return DiffArray({ends.size(), series.nodes(), series.features()}, std::move(values));
}

DiffArray loss(const DiffArray& prediction, const DiffArray& truth) {
  if (prediction.shape() != truth.shape()) {
    throw DimensionError("loss: prediction " + ad::shape_to_string(prediction.shape()) +
                         " vs truth " + ad::shape_to_string(truth.shape()));
  }
  return ad::norm(sub(truth, prediction));
}

DiffArray batch_loss(const DiffArray& prediction, const DiffArray& truth) {
  if (prediction.shape() != truth.shape() || prediction.rank() < 2) {
    throw DimensionError("batch_loss: prediction " + ad::shape_to_string(prediction.shape()) +
                         " vs truth " + ad::shape_to_string(truth.shape()));
  }
  const std::size_t b = prediction.dim(0);
  auto diff = reshape(sub(truth, prediction), {b, prediction.size() / b});
  return ad::mean(ad::norm_last(diff));
}

DiffArray rollout_autoregressive(const RadNet& one_step, const DiffArray& window,
                                 std::size_t horizon, const ad::RunMode& mode) {
  if (horizon < 1) throw ArgumentError("rollout_autoregressive: horizon must be >= 1");
  if (one_step.config().horizon != 1) {
    throw ArgumentError("rollout_autoregressive: model must be a one-step (H=1) forecaster");
  }
  const bool batched = window.rank() == 4;
  const std::size_t time_axis = batched ? 1 : 0;
  const std::size_t k = one_step.config().window;
  DiffArray w = window;
  DiffArray prediction;
  for (std::size_t step = 0; step < horizon; ++step) {
    prediction = one_step.forward(w, mode).prediction;
    if (step + 1 == horizon) break;
    ad::Shape lifted = prediction.shape();
    lifted.insert(lifted.begin() + static_cast<std::ptrdiff_t>(time_axis), 1);
    auto newest = reshape(prediction, std::move(lifted));
    w = k == 1 ? newest : ad::concat({slice(w, time_axis, 1, k - 1), newest}, time_axis);
  }
  return prediction;
}

std::size_t count_parameters(const RadNet& model) { return model.parameters().scalar_count(); }

std::vector<LedgerEntry> parameter_ledger(const RadNet& model) {
  std::vector<LedgerEntry> ledger;
  for (const auto& p : model.parameters().entries()) {
    ledger.push_back({p.name, p.value.shape(), p.value.size()});
  }
  return ledger;
}

TeacherForcing::TeacherForcing(double probability, std::uint64_t seed)
    : probability_(probability), rng_(seed) {
  if (probability < 0.0 || probability > 1.0) {
    throw ArgumentError("teacher-forcing probability must be in [0, 1]");
  }
}

bool TeacherForcing::draw() {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  return uniform(rng_) < probability_;
}

}  // namespace radnet::model
