#include "radnet/temporal.hpp"

#include <cmath>

#include "radnet/error.hpp"

namespace radnet::temporal {

using ad::DiffArray;

DiffArray sinusoidal_table(std::size_t length, std::size_t width) {
  std::vector<double> table(length * width);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t c = 0; c < width; ++c) {
      const double pair = static_cast<double>(c - c % 2);
      const double angle =
          static_cast<double>(pos) / std::pow(10000.0, pair / static_cast<double>(width));
      table[pos * width + c] = c % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return DiffArray({length, width}, std::move(table));
}

DiffArray position_encode(const DiffArray& w, double dropout_rate, const ad::RunMode& mode) {
  if (w.rank() < 2 || w.dim(w.rank() - 2) == 0) {
    throw DimensionError("position_encode: expected [..., K, F] with K >= 1, got " +
                         ad::shape_to_string(w.shape()));
  }
  const auto table = sinusoidal_table(w.dim(w.rank() - 2), w.dim(w.rank() - 1));
  return ad::apply_dropout(add(w, table), dropout_rate, mode);
}

LayerNorm::LayerNorm(ad::ParameterStore& store, const std::string& name, std::size_t width,
                     ad::Rng& rng) {
  gain_ = store.add(name + ".gain", {width}, ad::Init::kOnes, rng);
  bias_ = store.add(name + ".bias", {width}, ad::Init::kZeros, rng);
}

DiffArray LayerNorm::operator()(const DiffArray& x) const {
  return add(mul(ad::layer_norm(x), gain_), bias_);
}

MultiHeadAttention::MultiHeadAttention(ad::ParameterStore& store, const std::string& name,
                                       std::size_t width, std::size_t heads, ad::Rng& rng)
    : width_(width), heads_(heads) {
  if (heads == 0 || width % heads != 0) {
    throw ArgumentError("MultiHeadAttention: width " + std::to_string(width) +
                        " is not divisible by " + std::to_string(heads) + " heads");
  }
  const std::size_t head_width = width / heads;
  for (std::size_t h = 0; h < heads; ++h) {
    const std::string prefix = name + ".head" + std::to_string(h);
    projections_.push_back(
        {store.add(prefix + ".query", {width, head_width}, ad::Init::kGlorotUniform, rng),
         store.add(prefix + ".key", {width, head_width}, ad::Init::kGlorotUniform, rng),
         store.add(prefix + ".value", {width, head_width}, ad::Init::kGlorotUniform, rng)});
  }
  output_ = store.add(name + ".output", {width, width}, ad::Init::kGlorotUniform, rng);
}

namespace {

void check_attention_inputs(const DiffArray& q, const DiffArray& k, std::size_t width,
                            const std::vector<unsigned char>* mask) {
  if (q.rank() != 3 || k.rank() != 3 || q.dim(2) != width || k.dim(2) != width ||
      q.dim(0) != k.dim(0)) {
    throw DimensionError("MultiHeadAttention: expected [B, L, " + std::to_string(width) +
                         "] inputs, got " + ad::shape_to_string(q.shape()) + " and " +
                         ad::shape_to_string(k.shape()));
  }
  if (mask != nullptr && mask->size() != q.dim(1) * k.dim(1)) {
    throw DimensionError("MultiHeadAttention: mask has " + std::to_string(mask->size()) +
                         " entries, expected " + std::to_string(q.dim(1)) + "x" +
                         std::to_string(k.dim(1)));
  }
}

}  // namespace

DiffArray MultiHeadAttention::attention_weights(const DiffArray& query, const DiffArray& key,
                                                std::size_t head,
                                                const std::vector<unsigned char>* mask) const {
  check_attention_inputs(query, key, width_, mask);
  const auto& p = projections_.at(head);
  auto scores = scale(matmul(matmul(query, p.query), transpose(matmul(key, p.key))),
                      1.0 / std::sqrt(static_cast<double>(width_)));
  if (mask != nullptr) return ad::masked_softmax(scores, *mask, {query.dim(1), key.dim(1)});
  return ad::softmax(scores, 2);
}

DiffArray MultiHeadAttention::operator()(const DiffArray& query, const DiffArray& key,
                                         const DiffArray& value,
                                         const std::vector<unsigned char>* mask) const {
  if (value.shape() != key.shape()) {
    throw DimensionError("MultiHeadAttention: key " + ad::shape_to_string(key.shape()) +
                         " and value " + ad::shape_to_string(value.shape()) + " differ");
  }
  std::vector<DiffArray> heads;
  heads.reserve(heads_);
  for (std::size_t h = 0; h < heads_; ++h) {
    auto weights = attention_weights(query, key, h, mask);
    heads.push_back(matmul(weights, matmul(value, projections_[h].value)));
  }
  auto joined = heads.size() == 1 ? heads.front() : concat(heads, 2);
  return matmul(joined, output_);
}

EncoderBlock::EncoderBlock(ad::ParameterStore& store, const std::string& name,
                           const TransformerConfig& config, ad::Rng& rng)
    : config_(config),
      attention_(store, name + ".attention", config.width, config.heads, rng),
      norm1_(store, name + ".norm1", config.width, rng),
      feed_forward_(store, name + ".feed_forward",
                    {{config.width, config.ff_hidden, config.width},
                     ad::Activation::kLeakyRelu,
                     ad::Activation::kIdentity,
                     config.leaky_slope},
                    rng),
      norm2_(store, name + ".norm2", config.width, rng) {}

DiffArray EncoderBlock::operator()(const DiffArray& wp, const ad::RunMode& mode) const {
  auto attended = ad::apply_dropout(attention_(wp, wp, wp), config_.dropout, mode);
  auto w11 = norm1_(add(wp, attended));
  auto fed = ad::apply_dropout(feed_forward_(wp), config_.dropout, mode);
  return norm2_(add(w11, fed));
}

DecoderBlock::DecoderBlock(ad::ParameterStore& store, const std::string& name,
                           const TransformerConfig& config, ad::Rng& rng)
    : config_(config),
      self_attention_(store, name + ".self_attention", config.width, config.heads, rng),
      norm1_(store, name + ".norm1", config.width, rng),
      cross_attention_(store, name + ".cross_attention", config.width, config.heads, rng),
      norm2_(store, name + ".norm2", config.width, rng) {}

DiffArray DecoderBlock::operator()(const DiffArray& dp, const DiffArray& encoded,
                                   const ad::RunMode& mode) const {
  const auto mask = ad::causal_mask(dp.dim(1));
  auto attended = ad::apply_dropout(self_attention_(dp, dp, dp, &mask), config_.dropout, mode);
  auto d12 = norm1_(add(dp, attended));
  auto crossed =
      ad::apply_dropout(cross_attention_(d12, encoded, encoded), config_.dropout, mode);
  return norm2_(add(encoded, crossed));
}

Transformer::Transformer(ad::ParameterStore& store, const std::string& name,
                         TransformerConfig config, ad::Rng& rng)
    : config_(config),
      encoder_(store, name + ".encoder", config, rng),
      decoder_(store, name + ".decoder", config, rng) {}

DiffArray Transformer::sequence(const DiffArray& encoder_input, const DiffArray& decoder_input,
                                const ad::RunMode& mode) const {
  if (encoder_input.rank() != 3 || encoder_input.shape() != decoder_input.shape() ||
      encoder_input.dim(2) != config_.width) {
    throw DimensionError("Transformer: expected matching [B, K, " +
                         std::to_string(config_.width) + "] inputs, got " +
                         ad::shape_to_string(encoder_input.shape()) + " and " +
                         ad::shape_to_string(decoder_input.shape()));
  }
  auto encoded = encoder_(position_encode(encoder_input, config_.dropout, mode), mode);
  return decoder_(position_encode(decoder_input, config_.dropout, mode), encoded, mode);
}

DiffArray Transformer::final_step(const DiffArray& encoder_input, const DiffArray& decoder_input,
                                  const ad::RunMode& mode) const {
  auto seq = sequence(encoder_input, decoder_input, mode);
  return select(seq, 1, seq.dim(1) - 1);
}

std::size_t temporal_width(TemporalLayout layout, std::size_t nodes, std::size_t features) {
  return layout == TemporalLayout::kPerNode ? features : nodes * features;
}

DiffArray transformer_forward(const Transformer& transformer, const DiffArray& window,
                              TemporalLayout layout, DecoderQuery query,
                              const ad::RunMode& mode) {
  if (window.rank() != 3 && window.rank() != 4) {
    throw DimensionError("transformer_forward: expected [K, N, D] or [B, K, N, D], got " +
                         ad::shape_to_string(window.shape()));
  }
  const bool batched = window.rank() == 4;
  auto w = batched ? window : reshape(window, {1, window.dim(0), window.dim(1), window.dim(2)});
  const std::size_t b = w.dim(0);
  const std::size_t k = w.dim(1);
  const std::size_t n = w.dim(2);
  const std::size_t d = w.dim(3);
  if (k == 0) throw DimensionError("transformer_forward: empty window");

  DiffArray rows;
  if (layout == TemporalLayout::kPerNode) {
    rows = reshape(permute(w, {0, 2, 1, 3}), {b * n, k, d});
  } else {
    rows = reshape(w, {b, k, n * d});
  }
  DiffArray decoder_rows = rows;
  if (query == DecoderQuery::kLastObservation) {
    auto last = slice(rows, 1, k - 1, 1);
    decoder_rows = concat(std::vector<DiffArray>(k, last), 1);
  }
  auto out = transformer.final_step(rows, decoder_rows, mode);
  return batched ? reshape(out, {b, n, d}) : reshape(out, {n, d});
}

}  // namespace radnet::temporal
