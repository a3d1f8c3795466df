#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "radnet/array.hpp"
#include "radnet/parameters.hpp"

namespace radnet::temporal {

/// Fixed sinusoidal table [length, width]:
///   pe[pos, 2i]   = sin(pos / 10000^(2i/width))
///   pe[pos, 2i+1] = cos(pos / 10000^(2i/width))
ad::DiffArray sinusoidal_table(std::size_t length, std::size_t width);

/// Adds the sinusoidal table along the time axis of [..., K, F], then dropout
/// (training only).
ad::DiffArray position_encode(const ad::DiffArray& w, double dropout_rate,
                              const ad::RunMode& mode);

/// Learned gain/bias on top of ad::layer_norm.
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ad::ParameterStore& store, const std::string& name, std::size_t width, ad::Rng& rng);
  ad::DiffArray operator()(const ad::DiffArray& x) const;

 private:
  ad::DiffArray gain_;
  ad::DiffArray bias_;
};

/// Scaled dot-product attention with per-head Q/K/V projections and an
/// output projection over the concatenated heads. Scores are divided by
/// sqrt(model width).
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ad::ParameterStore& store, const std::string& name, std::size_t width,
                     std::size_t heads, ad::Rng& rng);

  /// query: [B, Lq, d]; key/value: [B, Lk, d]. `mask`, when given, is an
  /// [Lq, Lk] allowed-mask (e.g. ad::causal_mask).
  ad::DiffArray operator()(const ad::DiffArray& query, const ad::DiffArray& key,
                           const ad::DiffArray& value,
                           const std::vector<unsigned char>* mask = nullptr) const;

  /// Softmaxed weights [B, Lq, Lk] for one head.
  ad::DiffArray attention_weights(const ad::DiffArray& query, const ad::DiffArray& key,
                                  std::size_t head,
                                  const std::vector<unsigned char>* mask = nullptr) const;

  std::size_t width() const { return width_; }
  std::size_t heads() const { return heads_; }

 private:
  struct HeadProjection {
    ad::DiffArray query;
    ad::DiffArray key;
    ad::DiffArray value;
  };

  std::size_t width_ = 0;
  std::size_t heads_ = 0;
  std::vector<HeadProjection> projections_;
  ad::DiffArray output_;
};

struct TransformerConfig {
  std::size_t width = 1;
  std::size_t heads = 1;
  std::size_t ff_hidden = 16;
  double dropout = 0.1;
  double leaky_slope = ad::kDefaultLeakySlope;
};

/// W11 = LN(Wp + MHA(Wp, Wp, Wp));  W12 = LN(W11 + FF(Wp)).
class EncoderBlock {
 public:
  EncoderBlock() = default;
  EncoderBlock(ad::ParameterStore& store, const std::string& name, const TransformerConfig& config,
               ad::Rng& rng);
  ad::DiffArray operator()(const ad::DiffArray& wp, const ad::RunMode& mode) const;

  const MultiHeadAttention& attention() const { return attention_; }

 private:
  TransformerConfig config_;
  MultiHeadAttention attention_;
  LayerNorm norm1_;
  ad::FeedForward feed_forward_;
  LayerNorm norm2_;
};

/// D12 = LN(Dp + Mask(MHA(Dp, Dp, Dp)));  out = LN(E + MHA(D12, E, E))
/// where E is the encoder output.
class DecoderBlock {
 public:
  DecoderBlock() = default;
  DecoderBlock(ad::ParameterStore& store, const std::string& name, const TransformerConfig& config,
               ad::Rng& rng);
  ad::DiffArray operator()(const ad::DiffArray& dp, const ad::DiffArray& encoded,
                           const ad::RunMode& mode) const;

  const MultiHeadAttention& self_attention() const { return self_attention_; }
  const MultiHeadAttention& cross_attention() const { return cross_attention_; }

 private:
  TransformerConfig config_;
  MultiHeadAttention self_attention_;
  LayerNorm norm1_;
  MultiHeadAttention cross_attention_;
  LayerNorm norm2_;
};

/// Encoder over the position-encoded input window, causally masked decoder
/// over a position-encoded query source that cross-attends to the encoding.
class Transformer {
 public:
  Transformer() = default;
  Transformer(ad::ParameterStore& store, const std::string& name, TransformerConfig config,
              ad::Rng& rng);

  /// encoder_input, decoder_input: [B, K, d]. Returns the full decoded
  /// sequence [B, K, d].
  ad::DiffArray sequence(const ad::DiffArray& encoder_input, const ad::DiffArray& decoder_input,
                         const ad::RunMode& mode) const;

  /// Last position of sequence(): [B, d].
  ad::DiffArray final_step(const ad::DiffArray& encoder_input, const ad::DiffArray& decoder_input,
                           const ad::RunMode& mode) const;

  const TransformerConfig& config() const { return config_; }
  const EncoderBlock& encoder() const { return encoder_; }
  const DecoderBlock& decoder() const { return decoder_; }

 private:
  TransformerConfig config_;
  EncoderBlock encoder_;
  DecoderBlock decoder_;
};

/// How node features are arranged into transformer rows.
enum class TemporalLayout {
  kPerNode,    // each node is its own sequence of width D (batched over N)
  kFlattened,  // one sequence of width N·D
};

/// What the decoder attends over causally.
enum class DecoderQuery {
  kInputWindow,      // the window itself
  kLastObservation,  // X^(t) repeated K times
};

/// Model width the transformer needs for a given layout.
std::size_t temporal_width(TemporalLayout layout, std::size_t nodes, std::size_t features);

/// Runs a transformer over a window [K, N, D] or [B, K, N, D] and returns the
/// decoder's final step reshaped to [N, D] (or [B, N, D]).
ad::DiffArray transformer_forward(const Transformer& transformer, const ad::DiffArray& window,
                                  TemporalLayout layout, DecoderQuery query,
                                  const ad::RunMode& mode);

}  // namespace radnet::temporal
