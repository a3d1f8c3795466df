#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "radnet/array.hpp"

namespace radnet::ad {

struct NamedParameter {
  std::string name;
  DiffArray value;
};

enum class Init { kZeros, kOnes, kGlorotUniform };

/// Ordered registry of trainable arrays. Layers keep handles to the same
/// nodes, so updates made through the store are visible to the layers.
class ParameterStore {
 public:
  /// Glorot uses the last two dims as (fan_in, fan_out); vectors use (1, n).
  DiffArray add(const std::string& name, Shape shape, Init init, Rng& rng);

  const std::vector<NamedParameter>& entries() const { return entries_; }
  std::vector<NamedParameter>& entries() { return entries_; }
  const NamedParameter& find(const std::string& name) const;

  std::size_t scalar_count() const;
  void zero_grad();

  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& values);

 private:
  std::vector<NamedParameter> entries_;
};

/// Train/eval switch threaded through forward passes. Dropout draws from
/// `rng`, which must be set whenever `training` is true.
struct RunMode {
  bool training = false;
  Rng* rng = nullptr;

  static RunMode eval() { return {}; }
  static RunMode train(Rng& rng) { return {true, &rng}; }
};

DiffArray apply_dropout(const DiffArray& x, double rate, const RunMode& mode);

enum class Activation { kIdentity, kLeakyRelu, kSigmoid };

DiffArray activate(const DiffArray& x, Activation act, double leaky_slope = kDefaultLeakySlope);

/// x·W + b over the last axis.
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
         Rng& rng, bool bias = true);

  DiffArray operator()(const DiffArray& x) const;

  std::size_t in_width() const { return in_; }
  std::size_t out_width() const { return out_; }
  const DiffArray& weight() const { return weight_; }
  const DiffArray& bias() const { return bias_; }
  bool has_bias() const { return has_bias_; }

 private:
  std::size_t in_ = 0;
  std::size_t out_ = 0;
  bool has_bias_ = false;
  DiffArray weight_;
  DiffArray bias_;
};

struct FeedForwardSpec {
  std::vector<std::size_t> widths;  // input, hidden..., output
  Activation hidden = Activation::kLeakyRelu;
  Activation output = Activation::kIdentity;
  double leaky_slope = kDefaultLeakySlope;
};

/// Chain of affine layers; every layer but the last uses `hidden`.
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ParameterStore& store, const std::string& name, FeedForwardSpec spec, Rng& rng);

  DiffArray operator()(const DiffArray& x) const;

  const std::vector<Linear>& layers() const { return layers_; }
  const FeedForwardSpec& spec() const { return spec_; }

 private:
  FeedForwardSpec spec_;
  std::vector<Linear> layers_;
};

}  // namespace radnet::ad
