#include "radnet/parameters.hpp"

#include <algorithm>
#include <cmath>

#include "radnet/error.hpp"

namespace radnet::ad {

DiffArray ParameterStore::add(const std::string& name, Shape shape, Init init, Rng& rng) {
  const bool exists = std::any_of(entries_.begin(), entries_.end(),
                                  [&](const NamedParameter& p) { return p.name == name; });
  if (exists) throw ArgumentError("parameter '" + name + "' registered twice");
  std::vector<double> values(shape_size(shape), 0.0);
  switch (init) {
    case Init::kZeros: break;
    case Init::kOnes: std::fill(values.begin(), values.end(), 1.0); break;
    case Init::kGlorotUniform: {
      const double fan_in = shape.size() >= 2 ? static_cast<double>(shape[shape.size() - 2]) : 1.0;
      const double fan_out = shape.empty() ? 1.0 : static_cast<double>(shape.back());
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> uniform(-limit, limit);
      for (double& v : values) v = uniform(rng);
      break;
    }
  }
  DiffArray param(std::move(shape), std::move(values), true);
  entries_.push_back({name, param});
  return param;
}

const NamedParameter& ParameterStore::find(const std::string& name) const {
  auto it = std::find_if(entries_.begin(), entries_.end(),
                         [&](const NamedParameter& p) { return p.name == name; });
  if (it == entries_.end()) throw ArgumentError("unknown parameter '" + name + "'");
  return *it;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t total = 0;
  for (const auto& p : entries_) total += p.value.size();
  return total;
}

void ParameterStore::zero_grad() {
  for (auto& p : entries_) p.value.zero_grad();
}

std::vector<std::vector<double>> ParameterStore::snapshot() const {
  std::vector<std::vector<double>> out;
  out.reserve(entries_.size());
  for (const auto& p : entries_) out.emplace_back(p.value.values().begin(), p.value.values().end());
  return out;
}

void ParameterStore::restore(const std::vector<std::vector<double>>& values) {
  if (values.size() != entries_.size()) throw DimensionError("restore: parameter count mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto dst = entries_[i].value.mutable_values();
    if (dst.size() != values[i].size()) {
      throw DimensionError("restore: size mismatch for '" + entries_[i].name + "'");
    }
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

DiffArray apply_dropout(const DiffArray& x, double rate, const RunMode& mode) {
  if (!mode.training || rate == 0.0) return x;
  if (mode.rng == nullptr) throw ArgumentError("training mode requires an RNG");
  return dropout(x, rate, true, *mode.rng);
}

DiffArray activate(const DiffArray& x, Activation act, double leaky_slope) {
  switch (act) {
    case Activation::kIdentity: return x;
    case Activation::kLeakyRelu: return leaky_relu(x, leaky_slope);
    case Activation::kSigmoid: return sigmoid(x);
  }
  return x;
}

Linear::Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
               Rng& rng, bool bias)
    : in_(in), out_(out), has_bias_(bias) {
  weight_ = store.add(name + ".weight", {in, out}, Init::kGlorotUniform, rng);
  if (bias) bias_ = store.add(name + ".bias", {out}, Init::kZeros, rng);
}

DiffArray Linear::operator()(const DiffArray& x) const {
  if (x.rank() == 0 || x.shape().back() != in_) {
    throw DimensionError("Linear: input width " +
                         (x.rank() == 0 ? std::string("<scalar>") : std::to_string(x.shape().back())) +
                         " does not match layer width " + std::to_string(in_));
  }
  DiffArray y;
  if (x.rank() == 1) {
    y = reshape(matmul(reshape(x, {1, in_}), weight_), {out_});
  } else {
    y = matmul(x, weight_);
  }
  return has_bias_ ? add(y, bias_) : y;
}

FeedForward::FeedForward(ParameterStore& store, const std::string& name, FeedForwardSpec spec,
                         Rng& rng)
    : spec_(std::move(spec)) {
  if (spec_.widths.size() < 2) throw ArgumentError("FeedForward: need at least in/out widths");
  for (std::size_t i = 0; i + 1 < spec_.widths.size(); ++i) {
    layers_.emplace_back(store, name + ".layer" + std::to_string(i), spec_.widths[i],
                         spec_.widths[i + 1], rng);
  }
}

DiffArray FeedForward::operator()(const DiffArray& x) const {
  DiffArray h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i](h);
    const bool last = i + 1 == layers_.size();
    h = activate(h, last ? spec_.output : spec_.hidden, spec_.leaky_slope);
  }
  return h;
}

}  // namespace radnet::ad
