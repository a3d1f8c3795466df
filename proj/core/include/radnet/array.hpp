#pragma once

// Dense float64 arrays with reverse-mode differentiation.
//
// Every op records its inputs and a backward closure on the result node when
// any input requires a gradient. Calling backward() on a scalar walks that
// record in reverse topological order, accumulates gradients into the leaves
// and then releases the record, so each forward pass owns a fresh tape.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace radnet::ad {

using Shape = std::vector<std::size_t>;
using Rng = std::mt19937_64;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::vector<double>& grad_buffer();
};

class DiffArray {
 public:
  DiffArray();
  DiffArray(Shape shape, std::vector<double> values, bool requires_grad = false);

  static DiffArray zeros(Shape shape, bool requires_grad = false);
  static DiffArray full(Shape shape, double value, bool requires_grad = false);
  static DiffArray scalar(double value, bool requires_grad = false);
  /// Row-major nested-list convenience for tests and small literals.
  static DiffArray matrix(std::initializer_list<std::initializer_list<double>> rows,
                          bool requires_grad = false);
  static DiffArray vector(std::initializer_list<double> values, bool requires_grad = false);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return node_->value.size(); }

  std::span<const double> values() const { return node_->value; }
  /// Mutable access is meant for leaves (parameters, inputs) between passes.
  std::span<double> mutable_values() { return node_->value; }
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  /// Zeros when no gradient has been accumulated yet.
  std::vector<double> grad() const;
  void zero_grad() { node_->grad.clear(); }

  /// Seeds d(self)/d(self) = 1 on a single-element array and runs the reverse
  /// pass. The recorded graph is released afterwards.
  void backward();

  /// Same values, no history, no gradient requirement.
  DiffArray detach() const;

  const std::shared_ptr<Node>& node() const { return node_; }

  static DiffArray from_node(std::shared_ptr<Node> node);

 private:
  std::shared_ptr<Node> node_;
};

// ---- elementwise & broadcasting ------------------------------------------

Shape broadcast_shapes(const Shape& a, const Shape& b);

DiffArray add(const DiffArray& a, const DiffArray& b);
DiffArray sub(const DiffArray& a, const DiffArray& b);
DiffArray mul(const DiffArray& a, const DiffArray& b);
DiffArray scale(const DiffArray& a, double factor);
DiffArray add_scalar(const DiffArray& a, double offset);
DiffArray neg(const DiffArray& a);

DiffArray operator+(const DiffArray& a, const DiffArray& b);
DiffArray operator-(const DiffArray& a, const DiffArray& b);
DiffArray operator*(const DiffArray& a, const DiffArray& b);
DiffArray operator*(const DiffArray& a, double factor);
DiffArray operator*(double factor, const DiffArray& a);

inline constexpr double kDefaultLeakySlope = 0.01;

DiffArray leaky_relu(const DiffArray& a, double negative_slope = kDefaultLeakySlope);
DiffArray sigmoid(const DiffArray& a);
DiffArray relu(const DiffArray& a);

// ---- reductions ---------------------------------------------------------

DiffArray sum(const DiffArray& a);
DiffArray mean(const DiffArray& a);
/// Reduces one axis; the axis is dropped from the result shape.
DiffArray sum_axis(const DiffArray& a, std::size_t axis);
/// Frobenius norm of the whole array (scalar).
DiffArray norm(const DiffArray& a);
/// Euclidean norm over the last axis; the last axis is dropped.
DiffArray norm_last(const DiffArray& a);

// ---- linear algebra -----------------------------------------------------

/// a: [..., M, K]; b: [K, N] (shared across the batch) or [..., K, N] with the
/// same leading dims as a. Result: [..., M, N].
DiffArray matmul(const DiffArray& a, const DiffArray& b);
/// Swaps the last two axes.
DiffArray transpose(const DiffArray& a);
DiffArray permute(const DiffArray& a, const std::vector<std::size_t>& axes);

// ---- shape manipulation -------------------------------------------------

DiffArray reshape(const DiffArray& a, Shape shape);
DiffArray concat(const std::vector<DiffArray>& parts, std::size_t axis);
/// Contiguous sub-range [start, start+length) along one axis (axis kept).
DiffArray slice(const DiffArray& a, std::size_t axis, std::size_t start, std::size_t length);
/// Single index along an axis; the axis is dropped.
DiffArray select(const DiffArray& a, std::size_t axis, std::size_t index);
/// Stacks equal-shaped arrays along a new leading axis.
DiffArray stack(const std::vector<DiffArray>& parts);

// ---- normalization ------------------------------------------------------

/// Max-subtracted softmax along `axis`. Throws NumericError on NaN input.
DiffArray softmax(const DiffArray& a, std::size_t axis);

/// Softmax over the last axis restricted to allowed positions. `allowed` has
/// the shape of the trailing dims it covers (e.g. [L, L] for [..., L, L]) and
/// is broadcast over the leading dims. Disallowed positions behave as -inf
/// logits: their output is exactly 0 and they receive no gradient.
DiffArray masked_softmax(const DiffArray& a, const std::vector<unsigned char>& allowed,
                         const Shape& mask_shape);

inline constexpr double kLayerNormEps = 1e-5;

/// (x - mean) / sqrt(var + eps) over the last axis, without affine terms.
DiffArray layer_norm(const DiffArray& a, double eps = kLayerNormEps);

/// Inverted dropout: keeps each entry with probability 1-rate and rescales by
/// 1/(1-rate). Identity when `training` is false or rate is 0.
DiffArray dropout(const DiffArray& a, double rate, bool training, Rng& rng);

// ---- misc ---------------------------------------------------------------

/// Lower-triangular [L, L] mask (query i may see keys 0..i).
std::vector<unsigned char> causal_mask(std::size_t length);

bool all_finite(std::span<const double> values);

}  // namespace radnet::ad
