#include "radnet/array.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "radnet/error.hpp"

namespace radnet::ad {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::vector<double>& Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

namespace {

DiffArray make_result(Shape shape, std::vector<double> value,
                      std::vector<std::shared_ptr<Node>> inputs,
                      std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const auto& n) { return n->requires_grad; });
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(inputs);
    node->backward_fn = std::move(backward_fn);
  }
  return DiffArray::from_node(std::move(node));
}

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

// For every element of `out`, the linear index of the broadcast source in `in`.
// Empty when the shapes are identical (identity map).
std::vector<std::size_t> broadcast_offsets(const Shape& in, const Shape& out) {
  if (in == out) return {};
  const std::size_t rank = out.size();
  Shape padded(rank, 1);
  std::copy(in.begin(), in.end(), padded.begin() + static_cast<std::ptrdiff_t>(rank - in.size()));
  const auto in_strides = strides_of(padded);
  std::vector<std::size_t> offsets(shape_size(out));
  std::vector<std::size_t> counter(rank, 0);
  for (std::size_t flat = 0; flat < offsets.size(); ++flat) {
    std::size_t src = 0;
    for (std::size_t d = 0; d < rank; ++d) {
      if (padded[d] != 1) src += counter[d] * in_strides[d];
    }
    offsets[flat] = src;
    for (std::size_t d = rank; d-- > 0;) {
      if (++counter[d] < out[d]) break;
      counter[d] = 0;
    }
  }
  return offsets;
}

inline std::size_t map_index(const std::vector<std::size_t>& offsets, std::size_t i) {
  return offsets.empty() ? i : offsets[i];
}

void require_finite(std::span<const double> values, const char* op) {
  if (!all_finite(values)) {
    throw NumericError(std::string(op) + ": non-finite input");
  }
}

std::size_t check_axis(const DiffArray& a, std::size_t axis, const char* op) {
  if (axis >= a.rank()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for shape " + shape_to_string(a.shape()));
  }
  return axis;
}

struct AxisSplit {
  std::size_t outer;
  std::size_t length;
  std::size_t inner;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t d = 0; d < axis; ++d) s.outer *= shape[d];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) s.inner *= shape[d];
  return s;
}

template <typename Fwd, typename Bwd>
DiffArray unary_elementwise(const DiffArray& a, Fwd fwd, Bwd dydx) {
  const auto in = a.values();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  auto an = a.node();
  return make_result(a.shape(), std::move(out), {an}, [an, dydx](Node& self) {
    auto& g = an->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * dydx(an->value[i], self.value[i]);
    }
  });
}

enum class BinaryKind { kAdd, kSub, kMul };

DiffArray binary(const DiffArray& a, const DiffArray& b, BinaryKind kind) {
  Shape out_shape = broadcast_shapes(a.shape(), b.shape());
  auto ia = broadcast_offsets(a.shape(), out_shape);
  auto ib = broadcast_offsets(b.shape(), out_shape);
  const std::size_t n = shape_size(out_shape);
  std::vector<double> out(n);
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = av[map_index(ia, i)];
    const double y = bv[map_index(ib, i)];
    switch (kind) {
      case BinaryKind::kAdd: out[i] = x + y; break;
      case BinaryKind::kSub: out[i] = x - y; break;
      case BinaryKind::kMul: out[i] = x * y; break;
    }
  }
  auto an = a.node();
  auto bn = b.node();
  return make_result(
      std::move(out_shape), std::move(out), {an, bn},
      [an, bn, ia = std::move(ia), ib = std::move(ib), kind](Node& self) {
        const std::size_t count = self.grad.size();
        if (an->requires_grad) {
          auto& ga = an->grad_buffer();
          for (std::size_t i = 0; i < count; ++i) {
            double d = self.grad[i];
            if (kind == BinaryKind::kMul) d *= bn->value[map_index(ib, i)];
            ga[map_index(ia, i)] += d;
          }
        }
        if (bn->requires_grad) {
          auto& gb = bn->grad_buffer();
          for (std::size_t i = 0; i < count; ++i) {
            double d = self.grad[i];
            if (kind == BinaryKind::kSub) d = -d;
            if (kind == BinaryKind::kMul) d *= an->value[map_index(ia, i)];
            gb[map_index(ib, i)] += d;
          }
        }
      });
}

}  // namespace

// ---- DiffArray ------------------------------------------------------------

DiffArray::DiffArray() : DiffArray(Shape{}, std::vector<double>{0.0}) {}

DiffArray::DiffArray(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(std::make_shared<Node>()) {
  if (shape_size(shape) != values.size()) {
    throw DimensionError("DiffArray: shape " + shape_to_string(shape) + " needs " +
                         std::to_string(shape_size(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

DiffArray DiffArray::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

DiffArray DiffArray::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  return DiffArray(std::move(shape), std::vector<double>(n, value), requires_grad);
}

DiffArray DiffArray::scalar(double value, bool requires_grad) {
  return DiffArray(Shape{}, {value}, requires_grad);
}

DiffArray DiffArray::matrix(std::initializer_list<std::initializer_list<double>> rows,
                            bool requires_grad) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("DiffArray::matrix: ragged rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return DiffArray(Shape{r, c}, std::move(values), requires_grad);
}

DiffArray DiffArray::vector(std::initializer_list<double> values, bool requires_grad) {
  return DiffArray(Shape{values.size()}, std::vector<double>(values), requires_grad);
}

DiffArray DiffArray::from_node(std::shared_ptr<Node> node) {
  DiffArray out;
  out.node_ = std::move(node);
  return out;
}

std::size_t DiffArray::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("dim: axis " + std::to_string(axis) + " out of range for shape " +
                         shape_to_string(shape()));
  }
  return node_->shape[axis];
}

double DiffArray::item() const {
  if (size() != 1) {
    throw DimensionError("item: expected a single element, shape is " +
                         shape_to_string(shape()));
  }
  return node_->value[0];
}

double DiffArray::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) throw DimensionError("at: index rank mismatch");
  const auto strides = strides_of(shape());
  std::size_t flat = 0;
  std::size_t d = 0;
  for (std::size_t i : index) {
    if (i >= shape()[d]) throw IndexError("at: index out of range");
    flat += i * strides[d++];
  }
  return node_->value[flat];
}

std::vector<double> DiffArray::grad() const {
  if (node_->grad.empty()) return std::vector<double>(size(), 0.0);
  return node_->grad;
}

DiffArray DiffArray::detach() const {
  return DiffArray(shape(), node_->value, false);
}

void DiffArray::backward() {
  if (size() != 1) {
    throw DimensionError("backward: output must be a single element, shape is " +
                         shape_to_string(shape()));
  }
  if (!node_->requires_grad) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  for (Node* n : order) {
    if (!n->parents.empty()) {
      n->parents.clear();
      n->backward_fn = nullptr;
    }
  }
}

// ---- elementwise ----------------------------------------------------------

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw DimensionError("cannot broadcast shapes " + shape_to_string(a) + " and " +
                           shape_to_string(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

DiffArray add(const DiffArray& a, const DiffArray& b) { return binary(a, b, BinaryKind::kAdd); }
DiffArray sub(const DiffArray& a, const DiffArray& b) { return binary(a, b, BinaryKind::kSub); }
DiffArray mul(const DiffArray& a, const DiffArray& b) { return binary(a, b, BinaryKind::kMul); }

DiffArray scale(const DiffArray& a, double factor) {
  return unary_elementwise(
      a, [factor](double x) { return x * factor; },
      [factor](double, double) { return factor; });
}

DiffArray add_scalar(const DiffArray& a, double offset) {
  return unary_elementwise(
      a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

DiffArray neg(const DiffArray& a) { return scale(a, -1.0); }

DiffArray operator+(const DiffArray& a, const DiffArray& b) { return add(a, b); }
DiffArray operator-(const DiffArray& a, const DiffArray& b) { return sub(a, b); }
DiffArray operator*(const DiffArray& a, const DiffArray& b) { return mul(a, b); }
DiffArray operator*(const DiffArray& a, double factor) { return scale(a, factor); }
DiffArray operator*(double factor, const DiffArray& a) { return scale(a, factor); }

DiffArray leaky_relu(const DiffArray& a, double negative_slope) {
  return unary_elementwise(
      a, [negative_slope](double x) { return x >= 0.0 ? x : negative_slope * x; },
      [negative_slope](double x, double) { return x >= 0.0 ? 1.0 : negative_slope; });
}

DiffArray relu(const DiffArray& a) { return leaky_relu(a, 0.0); }

DiffArray sigmoid(const DiffArray& a) {
  return unary_elementwise(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

// ---- reductions -----------------------------------------------------------

DiffArray sum(const DiffArray& a) {
  const auto v = a.values();
  const double total = std::accumulate(v.begin(), v.end(), 0.0);
  auto an = a.node();
  return make_result(Shape{}, {total}, {an}, [an](Node& self) {
    auto& g = an->grad_buffer();
    for (double& x : g) x += self.grad[0];
  });
}

DiffArray mean(const DiffArray& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

DiffArray sum_axis(const DiffArray& a, std::size_t axis) {
  check_axis(a, axis, "sum_axis");
  const auto s = split_at(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<double> out(s.outer * s.inner, 0.0);
  const auto v = a.values();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t l = 0; l < s.length; ++l)
      for (std::size_t i = 0; i < s.inner; ++i)
        out[o * s.inner + i] += v[(o * s.length + l) * s.inner + i];
  auto an = a.node();
  return make_result(std::move(out_shape), std::move(out), {an}, [an, s](Node& self) {
    auto& g = an->grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t l = 0; l < s.length; ++l)
        for (std::size_t i = 0; i < s.inner; ++i)
          g[(o * s.length + l) * s.inner + i] += self.grad[o * s.inner + i];
  });
}

DiffArray norm(const DiffArray& a) {
  const auto v = a.values();
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double n = std::sqrt(sq);
  auto an = a.node();
  return make_result(Shape{}, {n}, {an}, [an](Node& self) {
    const double value = self.value[0];
    if (value == 0.0) return;  // subgradient 0 at the origin
    auto& g = an->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * an->value[i] / value;
  });
}

DiffArray norm_last(const DiffArray& a) {
  if (a.rank() == 0) throw DimensionError("norm_last: scalar input");
  const std::size_t width = a.shape().back();
  const std::size_t rows = a.size() / std::max<std::size_t>(width, 1);
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  std::vector<double> out(rows);
  const auto v = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < width; ++c) sq += v[r * width + c] * v[r * width + c];
    out[r] = std::sqrt(sq);
  }
  auto an = a.node();
  return make_result(std::move(out_shape), std::move(out), {an}, [an, width, rows](Node& self) {
    auto& g = an->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const double n = self.value[r];
      if (n == 0.0) continue;
      for (std::size_t c = 0; c < width; ++c)
        g[r * width + c] += self.grad[r] * an->value[r * width + c] / n;
    }
  });
}

// ---- linear algebra -------------------------------------------------------

DiffArray matmul(const DiffArray& a, const DiffArray& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw DimensionError("matmul: operands must have rank >= 2, got " +
                         shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()));
  }
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  const std::size_t m = as[as.size() - 2];
  const std::size_t k = as.back();
  const std::size_t k2 = bs[bs.size() - 2];
  const std::size_t n = bs.back();
  const bool shared_b = bs.size() == 2;
  const bool leading_match =
      shared_b || (bs.size() == as.size() && std::equal(as.begin(), as.end() - 2, bs.begin()));
  if (k != k2 || !leading_match) {
    throw DimensionError("matmul: incompatible shapes " + shape_to_string(as) + " and " +
                         shape_to_string(bs));
  }
  const std::size_t batch = a.size() / (m * k == 0 ? 1 : m * k);
  Shape out_shape(as.begin(), as.end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<double> out(batch * m * n, 0.0);
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t bt = 0; bt < batch; ++bt) {
    const double* A = av.data() + bt * m * k;
    const double* B = bv.data() + (shared_b ? 0 : bt * k * n);
    double* C = out.data() + bt * m * n;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = A[i * k + p];
        for (std::size_t j = 0; j < n; ++j) C[i * n + j] += aip * B[p * n + j];
      }
  }
  auto an = a.node();
  auto bn = b.node();
  return make_result(std::move(out_shape), std::move(out), {an, bn},
                     [an, bn, batch, m, k, n, shared_b](Node& self) {
                       const double* dC_all = self.grad.data();
                       if (an->requires_grad) {
                         auto& ga = an->grad_buffer();
                         for (std::size_t bt = 0; bt < batch; ++bt) {
                           const double* B = bn->value.data() + (shared_b ? 0 : bt * k * n);
                           const double* dC = dC_all + bt * m * n;
                           double* dA = ga.data() + bt * m * k;
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t p = 0; p < k; ++p) {
                               double acc = 0.0;
                               for (std::size_t j = 0; j < n; ++j) acc += dC[i * n + j] * B[p * n + j];
                               dA[i * k + p] += acc;
                             }
                         }
                       }
                       if (bn->requires_grad) {
                         auto& gb = bn->grad_buffer();
                         for (std::size_t bt = 0; bt < batch; ++bt) {
                           const double* A = an->value.data() + bt * m * k;
                           const double* dC = dC_all + bt * m * n;
                           double* dB = gb.data() + (shared_b ? 0 : bt * k * n);
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t p = 0; p < k; ++p) {
                               const double aip = A[i * k + p];
                               for (std::size_t j = 0; j < n; ++j) dB[p * n + j] += aip * dC[i * n + j];
                             }
                         }
                       }
                     });
}

DiffArray permute(const DiffArray& a, const std::vector<std::size_t>& axes) {
  const std::size_t rank = a.rank();
  if (axes.size() != rank) throw DimensionError("permute: axes rank mismatch");
  std::vector<bool> seen(rank, false);
  for (std::size_t ax : axes) {
    if (ax >= rank || seen[ax]) throw DimensionError("permute: invalid axes");
    seen[ax] = true;
  }
  Shape out_shape(rank);
  for (std::size_t d = 0; d < rank; ++d) out_shape[d] = a.shape()[axes[d]];
  const auto in_strides = strides_of(a.shape());
  const std::size_t total = a.size();
  std::vector<std::size_t> src(total);
  std::vector<std::size_t> counter(rank, 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t s = 0;
    for (std::size_t d = 0; d < rank; ++d) s += counter[d] * in_strides[axes[d]];
    src[flat] = s;
    for (std::size_t d = rank; d-- > 0;) {
      if (++counter[d] < out_shape[d]) break;
      counter[d] = 0;
    }
  }
  std::vector<double> out(total);
  const auto v = a.values();
  for (std::size_t i = 0; i < total; ++i) out[i] = v[src[i]];
  auto an = a.node();
  return make_result(std::move(out_shape), std::move(out), {an},
                     [an, src = std::move(src)](Node& self) {
                       auto& g = an->grad_buffer();
                       for (std::size_t i = 0; i < src.size(); ++i) g[src[i]] += self.grad[i];
                     });
}

DiffArray transpose(const DiffArray& a) {
  if (a.rank() < 2) throw DimensionError("transpose: rank must be >= 2");
  std::vector<std::size_t> axes(a.rank());
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[a.rank() - 1], axes[a.rank() - 2]);
  return permute(a, axes);
}

// ---- shape manipulation ---------------------------------------------------

DiffArray reshape(const DiffArray& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + shape_to_string(a.shape()) + " as " +
                         shape_to_string(shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  auto an = a.node();
  return make_result(std::move(shape), std::move(out), {an}, [an](Node& self) {
    auto& g = an->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

DiffArray concat(const std::vector<DiffArray>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts.front().shape();
  check_axis(parts.front(), axis, "concat");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) {
      throw DimensionError("concat: shape " + shape_to_string(s) + " incompatible with " +
                           shape_to_string(first) + " along axis " + std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }
  const auto outer_split = split_at(out_shape, axis);
  const std::size_t outer = outer_split.outer;
  const std::size_t inner = outer_split.inner;
  std::vector<double> out(shape_size(out_shape));
  std::vector<std::size_t> offsets;  // axis offset of each part
  std::size_t running = 0;
  for (const auto& p : parts) {
    offsets.push_back(running);
    running += p.shape()[axis];
  }
  const std::size_t total_len = out_shape[axis];
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const auto v = parts[pi].values();
    const std::size_t len = parts[pi].shape()[axis];
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(o * len * inner), len * inner,
                  out.begin() + static_cast<std::ptrdiff_t>((o * total_len + offsets[pi]) * inner));
  }
  std::vector<std::shared_ptr<Node>> nodes;
  std::vector<std::size_t> lengths;
  for (const auto& p : parts) {
    nodes.push_back(p.node());
    lengths.push_back(p.shape()[axis]);
  }
  auto captured = nodes;
  return make_result(std::move(out_shape), std::move(out), std::move(nodes),
                     [captured = std::move(captured), lengths = std::move(lengths),
                      offsets = std::move(offsets), outer, inner, total_len](Node& self) {
                       for (std::size_t pi = 0; pi < captured.size(); ++pi) {
                         if (!captured[pi]->requires_grad) continue;
                         auto& g = captured[pi]->grad_buffer();
                         const std::size_t len = lengths[pi];
                         for (std::size_t o = 0; o < outer; ++o)
                           for (std::size_t x = 0; x < len * inner; ++x)
                             g[o * len * inner + x] +=
                                 self.grad[(o * total_len + offsets[pi]) * inner + x];
                       }
                     });
}

DiffArray slice(const DiffArray& a, std::size_t axis, std::size_t start, std::size_t length) {
  check_axis(a, axis, "slice");
  if (start + length > a.shape()[axis]) {
    throw IndexError("slice: range [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") exceeds axis length " +
                     std::to_string(a.shape()[axis]));
  }
  const auto s = split_at(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape[axis] = length;
  std::vector<double> out(s.outer * length * s.inner);
  const auto v = a.values();
  for (std::size_t o = 0; o < s.outer; ++o)
    std::copy_n(v.begin() + static_cast<std::ptrdiff_t>((o * s.length + start) * s.inner),
                length * s.inner,
                out.begin() + static_cast<std::ptrdiff_t>(o * length * s.inner));
  auto an = a.node();
  return make_result(std::move(out_shape), std::move(out), {an},
                     [an, s, start, length](Node& self) {
                       auto& g = an->grad_buffer();
                       for (std::size_t o = 0; o < s.outer; ++o)
                         for (std::size_t x = 0; x < length * s.inner; ++x)
                           g[(o * s.length + start) * s.inner + x] +=
                               self.grad[o * length * s.inner + x];
                     });
}

DiffArray select(const DiffArray& a, std::size_t axis, std::size_t index) {
  auto part = slice(a, axis, index, 1);
  Shape shape = a.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  return reshape(part, std::move(shape));
}

DiffArray stack(const std::vector<DiffArray>& parts) {
  if (parts.empty()) throw DimensionError("stack: no inputs");
  std::vector<DiffArray> lifted;
  lifted.reserve(parts.size());
  for (const auto& p : parts) {
    if (p.shape() != parts.front().shape()) {
      throw DimensionError("stack: shape " + shape_to_string(p.shape()) + " differs from " +
                           shape_to_string(parts.front().shape()));
    }
    Shape s = p.shape();
    s.insert(s.begin(), 1);
    lifted.push_back(reshape(p, std::move(s)));
  }
  return concat(lifted, 0);
}

// ---- normalization --------------------------------------------------------

DiffArray softmax(const DiffArray& a, std::size_t axis) {
  check_axis(a, axis, "softmax");
  require_finite(a.values(), "softmax");
  const auto s = split_at(a.shape(), axis);
  const auto v = a.values();
  std::vector<double> out(v.size());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.length * s.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < s.length; ++l) mx = std::max(mx, v[base + l * s.inner]);
      double z = 0.0;
      for (std::size_t l = 0; l < s.length; ++l) {
        const double e = std::exp(v[base + l * s.inner] - mx);
        out[base + l * s.inner] = e;
        z += e;
      }
      for (std::size_t l = 0; l < s.length; ++l) out[base + l * s.inner] /= z;
    }
  auto an = a.node();
  return make_result(a.shape(), std::move(out), {an}, [an, s](Node& self) {
    auto& g = an->grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = o * s.length * s.inner + i;
        double dot = 0.0;
        for (std::size_t l = 0; l < s.length; ++l)
          dot += self.grad[base + l * s.inner] * self.value[base + l * s.inner];
        for (std::size_t l = 0; l < s.length; ++l) {
          const std::size_t idx = base + l * s.inner;
          g[idx] += self.value[idx] * (self.grad[idx] - dot);
        }
      }
  });
}

DiffArray masked_softmax(const DiffArray& a, const std::vector<unsigned char>& allowed,
                         const Shape& mask_shape) {
  if (mask_shape.empty() || mask_shape.size() > a.rank() ||
      !std::equal(mask_shape.begin(), mask_shape.end(),
                  a.shape().end() - static_cast<std::ptrdiff_t>(mask_shape.size())) ||
      allowed.size() != shape_size(mask_shape)) {
    throw DimensionError("masked_softmax: mask shape " + shape_to_string(mask_shape) +
                         " does not match trailing dims of " + shape_to_string(a.shape()));
  }
  require_finite(a.values(), "masked_softmax");
  const std::size_t width = a.shape().back();
  const std::size_t rows = a.size() / width;
  const std::size_t mask_size = allowed.size();
  const auto v = a.values();
  std::vector<double> out(v.size(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * width;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < width; ++c)
      if (allowed[(base + c) % mask_size]) mx = std::max(mx, v[base + c]);
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw StructuralError("masked_softmax: row " + std::to_string(r) +
                            " has no allowed positions");
    }
    double z = 0.0;
    for (std::size_t c = 0; c < width; ++c) {
      if (!allowed[(base + c) % mask_size]) continue;
      out[base + c] = std::exp(v[base + c] - mx);
      z += out[base + c];
    }
    for (std::size_t c = 0; c < width; ++c) out[base + c] /= z;
  }
  auto an = a.node();
  return make_result(a.shape(), std::move(out), {an}, [an, width, rows](Node& self) {
    // Masked outputs are exactly zero, so they drop out of both terms.
    auto& g = an->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t base = r * width;
      double dot = 0.0;
      for (std::size_t c = 0; c < width; ++c) dot += self.grad[base + c] * self.value[base + c];
      for (std::size_t c = 0; c < width; ++c)
        g[base + c] += self.value[base + c] * (self.grad[base + c] - dot);
    }
  });
}

DiffArray layer_norm(const DiffArray& a, double eps) {
  if (a.rank() == 0 || a.shape().back() < 2) {
    throw DimensionError("layer_norm: last axis must have size >= 2, shape is " +
                         shape_to_string(a.shape()));
  }
  const std::size_t width = a.shape().back();
  const std::size_t rows = a.size() / width;
  const auto v = a.values();
  std::vector<double> out(v.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = v.data() + r * width;
    double mu = 0.0;
    for (std::size_t c = 0; c < width; ++c) mu += x[c];
    mu /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t c = 0; c < width; ++c) var += (x[c] - mu) * (x[c] - mu);
    var /= static_cast<double>(width);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < width; ++c) out[r * width + c] = (x[c] - mu) * inv_std[r];
  }
  auto an = a.node();
  return make_result(a.shape(), std::move(out), {an},
                     [an, width, rows, inv_std = std::move(inv_std)](Node& self) {
                       auto& g = an->grad_buffer();
                       const double w = static_cast<double>(width);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* dy = self.grad.data() + r * width;
                         const double* y = self.value.data() + r * width;
                         double mean_dy = 0.0;
                         double mean_dy_y = 0.0;
                         for (std::size_t c = 0; c < width; ++c) {
                           mean_dy += dy[c];
                           mean_dy_y += dy[c] * y[c];
                         }
                         mean_dy /= w;
                         mean_dy_y /= w;
                         for (std::size_t c = 0; c < width; ++c)
                           g[r * width + c] += inv_std[r] * (dy[c] - mean_dy - y[c] * mean_dy_y);
                       }
                     });
}

DiffArray dropout(const DiffArray& a, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ArgumentError("dropout: rate must be in [0, 1)");
  if (!training || rate == 0.0) return a;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(a.size());
  for (double& m : mask) m = uniform(rng) < rate ? 0.0 : keep_scale;
  return mul(a, DiffArray(a.shape(), std::move(mask)));
}

std::vector<unsigned char> causal_mask(std::size_t length) {
  std::vector<unsigned char> mask(length * length, 0);
  for (std::size_t i = 0; i < length; ++i)
    for (std::size_t j = 0; j <= i; ++j) mask[i * length + j] = 1;
  return mask;
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace radnet::ad
