#include "radnet/graph.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "radnet/error.hpp"

namespace radnet::graph {

using ad::DiffArray;

RoadGraph::RoadGraph(std::size_t n_nodes, const std::vector<Edge>& edges)
    : n_nodes_(n_nodes), neighborhoods_(n_nodes), mask_(n_nodes * n_nodes, 0) {
  for (const auto& [a, b] : edges) {
    if (a >= n_nodes || b >= n_nodes) {
      throw StructuralError("edge (" + std::to_string(a) + ", " + std::to_string(b) +
                            ") references a node outside [0, " + std::to_string(n_nodes) + ")");
    }
    if (a != b) edges_.emplace_back(std::min(a, b), std::max(a, b));
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
  for (std::size_t i = 0; i < n_nodes; ++i) neighborhoods_[i].push_back(i);
  for (const auto& [a, b] : edges_) {
    neighborhoods_[a].push_back(b);
    neighborhoods_[b].push_back(a);
  }
  for (std::size_t i = 0; i < n_nodes; ++i) {
    std::sort(neighborhoods_[i].begin(), neighborhoods_[i].end());
    for (std::size_t j : neighborhoods_[i]) mask_[i * n_nodes + j] = 1;
  }
}

const std::vector<std::size_t>& RoadGraph::neighborhood(std::size_t i) const {
  if (i >= n_nodes_) throw IndexError("node " + std::to_string(i) + " out of range");
  return neighborhoods_[i];
}

bool RoadGraph::adjacent(std::size_t i, std::size_t j) const {
  if (i >= n_nodes_ || j >= n_nodes_) return false;
  return mask_[i * n_nodes_ + j] != 0;
}

RoadGraph RoadGraph::permuted(const std::vector<std::size_t>& perm) const {
  if (perm.size() != n_nodes_) throw ArgumentError("permuted: permutation size mismatch");
  std::vector<Edge> relabeled;
  relabeled.reserve(edges_.size());
  for (const auto& [a, b] : edges_) relabeled.emplace_back(perm.at(a), perm.at(b));
  return RoadGraph(n_nodes_, relabeled);
}

RoadGraph read_edge_list(const std::filesystem::path& path, std::size_t n_nodes) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open edge list '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw FormatError("'" + path.string() + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "src,dst") {
    throw FormatError("'" + path.string() + "': expected header 'src,dst', got '" + line + "'");
  }
  std::vector<Edge> edges;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string src_text;
    std::string dst_text;
    long long src = -1;
    long long dst = -1;
    bool ok = std::getline(fields, src_text, ',') && std::getline(fields, dst_text);
    if (ok) {
      try {
        std::size_t used_src = 0;
        std::size_t used_dst = 0;
        src = std::stoll(src_text, &used_src);
        dst = std::stoll(dst_text, &used_dst);
        ok = used_src == src_text.size() && used_dst == dst_text.size();
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (!ok) {
      throw FormatError("'" + path.string() + "' row " + std::to_string(row) + " ('" + line +
                        "') is not a pair of integers");
    }
    if (src < 0 || dst < 0 || static_cast<std::size_t>(src) >= n_nodes ||
        static_cast<std::size_t>(dst) >= n_nodes) {
      throw FormatError("'" + path.string() + "' row " + std::to_string(row) + " ('" + line +
                        "') references a node outside [0, " + std::to_string(n_nodes) + ")");
    }
    edges.emplace_back(static_cast<std::size_t>(src), static_cast<std::size_t>(dst));
  }
  return RoadGraph(n_nodes, edges);
}

void write_edge_list(const std::filesystem::path& path, const RoadGraph& graph) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write edge list '" + path.string() + "'");
  out << "src,dst\n";
  for (const auto& [a, b] : graph.edges()) out << a << ',' << b << '\n';
}

double AttentionMap::at(std::size_t i, std::size_t j) const {
  for (const auto& [node, alpha] : rows.at(i)) {
    if (node == j) return alpha;
  }
  return 0.0;
}

GatLayer::GatLayer(ad::ParameterStore& store, const std::string& name, GatConfig config,
                   ad::Rng& rng)
    : config_(config) {
  if (config_.heads == 0) throw ArgumentError("GatLayer: heads must be >= 1");
  for (std::size_t m = 0; m < config_.heads; ++m) {
    const std::string prefix = name + ".head" + std::to_string(m);
    Head h;
    h.weight = store.add(prefix + ".weight", {config_.in_width, config_.out_width},
                         ad::Init::kGlorotUniform, rng);
    h.score_src = store.add(prefix + ".score_src", {config_.out_width, 1},
                            ad::Init::kGlorotUniform, rng);
    h.score_dst = store.add(prefix + ".score_dst", {config_.out_width, 1},
                            ad::Init::kGlorotUniform, rng);
    h.score_bias = store.add(prefix + ".score_bias", {1}, ad::Init::kZeros, rng);
    heads_.push_back(std::move(h));
  }
}

std::size_t GatLayer::output_width() const {
  return config_.aggregation == HeadAggregation::kConcat ? config_.heads * config_.out_width
                                                         : config_.out_width;
}

DiffArray GatLayer::as_batch(const DiffArray& x, const RoadGraph& graph) const {
  if (x.rank() != 2 && x.rank() != 3) {
    throw DimensionError("GatLayer: expected [N, D] or [B, N, D], got " +
                         ad::shape_to_string(x.shape()));
  }
  const std::size_t n = x.dim(x.rank() - 2);
  const std::size_t d = x.dim(x.rank() - 1);
  if (n != graph.n_nodes()) {
    throw DimensionError("GatLayer: input has " + std::to_string(n) + " rows, graph has " +
                         std::to_string(graph.n_nodes()) + " nodes");
  }
  if (d != config_.in_width) {
    throw DimensionError("GatLayer: feature width " + std::to_string(d) +
                         " does not match layer input width " + std::to_string(config_.in_width));
  }
  return x.rank() == 3 ? x : reshape(x, {1, n, d});
}

DiffArray GatLayer::head_attention(const DiffArray& projected, const RoadGraph& graph,
                                   const Head& head) const {
  const std::size_t n = graph.n_nodes();
  auto src = matmul(projected, head.score_src);             // [B, N, 1]
  auto dst = transpose(matmul(projected, head.score_dst));  // [B, 1, N]
  auto logits = ad::leaky_relu(add(add(src, dst), head.score_bias), config_.leaky_slope);
  return ad::masked_softmax(logits, graph.attention_mask(), {n, n});
}

DiffArray GatLayer::forward(const DiffArray& x, const RoadGraph& graph) const {
  const bool batched = x.rank() == 3;
  auto xb = as_batch(x, graph);
  std::vector<DiffArray> outputs;
  outputs.reserve(heads_.size());
  for (const auto& head : heads_) {
    auto projected = matmul(xb, head.weight);  // [B, N, D_out]
    auto alpha = head_attention(projected, graph, head);
    outputs.push_back(ad::sigmoid(matmul(alpha, projected)));
  }
  DiffArray out;
  if (outputs.size() == 1) {
    out = outputs.front();
  } else if (config_.aggregation == HeadAggregation::kConcat) {
    out = concat(outputs, 2);
  } else {
    out = outputs.front();
    for (std::size_t m = 1; m < outputs.size(); ++m) out = add(out, outputs[m]);
    out = scale(out, 1.0 / static_cast<double>(outputs.size()));
  }
  if (!batched) out = reshape(out, {graph.n_nodes(), output_width()});
  return out;
}

DiffArray GatLayer::over_window(const DiffArray& w, const RoadGraph& graph) const {
  if (w.rank() != 3 && w.rank() != 4) {
    throw DimensionError("over_window: expected [K, N, D] or [B, K, N, D], got " +
                         ad::shape_to_string(w.shape()));
  }
  const std::size_t n = w.dim(w.rank() - 2);
  const std::size_t d = w.dim(w.rank() - 1);
  const std::size_t slices = w.size() / std::max<std::size_t>(n * d, 1);
  auto out = forward(reshape(w, {slices, n, d}), graph);
  ad::Shape shape(w.shape().begin(), w.shape().end() - 1);
  shape.push_back(output_width());
  return reshape(out, std::move(shape));
}

DiffArray GatLayer::attention(const DiffArray& x, const RoadGraph& graph, std::size_t head) const {
  if (head >= heads_.size()) throw IndexError("GatLayer: head index out of range");
  auto xb = as_batch(x, graph);
  auto alpha = head_attention(matmul(xb, heads_[head].weight), graph, heads_[head]);
  if (x.rank() == 2) alpha = reshape(alpha, {graph.n_nodes(), graph.n_nodes()});
  return alpha;
}

AttentionMap GatLayer::attention_coefficients(const DiffArray& x, const RoadGraph& graph,
                                              std::size_t head) const {
  if (x.rank() != 2) throw DimensionError("attention_coefficients: expected [N, D] input");
  const auto alpha = attention(x.detach(), graph, head);
  const std::size_t n = graph.n_nodes();
  AttentionMap map;
  map.rows.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& hood = graph.neighborhood(i);
    if (hood.empty()) throw StructuralError("node " + std::to_string(i) + " has no neighbors");
    for (std::size_t j : hood) map.rows[i].emplace_back(j, alpha.values()[i * n + j]);
  }
  return map;
}

}  // namespace radnet::graph
