#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "radnet/array.hpp"
#include "radnet/parameters.hpp"

namespace radnet::graph {

using Edge = std::pair<std::size_t, std::size_t>;

/// Static road network: one node per link, undirected edges between links
/// that share a junction. Every node's neighborhood contains the node itself.
class RoadGraph {
 public:
  RoadGraph() = default;
  /// Self-pairs and duplicates in `edges` are accepted and folded away.
  RoadGraph(std::size_t n_nodes, const std::vector<Edge>& edges);

  std::size_t n_nodes() const { return n_nodes_; }
  /// Distinct undirected edges, self-loops excluded.
  std::size_t n_edges() const { return edges_.size(); }
  /// Normalized (lo, hi) pairs, sorted.
  const std::vector<Edge>& edges() const { return edges_; }
  /// Sorted, includes i.
  const std::vector<std::size_t>& neighborhood(std::size_t i) const;
  bool adjacent(std::size_t i, std::size_t j) const;

  /// Dense [N, N] allowed-mask (1 where j is in the neighborhood of i).
  const std::vector<unsigned char>& attention_mask() const { return mask_; }

  /// Relabels node i as perm[i].
  RoadGraph permuted(const std::vector<std::size_t>& perm) const;

 private:
  std::size_t n_nodes_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> neighborhoods_;
  std::vector<unsigned char> mask_;
};

/// Reads a `src,dst` CSV with 0-based ids. Throws FormatError naming the
/// offending row when an id is >= n_nodes or a row is malformed.
RoadGraph read_edge_list(const std::filesystem::path& path, std::size_t n_nodes);
void write_edge_list(const std::filesystem::path& path, const RoadGraph& graph);

enum class HeadAggregation { kConcat, kMean };

struct GatConfig {
  std::size_t in_width = 1;
  std::size_t out_width = 1;
  std::size_t heads = 1;
  HeadAggregation aggregation = HeadAggregation::kMean;
  double leaky_slope = ad::kDefaultLeakySlope;
};

/// Attention coefficients for one head, one row per node over its neighborhood.
struct AttentionMap {
  std::vector<std::vector<std::pair<std::size_t, double>>> rows;
  /// 0 for pairs outside the neighborhood.
  double at(std::size_t i, std::size_t j) const;
};

/// Multi-head graph attention.
///
/// Per head m with projection W_m and scoring vector [a_src; a_dst], bias b:
///   e_ij  = LeakyReLU(a_src·(W_m h_i) + a_dst·(W_m h_j) + b)
///   α_ij  = softmax over j in N(i)
///   h'_i  = sigmoid(Σ_j α_ij W_m h_j)
/// Heads are concatenated, or averaged when this is a final layer.
class GatLayer {
 public:
  GatLayer() = default;
  GatLayer(ad::ParameterStore& store, const std::string& name, GatConfig config, ad::Rng& rng);

  /// x: [N, D_in] or [B, N, D_in].
  ad::DiffArray forward(const ad::DiffArray& x, const RoadGraph& graph) const;

  /// w: [K, N, D_in] or [B, K, N, D_in]; the same layer is applied to every
  /// feature matrix of the window independently.
  ad::DiffArray over_window(const ad::DiffArray& w, const RoadGraph& graph) const;

  /// Dense coefficients [..., N, N] for one head (zeros off-neighborhood).
  ad::DiffArray attention(const ad::DiffArray& x, const RoadGraph& graph, std::size_t head) const;

  AttentionMap attention_coefficients(const ad::DiffArray& x, const RoadGraph& graph,
                                      std::size_t head) const;

  std::size_t output_width() const;
  const GatConfig& config() const { return config_; }

  struct Head {
    ad::DiffArray weight;      // [D_in, D_out]
    ad::DiffArray score_src;   // [D_out, 1]
    ad::DiffArray score_dst;   // [D_out, 1]
    ad::DiffArray score_bias;  // [1]
  };
  const std::vector<Head>& heads() const { return heads_; }

 private:
  ad::DiffArray head_attention(const ad::DiffArray& projected, const RoadGraph& graph,
                               const Head& head) const;
  ad::DiffArray as_batch(const ad::DiffArray& x, const RoadGraph& graph) const;

  GatConfig config_;
  std::vector<Head> heads_;
};

}  // namespace radnet::graph
