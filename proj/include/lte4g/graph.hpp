#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "lte4g/dense.hpp"
#include "lte4g/error.hpp"
#include "lte4g/sparse.hpp"

namespace lte4g {

using NodeId = std::size_t;
using ClassId = std::size_t;
using Edge = std::pair<NodeId, NodeId>;

/// Undirected, unweighted attributed graph. Edges are stored once as (min, max), sorted,
/// with self-loops and duplicates removed. Features are kept in CSR form since citation
/// features are sparse bag-of-words vectors.
class Graph {
 public:
  Graph() = default;

  Graph(std::size_t n, std::vector<Edge> edges, SparseMat features, std::vector<ClassId> labels,
        std::size_t class_count)
      : n_(n), features_(std::move(features)), labels_(std::move(labels)), class_count_(class_count) {
    LTE4G_REQUIRE(features_.rows() == n_, ValidationError,
                  "Graph: feature rows " + std::to_string(features_.rows()) + " != n " +
                      std::to_string(n_));
    LTE4G_REQUIRE(labels_.size() == n_, ValidationError, "Graph: label count != n");
    for (ClassId y : labels_)
      LTE4G_REQUIRE(y < class_count_, ValidationError,
                    "Graph: label " + std::to_string(y) + " outside [0," +
                        std::to_string(class_count_) + ")");
    for (auto& [u, v] : edges) {
      LTE4G_REQUIRE(u < n_ && v < n_, ValidationError,
                    "Graph: edge endpoint out of range (" + std::to_string(u) + "," +
                        std::to_string(v) + ")");
      if (u > v) std::swap(u, v);
    }
    std::erase_if(edges, [](const Edge& e) { return e.first == e.second; });
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    edges_ = std::move(edges);

    std::vector<std::size_t> deg(n_, 0);
    for (const auto& [u, v] : edges_) {
      ++deg[u];
      ++deg[v];
    }
    offsets_.assign(n_ + 1, 0);
    for (std::size_t i = 0; i < n_; ++i) offsets_[i + 1] = offsets_[i] + deg[i];
    adjacency_.resize(offsets_.back());
    std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
    for (const auto& [u, v] : edges_) {
      adjacency_[fill[u]++] = v;
      adjacency_[fill[v]++] = u;
    }
    for (std::size_t i = 0; i < n_; ++i)
      std::sort(adjacency_.begin() + static_cast<std::ptrdiff_t>(offsets_[i]),
                adjacency_.begin() + static_cast<std::ptrdiff_t>(offsets_[i + 1]));
  }

  std::size_t num_nodes() const noexcept { return n_; }
  std::size_t num_edges() const noexcept { return edges_.size(); }
  std::size_t num_features() const noexcept { return features_.cols(); }
  std::size_t class_count() const noexcept { return class_count_; }

  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const SparseMat& features() const noexcept { return features_; }
  const std::vector<ClassId>& labels() const noexcept { return labels_; }
  ClassId label(NodeId v) const { return labels_.at(v); }

  /// Sorted neighbour ids of v in the original adjacency (no self-loop).
  std::span<const NodeId> neighbors(NodeId v) const {
    LTE4G_REQUIRE(v < n_, ContractError, "Graph::neighbors: node out of range");
    return {adjacency_.data() + offsets_[v], offsets_[v + 1] - offsets_[v]};
  }

  /// Number of distinct neighbours, self-loop excluded.
  std::size_t degree(NodeId v) const {
    LTE4G_REQUIRE(v < n_, ContractError,
                  "degree: node " + std::to_string(v) + " out of range (n=" + std::to_string(n_) +
                      ")");
    return offsets_[v + 1] - offsets_[v];
  }

  /// Full-graph node count per class.
  std::vector<std::size_t> class_sizes() const {
    std::vector<std::size_t> s(class_count_, 0);
    for (ClassId y : labels_) ++s[y];
    return s;
  }

 private:
  std::size_t n_ = 0;
  std::vector<Edge> edges_;
  SparseMat features_;
  std::vector<ClassId> labels_;
  std::size_t class_count_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<NodeId> adjacency_;
};

/// The symmetric-normalised adjacency D^-1/2 (A + I) D^-1/2.
struct NormalizedAdjacency {
  SparseMat matrix;
};

inline NormalizedAdjacency normalize_adjacency(const Graph& g) {
  const std::size_t n = g.num_nodes();
  std::vector<double> dhat(n);
  for (NodeId i = 0; i < n; ++i) dhat[i] = static_cast<double>(g.degree(i) + 1);
  auto entry = [&dhat](NodeId i, NodeId j) { return 1.0 / std::sqrt(dhat[i] * dhat[j]); };
  std::vector<std::size_t> ptr(n + 1, 0);
  std::vector<std::size_t> cols;
  std::vector<double> vals;
  cols.reserve(2 * g.num_edges() + n);
  vals.reserve(2 * g.num_edges() + n);
  for (NodeId i = 0; i < n; ++i) {
    bool diag_done = false;
    for (NodeId j : g.neighbors(i)) {
      if (!diag_done && j > i) {
        cols.push_back(i);
        vals.push_back(entry(i, i));
        diag_done = true;
      }
      cols.push_back(j);
      vals.push_back(entry(i, j));
    }
    if (!diag_done) {
      cols.push_back(i);
      vals.push_back(entry(i, i));
    }
    ptr[i + 1] = cols.size();
  }
  return {SparseMat(n, n, std::move(ptr), std::move(cols), std::move(vals))};
}

/// Dense copy of one feature row.
inline std::vector<double> feature_row(const Graph& g, NodeId v) {
  std::vector<double> row(g.num_features(), 0.0);
  auto c = g.features().row_cols(v);
  auto x = g.features().row_values(v);
  for (std::size_t k = 0; k < c.size(); ++k) row[c[k]] = x[k];
  return row;
}

/// Cosine similarity of v's feature row against every node. Zero-norm rows score 0.
inline std::vector<double> feature_cosine_all(const Graph& g, NodeId v) {
  const SparseMat& x = g.features();
  const std::vector<double> q = feature_row(g, v);
  double qn = 0.0;
  for (double a : q) qn += a * a;
  qn = std::sqrt(qn);
  std::vector<double> sim(g.num_nodes(), 0.0);
  if (qn == 0.0) return sim;
  for (NodeId u = 0; u < g.num_nodes(); ++u) {
    auto c = x.row_cols(u);
    auto val = x.row_values(u);
    double dot = 0.0, un = 0.0;
    for (std::size_t k = 0; k < c.size(); ++k) {
      dot += val[k] * q[c[k]];
      un += val[k] * val[k];
    }
    if (un > 0.0) sim[u] = dot / (qn * std::sqrt(un));
  }
  return sim;
}

/// The k nodes other than v with highest feature cosine similarity, ties by lower id.
inline std::vector<NodeId> knn_by_feature(const Graph& g, NodeId v, std::size_t k) {
  LTE4G_REQUIRE(v < g.num_nodes(), ContractError, "knn_by_feature: node out of range");
  LTE4G_REQUIRE(k < g.num_nodes(), ContractError, "knn_by_feature: k must be < n");
  const std::vector<double> sim = feature_cosine_all(g, v);
  std::vector<NodeId> order;
  order.reserve(g.num_nodes() - 1);
  for (NodeId u = 0; u < g.num_nodes(); ++u)
    if (u != v) order.push_back(u);
  auto better = [&sim](NodeId a, NodeId b) { return sim[a] != sim[b] ? sim[a] > sim[b] : a < b; };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);
  order.resize(k);
  return order;
}

/// Stochastic block model with Gaussian features whose mean is shifted per class.
/// Nodes of class c occupy a contiguous id block; feature dimension defaults to 16.
inline Graph sbm_generate(std::uint64_t seed, std::span<const std::size_t> class_sizes, double p_in,
                          double p_out, double feature_shift, std::size_t feature_dim = 16) {
  LTE4G_REQUIRE(p_in >= 0.0 && p_in <= 1.0 && p_out >= 0.0 && p_out <= 1.0, ContractError,
                "sbm_generate: probabilities must lie in [0,1]");
  LTE4G_REQUIRE(feature_dim >= 1, ContractError, "sbm_generate: feature_dim must be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<ClassId> labels;
  for (ClassId c = 0; c < class_sizes.size(); ++c) labels.insert(labels.end(), class_sizes[c], c);
  const std::size_t n = labels.size();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Edge> edges;
  for (NodeId i = 0; i < n; ++i)
    for (NodeId j = i + 1; j < n; ++j)
      if (unif(rng) < (labels[i] == labels[j] ? p_in : p_out)) edges.emplace_back(i, j);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Triplet> feats;
  feats.reserve(n * feature_dim);
  for (NodeId i = 0; i < n; ++i)
    for (std::size_t f = 0; f < feature_dim; ++f) {
      double x = gauss(rng);
      if (f == labels[i] % feature_dim) x += feature_shift;
      feats.push_back({i, f, x});
    }
  return Graph(n, std::move(edges), SparseMat::from_triplets(n, feature_dim, std::move(feats)),
               std::move(labels), class_sizes.size());
}

}  // namespace lte4g
