#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lte4g/dense.hpp"
#include "lte4g/error.hpp"
#include "lte4g/graph.hpp"
#include "lte4g/imbalance.hpp"
#include "lte4g/partition.hpp"

namespace lte4g {

/// Candidate sources after the class's own train nodes: graph neighbours of those nodes,
/// their top-k feature-similar nodes, and any confident node in the graph.
enum class CandidateSource : char { neighbors = 'n', similar = 's', confident = 'y' };
enum class BudgetRule { mean, max };
enum class ConfidenceRule { argmax, threshold };

struct ExpansionConfig {
  std::vector<CandidateSource> order{CandidateSource::neighbors, CandidateSource::similar};
  BudgetRule budget = BudgetRule::mean;
  ConfidenceRule confidence = ConfidenceRule::argmax;
  double tau = 0.5;
  std::size_t k = 10;

  /// "v->n->s->y" style; the leading v is implied and may be omitted. "v" alone disables expansion.
  static std::vector<CandidateSource> parse_order(const std::string& s) {
    std::vector<CandidateSource> out;
    std::size_t pos = 0;
    bool first = true;
    while (pos <= s.size()) {
      auto end = s.find("->", pos);
      if (end == std::string::npos) end = s.size();
      const std::string tok = s.substr(pos, end - pos);
      pos = end + 2;
      if (tok == "v" && first) {
        first = false;
        continue;
      }
      first = false;
      if (tok == "n") out.push_back(CandidateSource::neighbors);
      else if (tok == "s") out.push_back(CandidateSource::similar);
      else if (tok == "y") out.push_back(CandidateSource::confident);
      else throw ConfigError("candidate order: unknown step '" + tok + "' in '" + s + "'");
      if (std::count(out.begin(), out.end(), out.back()) > 1)
        throw ConfigError("candidate order: step '" + tok + "' repeated in '" + s + "'");
    }
    return out;
  }

  std::string order_string() const {
    std::string s = "v";
    for (auto c : order) (s += "->") += static_cast<char>(c);
    return s;
  }
};

/// Per-class candidate budget from the training counts.
inline std::size_t candidate_budget(const SplitManifest& m, BudgetRule rule) {
  std::size_t mx = 0, total = 0, present = 0;
  for (auto c : m.train_counts) {
    mx = std::max(mx, c);
    total += c;
    if (c > 0) ++present;
  }
  if (rule == BudgetRule::max) return mx;
  if (present == 0) return 0;
  return static_cast<std::size_t>(std::llround(static_cast<double>(total) / static_cast<double>(present)));
}

namespace inference_detail {

inline ClassId argmax_row(const DenseMat& p, NodeId v) {
  auto r = p.row(v);
  return static_cast<ClassId>(std::max_element(r.begin(), r.end()) - r.begin());
}

}  // namespace inference_detail

/// Candidate set of one class: its train nodes, then confident nodes from each source in
/// `cfg.order`, each source ranked by descending P_og[c] (ties to lower id), until the
/// budget is met. Train nodes of other classes are never borrowed.
inline std::vector<NodeId> expand_candidates(ClassId c, const SplitManifest& m, const Graph& g,
                                             const DenseMat& p_og, const ExpansionConfig& cfg) {
  LTE4G_REQUIRE(p_og.rows() == g.num_nodes() && p_og.cols() == g.class_count(), ContractError,
                "expand_candidates: P_og must be n x |C|, got " + p_og.shape_str());
  std::vector<NodeId> out;
  std::vector<char> taken(g.num_nodes(), 0), in_train(g.num_nodes(), 0);
  for (NodeId v : m.train) {
    in_train[v] = 1;
    if (g.label(v) == c) {
      out.push_back(v);
      taken[v] = 1;
    }
  }
  const std::size_t budget = candidate_budget(m, cfg.budget);
  const std::vector<NodeId> seeds = out;

  auto confident = [&](NodeId u) {
    if (cfg.confidence == ConfidenceRule::threshold) return p_og(u, c) >= cfg.tau;
    return inference_detail::argmax_row(p_og, u) == c;
  };
  auto admit = [&](std::vector<NodeId> pool) {
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
    std::erase_if(pool, [&](NodeId u) { return taken[u] || in_train[u] || !confident(u); });
    std::stable_sort(pool.begin(), pool.end(),
                     [&](NodeId a, NodeId b) { return p_og(a, c) > p_og(b, c); });
    for (NodeId u : pool) {
      if (out.size() >= budget) return;
      out.push_back(u);
      taken[u] = 1;
    }
  };

  for (CandidateSource src : cfg.order) {
    if (out.size() >= budget) break;
    std::vector<NodeId> pool;
    switch (src) {
      case CandidateSource::neighbors:
        for (NodeId v : seeds)
          for (NodeId u : g.neighbors(v)) pool.push_back(u);
        break;
      case CandidateSource::similar: {
        const std::size_t k = std::min(cfg.k, g.num_nodes() - 1);
        for (NodeId v : seeds)
          for (NodeId u : knn_by_feature(g, v, k)) pool.push_back(u);
        break;
      }
      case CandidateSource::confident:
        pool.resize(g.num_nodes());
        for (NodeId u = 0; u < g.num_nodes(); ++u) pool[u] = u;
        break;
    }
    admit(std::move(pool));
  }
  return out;
}

struct PrototypeTable {
  DenseMat prototypes;                          // |C| x D, row c is class c
  std::vector<std::vector<NodeId>> candidates;  // per class
  std::string mode;                             // expansion descriptor
};

inline PrototypeTable compute_prototypes(const DenseMat& hpre,
                                         std::vector<std::vector<NodeId>> candidates) {
  PrototypeTable t;
  t.prototypes = DenseMat(candidates.size(), hpre.cols());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    LTE4G_REQUIRE(!candidates[c].empty(), ContractError,
                  "compute_prototypes: class " + std::to_string(c) + " has no candidate nodes");
    auto row = t.prototypes.row(c);
    for (NodeId v : candidates[c]) {
      LTE4G_REQUIRE(v < hpre.rows(), ContractError, "compute_prototypes: node out of range");
      auto h = hpre.row(v);
      for (std::size_t j = 0; j < row.size(); ++j) row[j] += h[j];
    }
    const double inv = 1.0 / static_cast<double>(candidates[c].size());
    for (double& x : row) x *= inv;
  }
  t.candidates = std::move(candidates);
  return t;
}

inline PrototypeTable build_prototypes(const SplitManifest& m, const Graph& g, const DenseMat& hpre,
                                       const DenseMat& p_og, const ExpansionConfig& cfg) {
  std::vector<std::vector<NodeId>> cand(g.class_count());
  for (ClassId c = 0; c < g.class_count(); ++c) cand[c] = expand_candidates(c, m, g, p_og, cfg);
  PrototypeTable t = compute_prototypes(hpre, std::move(cand));
  t.mode = cfg.order_string() + (cfg.budget == BudgetRule::mean ? ";budget=mean" : ";budget=max") +
           (cfg.confidence == ConfidenceRule::argmax ? ";conf=argmax"
                                                     : ";conf=tau:" + std::to_string(cfg.tau)) +
           ";k=" + std::to_string(cfg.k);
  return t;
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

struct Route {
  Side student = Side::head;
  ClassId c_star = 0;
  bool zero_norm = false;
};

/// Nearest prototype by cosine (ties to the lower class id); head-class winners go to the
/// head student.
inline Route route_node(NodeId v, const PrototypeTable& table, const DenseMat& hpre,
                        std::span<const ClassId> head_classes) {
  LTE4G_REQUIRE(v < hpre.rows(), ContractError, "route_node: node out of range");
  LTE4G_REQUIRE(table.prototypes.cols() == hpre.cols(), ContractError,
                "route_node: prototype width != embedding width");
  auto h = hpre.row(v);
  Route r;
  r.zero_norm = std::all_of(h.begin(), h.end(), [](double x) { return x == 0.0; });
  double best = -2.0;
  for (ClassId c = 0; c < table.prototypes.rows(); ++c) {
    const double s = cosine(table.prototypes.row(c), h);
    if (s > best) {
      best = s;
      r.c_star = c;
    }
  }
  const bool head = std::find(head_classes.begin(), head_classes.end(), r.c_star) != head_classes.end();
  r.student = head ? Side::head : Side::tail;
  return r;
}

/// Argmax over one student logit row, mapped to the global class id.
inline ClassId predict_from_logits(std::span<const double> logits, std::span<const ClassId> class_set) {
  LTE4G_REQUIRE(logits.size() == class_set.size() && !logits.empty(), ContractError,
                "predict: logit row width != student class count");
  const auto j = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  return class_set[j];
}

struct PredictionRow {
  NodeId node = 0;
  Route route;
  ClassId predicted = 0;
  ClassId truth = 0;
  bool routed = true;  // false for single-model baselines
};

/// Routes every node in `nodes` and reads the prediction off the routed student's
/// precomputed full-graph logits.
inline std::vector<PredictionRow> predict(std::span<const NodeId> nodes, const Graph& g,
                                          const PrototypeTable& table, const DenseMat& hpre,
                                          std::span<const ClassId> head_classes,
                                          const DenseMat& head_logits, std::span<const ClassId> head_set,
                                          const DenseMat& tail_logits, std::span<const ClassId> tail_set) {
  std::vector<PredictionRow> out;
  out.reserve(nodes.size());
  for (NodeId v : nodes) {
    PredictionRow row;
    row.node = v;
    row.route = route_node(v, table, hpre, head_classes);
    row.predicted = row.route.student == Side::head ? predict_from_logits(head_logits.row(v), head_set)
                                                    : predict_from_logits(tail_logits.row(v), tail_set);
    row.truth = g.label(v);
    out.push_back(row);
  }
  return out;
}

/// Fraction of rows whose routed side matches the side of the true class.
inline double routing_side_accuracy(std::span<const PredictionRow> rows,
                                    std::span<const ClassId> head_classes) {
  if (rows.empty()) return 0.0;
  std::size_t ok = 0;
  for (const auto& r : rows) {
    LTE4G_REQUIRE(r.routed, ContractError, "routing_side_accuracy: row was not routed");
    const bool truth_head =
        std::find(head_classes.begin(), head_classes.end(), r.truth) != head_classes.end();
    if (truth_head == (r.route.student == Side::head)) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(rows.size());
}

inline void write_predictions_tsv(std::ostream& os, std::span<const PredictionRow> rows) {
  os << "node_id\trouted_student\tc_star\tpredicted_class\ttrue_class\n";
  for (const auto& r : rows) {
    os << r.node << '\t';
    if (r.routed) os << (r.route.student == Side::head ? 'H' : 'T') << '\t' << r.route.c_star;
    else os << "-\t-";
    os << '\t' << r.predicted << '\t' << r.truth << '\n';
  }
}

inline nlohmann::ordered_json to_json(const PrototypeTable& t) {
  nlohmann::ordered_json j;
  j["mode"] = t.mode;
  j["candidates"] = t.candidates;
  std::vector<std::vector<double>> rows;
  for (std::size_t c = 0; c < t.prototypes.rows(); ++c) {
    auto r = t.prototypes.row(c);
    rows.emplace_back(r.begin(), r.end());
  }
  j["prototypes"] = rows;
  return j;
}

}  // namespace lte4g
