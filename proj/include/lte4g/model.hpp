#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lte4g/adam.hpp"
#include "lte4g/graph.hpp"
#include "lte4g/tape.hpp"

namespace lte4g {

inline constexpr double kLogClamp = 1e-12;

enum class HeadScope { og, HH, HT, TH, TT, H, T };

inline const char* to_string(HeadScope s) {
  constexpr const char* names[] = {"og", "HH", "HT", "TH", "TT", "H", "T"};
  return names[static_cast<std::size_t>(s)];
}

/// Derives an independent RNG stream per (seed, tag) so initialisation does not depend on
/// the order in which components are constructed.
inline std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
  return std::mt19937_64(seq);
}

/// One GCN layer: H = relu(A_hat X W).
struct Encoder {
  Parameter weight;
};

inline Encoder make_encoder(std::size_t num_features, std::size_t hidden, std::uint64_t seed) {
  auto rng = stream_rng(seed, 0xE0C0DE);
  return Encoder{Parameter("encoder.W", glorot_uniform(num_features, hidden, rng))};
}

/// GCN + linear classifier scoring the classes in `class_set` (sorted global ids);
/// logits column j belongs to class_set[j].
struct Head {
  HeadScope scope = HeadScope::og;
  std::vector<ClassId> class_set;
  Parameter w_gnn;
  Parameter w_mlp;

  std::size_t num_classes() const noexcept { return class_set.size(); }

  std::size_t local_index(ClassId c) const {
    auto it = std::lower_bound(class_set.begin(), class_set.end(), c);
    LTE4G_REQUIRE(it != class_set.end() && *it == c, ContractError,
                  std::string("head ") + to_string(scope) + ": class " + std::to_string(c) +
                      " is not in its class set");
    return static_cast<std::size_t>(it - class_set.begin());
  }

  std::vector<std::size_t> local_labels(const Graph& g, std::span<const NodeId> nodes) const {
    std::vector<std::size_t> out;
    out.reserve(nodes.size());
    for (NodeId v : nodes) out.push_back(local_index(g.label(v)));
    return out;
  }

  std::vector<Parameter*> parameters() { return {&w_gnn, &w_mlp}; }
  std::vector<const Parameter*> parameters() const { return {&w_gnn, &w_mlp}; }
};

inline Head make_head(HeadScope scope, std::vector<ClassId> class_set, std::size_t hidden,
                      std::uint64_t seed) {
  LTE4G_REQUIRE(!class_set.empty(), ContractError, "make_head: empty class set");
  std::sort(class_set.begin(), class_set.end());
  auto rng = stream_rng(seed, 0x4EAD00 + static_cast<std::uint64_t>(scope));
  const std::string base = std::string("head.") + to_string(scope);
  Head h;
  h.scope = scope;
  h.w_gnn = Parameter(base + ".W_gnn", glorot_uniform(hidden, hidden, rng));
  h.w_mlp = Parameter(base + ".W_mlp", glorot_uniform(hidden, class_set.size(), rng));
  h.class_set = std::move(class_set);
  return h;
}

/// Puts a parameter on the tape, as a trainable leaf or as a constant.
inline Var bind(Tape& t, Parameter& p, bool trainable) {
  return trainable ? t.parameter(p) : t.constant(p.value);
}

inline Var encode(Tape& t, Encoder& enc, const NormalizedAdjacency& adj, const SparseMat& x,
                  bool trainable = true) {
  LTE4G_REQUIRE(x.cols() == enc.weight.value.rows(), ContractError,
                "encode: feature dim " + std::to_string(x.cols()) + " != encoder input " +
                    std::to_string(enc.weight.value.rows()));
  LTE4G_REQUIRE(adj.matrix.cols() == x.rows(), ContractError, "encode: adjacency/feature row mismatch");
  Var w = bind(t, enc.weight, trainable);
  return t.relu(t.spmm(adj.matrix, t.spmm(x, w)));
}

/// Forward pass without gradients.
inline DenseMat encode_value(Encoder& enc, const NormalizedAdjacency& adj, const SparseMat& x) {
  Tape t;
  return t.value(encode(t, enc, adj, x, false));
}

/// Full-graph logits Z = relu(A_hat H W_gnn) W_mlp (message passing needs every node).
inline Var head_logits(Tape& t, Head& h, const NormalizedAdjacency& adj, Var hpre,
                       bool trainable = true) {
  Var wg = bind(t, h.w_gnn, trainable);
  Var wm = bind(t, h.w_mlp, trainable);
  return t.matmul(t.relu(t.spmm(adj.matrix, t.matmul(hpre, wg))), wm);
}

struct HeadOutput {
  Var logits;  // rows for the requested nodes
  Var probs;
};

inline HeadOutput head_forward(Tape& t, Head& h, const NormalizedAdjacency& adj, Var hpre,
                               std::span<const NodeId> nodes, bool trainable = true) {
  for (NodeId v : nodes)
    LTE4G_REQUIRE(v < adj.matrix.rows(), ContractError, "head_forward: node out of range");
  Var z = t.select_rows(head_logits(t, h, adj, hpre, trainable), nodes);
  return {z, t.row_softmax(z)};
}

/// Full-graph logits as a plain matrix.
inline DenseMat head_logits_value(Head& h, const NormalizedAdjacency& adj, const DenseMat& hpre) {
  Tape t;
  return t.value(head_logits(t, h, adj, t.constant(hpre), false));
}

inline DenseMat softmax_rows(const DenseMat& z, double temperature = 1.0) {
  Tape t;
  Var x = t.constant(z);
  if (temperature != 1.0) x = t.scale(x, 1.0 / temperature);
  return t.value(t.row_softmax(x));
}

// ---- losses ---------------------------------------------------------------

struct FocalConfig {
  double gamma = 0.0;
  std::vector<double> alpha;  // per class (local to the scored class set)

  static FocalConfig uniform(std::size_t classes, double a, double gamma) {
    LTE4G_REQUIRE(a > 0.0, ContractError, "FocalConfig: alpha must be positive");
    return {gamma, std::vector<double>(classes, a)};
  }

  /// alpha_c proportional to 1 / train_count_c, normalised to mean 1.
  static FocalConfig inverse_frequency(std::span<const std::size_t> counts, double gamma) {
    std::vector<double> a(counts.size());
    double s = 0.0;
    for (std::size_t c = 0; c < counts.size(); ++c) s += (a[c] = 1.0 / static_cast<double>(std::max<std::size_t>(counts[c], 1)));
    for (double& v : a) v *= static_cast<double>(counts.size()) / s;
    return {gamma, std::move(a)};
  }
};

enum class FocalTerms { all_classes, target_only };

/// Summed-over-classes alpha-balanced focal loss, averaged over rows:
/// each class c contributes -alpha_c (1 - p_t)^gamma log p_t with p_t = P[c] for the
/// label and 1 - P[c] otherwise.
inline Var focal_loss(Tape& t, Var probs, std::span<const std::size_t> labels,
                      const FocalConfig& cfg, FocalTerms terms = FocalTerms::all_classes) {
  const DenseMat& p = t.value(probs);
  LTE4G_REQUIRE(labels.size() == p.rows(), ContractError, "focal_loss: label count != rows");
  LTE4G_REQUIRE(cfg.alpha.size() == p.cols(), ContractError, "focal_loss: alpha size != classes");
  LTE4G_REQUIRE(cfg.gamma >= 0.0, ContractError, "focal_loss: gamma must be non-negative");
  const std::size_t n = p.rows();
  if (n == 0) return t.constant(DenseMat(1, 1, 0.0));
  const double g = cfg.gamma;
  DenseMat dp(p.rows(), p.cols());  // d loss / d P
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    LTE4G_REQUIRE(labels[i] < p.cols(), ContractError, "focal_loss: label out of range");
    for (std::size_t c = 0; c < p.cols(); ++c) {
      const bool target = c == labels[i];
      if (!target && terms == FocalTerms::target_only) continue;
      const double pt = target ? p(i, c) : 1.0 - p(i, c);
      const double q = 1.0 - pt;
      const double a = cfg.alpha[c];
      const bool clamped = pt < kLogClamp;
      const double logp = std::log(clamped ? kLogClamp : pt);
      const double mod = g == 0.0 ? 1.0 : std::pow(q, g);
      total += -a * mod * logp;
      double dpt = 0.0;
      if (g != 0.0 && q > 0.0) dpt += a * g * std::pow(q, g - 1.0) * logp;
      if (!clamped) dpt += -a * mod / pt;
      dp(i, c) = (target ? dpt : -dpt) / static_cast<double>(n);
    }
  }
  return t.record(DenseMat(1, 1, total / static_cast<double>(n)), {probs},
                  [probs, dp = std::move(dp)](Tape& tp, Var, const DenseMat& go) {
                    DenseMat gx = dp;
                    for (double& v : gx.values()) v *= go(0, 0);
                    tp.accumulate(probs, gx);
                  });
}

/// Mean over rows of -w[label] log P[label]. Empty weights mean all ones.
inline Var ce_loss(Tape& t, Var probs, std::span<const std::size_t> labels,
                   std::span<const double> class_weights = {}) {
  const DenseMat& p = t.value(probs);
  LTE4G_REQUIRE(labels.size() == p.rows(), ContractError, "ce_loss: label count != rows");
  LTE4G_REQUIRE(class_weights.empty() || class_weights.size() == p.cols(), ContractError,
                "ce_loss: weight vector size != classes");
  const std::size_t n = p.rows();
  if (n == 0) return t.constant(DenseMat(1, 1, 0.0));
  DenseMat dp(p.rows(), p.cols());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = labels[i];
    LTE4G_REQUIRE(y < p.cols(), ContractError,
                  "ce_loss: label " + std::to_string(y) + " outside the head's class set");
    const double w = class_weights.empty() ? 1.0 : class_weights[y];
    const double py = p(i, y);
    if (py < kLogClamp) {
      total += -w * std::log(kLogClamp);
    } else {
      total += -w * std::log(py);
      dp(i, y) = -w / py / static_cast<double>(n);
    }
  }
  return t.record(DenseMat(1, 1, total / static_cast<double>(n)), {probs},
                  [probs, dp = std::move(dp)](Tape& tp, Var, const DenseMat& go) {
                    DenseMat gx = dp;
                    for (double& v : gx.values()) v *= go(0, 0);
                    tp.accumulate(probs, gx);
                  });
}

/// Mean over rows of KL(expert || student); the expert side is a constant.
inline Var kd_loss(Tape& t, const DenseMat& expert, Var student) {
  const DenseMat& s = t.value(student);
  LTE4G_REQUIRE(expert.cols() == s.cols(), ContractError,
                "kd_loss: expert has " + std::to_string(expert.cols()) + " classes, student " +
                    std::to_string(s.cols()));
  LTE4G_REQUIRE(expert.rows() == s.rows(), ContractError, "kd_loss: row count mismatch");
  const std::size_t n = s.rows();
  if (n == 0) return t.constant(DenseMat(1, 1, 0.0));
  DenseMat ds(s.rows(), s.cols());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < s.cols(); ++c) {
      const double e = expert(i, c);
      if (e <= 0.0) continue;
      const double sc = s(i, c);
      const double log_e = std::log(std::max(e, kLogClamp));
      const double log_s = std::log(std::max(sc, kLogClamp));
      total += e * (log_e - log_s);
      if (sc >= kLogClamp) ds(i, c) = -e / sc / static_cast<double>(n);
    }
  return t.record(DenseMat(1, 1, total / static_cast<double>(n)), {student},
                  [student, ds = std::move(ds)](Tape& tp, Var, const DenseMat& go) {
                    DenseMat gx = ds;
                    for (double& v : gx.values()) v *= go(0, 0);
                    tp.accumulate(student, gx);
                  });
}

}  // namespace lte4g
