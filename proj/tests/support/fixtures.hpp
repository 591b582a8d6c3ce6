#pragma once

// Shared toy instances for the unit and acceptance tests.

#include <algorithm>
#include <memory>
#include <random>
#include <vector>

#include "lte4g/training.hpp"
#include "support/oracles.hpp"

namespace fixture {

using namespace lte4g;

inline SplitManifest manifest_of(const Graph& g, std::vector<NodeId> train, std::vector<NodeId> val = {},
                                 std::vector<NodeId> test = {}) {
  SplitManifest m;
  m.train = std::move(train);
  m.val = std::move(val);
  m.test = std::move(test);
  m.train_counts.assign(g.class_count(), 0);
  for (NodeId v : m.train) ++m.train_counts[g.label(v)];
  return m;
}

/// A complete untrained model on a random toy graph, for gradient checks of the three
/// objectives. Every node is a training node.
struct GradInstance {
  Graph g;
  std::unique_ptr<TrainContext> ctx;
  SplitManifest m;
  SubsetPartition part;
  TrainConfig cfg;
  PretrainResult pre;
  ExpertSet experts;
  StudentSet students;

  GradInstance(const GradInstance&) = delete;
  GradInstance& operator=(const GradInstance&) = delete;

  GradInstance(std::uint64_t seed, bool finetune_encoder) {
    std::mt19937_64 rng(seed);
    const std::size_t n = 6 + rng() % 5;
    const std::size_t c = 2 + rng() % 2;
    g = oracle::random_toy_graph(rng, n, 3, c, 0.45);
    ctx = std::make_unique<TrainContext>(g);
    std::vector<NodeId> all(n);
    for (NodeId v = 0; v < n; ++v) all[v] = v;
    m = manifest_of(g, all);
    std::vector<std::size_t> deg;
    for (NodeId v = 0; v < n; ++v) deg.push_back(g.degree(v));
    std::nth_element(deg.begin(), deg.begin() + static_cast<std::ptrdiff_t>(n / 2), deg.end());
    cfg.hidden = 4;
    cfg.seed = seed;
    cfg.finetune_encoder = finetune_encoder;
    cfg.gamma = static_cast<double>(rng() % 3);
    part = make_subsets(m, g, 0.5, deg[n / 2]);
    pre.encoder = make_encoder(g.num_features(), cfg.hidden, seed);
    pre.og = make_head(HeadScope::og, all_classes(g), cfg.hidden, seed);
    pre.hpre = encode_value(pre.encoder, ctx->adj, g.features());
    pre.p_og = softmax_rows(head_logits_value(pre.og, ctx->adj, pre.hpre));
    const Encoder* base = finetune_encoder ? &pre.encoder : nullptr;
    for (Subset s : kAllSubsets) {
      TrainConfig c2 = cfg;
      c2.seed = seed + 1 + static_cast<std::size_t>(s);
      experts[s] = make_branch(scope_of(s), part.side_classes(side_of(s)), c2, base);
    }
    TrainConfig cs = cfg;
    cs.seed = seed + 11;
    students[Side::head] = make_branch(HeadScope::H, part.side_classes(Side::head), cs, base);
    students[Side::tail] = make_branch(HeadScope::T, part.side_classes(Side::tail), cs, base);
  }

  oracle::GradCheck check_origin() {
    const auto labels = pre.og.local_labels(g, m.train);
    const FocalConfig focal = FocalConfig::inverse_frequency(m.train_counts, cfg.gamma);
    Parameter* ps[] = {&pre.encoder.weight, &pre.og.w_gnn, &pre.og.w_mlp};
    return oracle::check_gradients(ps, [&](Tape& t) {
      return og_loss(t, *ctx, pre.encoder, pre.og, m.train, labels, OgLoss::focal, focal, {});
    });
  }

  /// Max over the four experts (non-empty subsets only).
  oracle::GradCheck check_experts() {
    oracle::GradCheck worst;
    for (Subset s : kAllSubsets) {
      if (part[s].empty()) continue;
      Branch& b = experts[s];
      const auto labels = b.head.local_labels(g, part[s]);
      auto params = b.parameters();
      const auto gc = oracle::check_gradients(params, [&](Tape& t) {
        return expert_loss(t, *ctx, b, part[s], labels, pre.hpre);
      });
      worst.checked += gc.checked;
      worst.skipped += gc.skipped;
      if (gc.max_rel >= worst.max_rel) {
        worst.max_rel = gc.max_rel;
        worst.worst = gc.worst;
      }
    }
    return worst;
  }

  oracle::GradCheck check_students(double beta) {
    const StudentObjective obj(*ctx, part, pre, experts, students, 1.0);
    auto params = students[Side::head].parameters();
    for (Parameter* p : students[Side::tail].parameters()) params.push_back(p);
    return oracle::check_gradients(params, [&](Tape& t) {
      StudentLosses L;
      return obj(t, students, beta, L);
    });
  }
};

/// Imbalanced, moderately separable SBM with enough structure for every subset to be
/// populated under p=0.6 and degree threshold 5.
inline Graph imbalanced_sbm(std::uint64_t seed, double shift = 1.2, std::size_t features = 16) {
  const std::vector<std::size_t> sizes{90, 80, 70, 50, 50};
  return sbm_generate(seed, sizes, 0.08, 0.004, shift, features);
}

inline SplitManifest imbalanced_manifest(const Graph& g, std::uint64_t seed) {
  ManualOptions opt;
  opt.val_per_class = 10;
  opt.test_per_class = 25;
  return apply_manual_imbalance(g, 2, 0.25, seed, opt);
}

inline TrainConfig small_config(std::uint64_t seed) {
  TrainConfig c;
  c.hidden = 16;
  c.max_epochs = 300;
  c.patience = 60;
  c.seed = seed;
  return c;
}

}  // namespace fixture
