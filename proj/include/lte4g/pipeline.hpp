#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lte4g/checkpoint.hpp"
#include "lte4g/inference.hpp"
#include "lte4g/partition.hpp"
#include "lte4g/training.hpp"

namespace lte4g {

enum class Method { lte4g, origin, reweight, oversample };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::lte4g: return "lte4g";
    case Method::origin: return "origin";
    case Method::reweight: return "reweight";
    case Method::oversample: return "oversample";
  }
  return "?";
}

inline Method method_from_string(const std::string& s) {
  if (s == "lte4g") return Method::lte4g;
  if (s == "origin") return Method::origin;
  if (s == "reweight") return Method::reweight;
  if (s == "oversample") return Method::oversample;
  throw ConfigError("unknown method '" + s + "' (expected lte4g|origin|reweight|oversample)");
}

inline BaselineKind baseline_kind(Method m) {
  switch (m) {
    case Method::origin: return BaselineKind::origin;
    case Method::reweight: return BaselineKind::reweight;
    case Method::oversample: return BaselineKind::oversample;
    case Method::lte4g: break;
  }
  throw ContractError("baseline_kind: lte4g is not a baseline");
}

/// Everything the LTE4G pipeline learns. Prototypes and H_pre are derived state and are
/// recomputed on reload.
struct ModelBundle {
  PretrainResult pre;
  SubsetPartition partition;
  ExpertSet experts;
  std::optional<StudentSet> students;
  PrototypeTable prototypes;

  std::vector<const Parameter*> parameters() const {
    std::vector<const Parameter*> p{&pre.encoder.weight, &pre.og.w_gnn, &pre.og.w_mlp};
    for (const Parameter* q : experts.parameters()) p.push_back(q);
    if (students)
      for (const auto& b : students->students)
        for (const Parameter* q : b.parameters()) p.push_back(q);
    return p;
  }
  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> p{&pre.encoder.weight, &pre.og.w_gnn, &pre.og.w_mlp};
    for (auto& b : experts.experts)
      for (Parameter* q : b.parameters()) p.push_back(q);
    if (students)
      for (auto& b : students->students)
        for (Parameter* q : b.parameters()) p.push_back(q);
    return p;
  }
};

inline ModelBundle fit_lte4g(const Graph& g, const SplitManifest& m, const TrainConfig& cfg,
                             EventLog* log = nullptr) {
  cfg.validate();
  TrainContext ctx(g);
  ModelBundle b;
  b.pre = pretrain(ctx, m, cfg, log);
  b.partition = make_subsets(m, g, cfg.p, cfg.degree_threshold, cfg.split_mode, cfg.seed);
  b.experts = train_experts(ctx, m, b.partition, b.pre, cfg, log);
  b.prototypes = build_prototypes(m, g, b.pre.hpre, b.pre.p_og, cfg.expansion);
  if (cfg.use_kd) b.students = train_students(ctx, m, b.partition, b.pre, b.experts, b.prototypes, cfg, log);
  return b;
}

/// Rebuilds a bundle for `partition` with parameters from a checkpoint, then recomputes
/// H_pre, P_og and the prototypes.
inline ModelBundle restore_bundle(const Graph& g, const SplitManifest& m, const SubsetPartition& partition,
                                  const TrainConfig& cfg, const Checkpoint& ck) {
  ModelBundle b;
  b.pre.encoder = make_encoder(g.num_features(), cfg.hidden, cfg.seed);
  b.pre.og = make_head(HeadScope::og, all_classes(g), cfg.hidden, cfg.seed);
  b.partition = partition;
  const Encoder* base = cfg.finetune_encoder ? &b.pre.encoder : nullptr;
  for (Subset s : kAllSubsets)
    b.experts[s] = make_branch(scope_of(s), partition.side_classes(side_of(s)), cfg, base);
  if (cfg.use_kd) {
    b.students.emplace();
    (*b.students)[Side::head] = make_branch(HeadScope::H, partition.side_classes(Side::head), cfg, base);
    (*b.students)[Side::tail] = make_branch(HeadScope::T, partition.side_classes(Side::tail), cfg, base);
  }
  restore(ck, b.parameters());
  TrainContext ctx(g);
  b.pre.hpre = encode_value(b.pre.encoder, ctx.adj, g.features());
  b.pre.p_og = softmax_rows(head_logits_value(b.pre.og, ctx.adj, b.pre.hpre));
  b.prototypes = build_prototypes(m, g, b.pre.hpre, b.pre.p_og, cfg.expansion);
  return b;
}

/// Routed predictions. With students the routed student scores the node; without them the
/// expert of the routed class side and the node's own degree side does.
inline std::vector<PredictionRow> predict_bundle(ModelBundle& b, const Graph& g,
                                                 std::span<const NodeId> nodes) {
  TrainContext ctx(g);
  const auto& part = b.partition;
  if (b.students) {
    auto& st = *b.students;
    const DenseMat zh = branch_logits_value(st[Side::head], ctx.adj, g.features(), b.pre.hpre);
    const DenseMat zt = branch_logits_value(st[Side::tail], ctx.adj, g.features(), b.pre.hpre);
    return predict(nodes, g, b.prototypes, b.pre.hpre, part.head_classes, zh, st[Side::head].head.class_set,
                   zt, st[Side::tail].head.class_set);
  }
  std::array<DenseMat, 4> z;
  for (Subset s : kAllSubsets)
    z[static_cast<std::size_t>(s)] = branch_logits_value(b.experts[s], ctx.adj, g.features(), b.pre.hpre);
  std::vector<PredictionRow> out;
  for (NodeId v : nodes) {
    PredictionRow row;
    row.node = v;
    row.route = route_node(v, b.prototypes, b.pre.hpre, part.head_classes);
    const bool head_deg = g.degree(v) > part.degree_threshold;
    const Subset s = row.route.student == Side::head ? (head_deg ? Subset::HH : Subset::HT)
                                                     : (head_deg ? Subset::TH : Subset::TT);
    row.predicted = predict_from_logits(z[static_cast<std::size_t>(s)].row(v), b.experts[s].head.class_set);
    row.truth = g.label(v);
    out.push_back(row);
  }
  return out;
}

inline std::vector<PredictionRow> predict_baseline(const DenseMat& logits, const Graph& g,
                                                   std::span<const NodeId> nodes) {
  const auto classes = all_classes(g);
  std::vector<PredictionRow> out;
  for (NodeId v : nodes) {
    PredictionRow row;
    row.node = v;
    row.routed = false;
    row.predicted = predict_from_logits(logits.row(v), classes);
    row.truth = g.label(v);
    out.push_back(row);
  }
  return out;
}

/// Plain logits of a baseline restored from a checkpoint.
inline DenseMat restore_baseline_logits(const Graph& g, const SplitManifest& m, const TrainConfig& cfg,
                                        Method method, const Checkpoint& ck) {
  auto run = [&](const Graph& graph) {
    Encoder enc = make_encoder(graph.num_features(), cfg.hidden, cfg.seed);
    Head og = make_head(HeadScope::og, all_classes(graph), cfg.hidden, cfg.seed);
    std::vector<Parameter*> params{&enc.weight, &og.w_gnn, &og.w_mlp};
    restore(ck, params);
    const NormalizedAdjacency adj = normalize_adjacency(graph);
    return head_logits_value(og, adj, encode_value(enc, adj, graph.features()));
  };
  if (method != Method::oversample) return run(g);
  const Oversampled o = oversample_minority(g, m, minority_classes_for(m, g, cfg.p));
  const DenseMat full = run(o.graph);
  std::vector<std::size_t> idx(g.num_nodes());
  for (NodeId v = 0; v < idx.size(); ++v) idx[v] = v;
  return gather_rows(full, idx);
}

}  // namespace lte4g
