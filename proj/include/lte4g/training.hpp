#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lte4g/adam.hpp"
#include "lte4g/error.hpp"
#include "lte4g/graph.hpp"
#include "lte4g/imbalance.hpp"
#include "lte4g/inference.hpp"
#include "lte4g/metrics.hpp"
#include "lte4g/model.hpp"
#include "lte4g/partition.hpp"

namespace lte4g {

enum class SchedulerKind { paper, linear, cos2E };
enum class AlphaMode { uniform, invfreq };

inline const char* to_string(SchedulerKind k) {
  switch (k) {
    case SchedulerKind::paper: return "paper";
    case SchedulerKind::linear: return "linear";
    case SchedulerKind::cos2E: return "cos2E";
  }
  return "?";
}

inline SchedulerKind scheduler_from_string(const std::string& s) {
  if (s == "paper") return SchedulerKind::paper;
  if (s == "linear") return SchedulerKind::linear;
  if (s == "cos2E") return SchedulerKind::cos2E;
  throw ConfigError("unknown scheduler '" + s + "' (expected paper|linear|cos2E)");
}

/// Distillation weight on the head-degree expert at student epoch e of E.
/// paper: cos(e*pi/E^2); linear: 1 - e/E; cos2E: cos(e*pi/(2E)).
inline double beta_schedule(std::size_t e, std::size_t E, SchedulerKind kind = SchedulerKind::paper) {
  LTE4G_REQUIRE(E >= 1, ContractError, "beta_schedule: E must be >= 1");
  LTE4G_REQUIRE(e <= E, ContractError,
                "beta_schedule: epoch " + std::to_string(e) + " beyond E=" + std::to_string(E));
  const double de = static_cast<double>(e), dE = static_cast<double>(E);
  switch (kind) {
    case SchedulerKind::paper: return std::cos(de * std::numbers::pi / (dE * dE));
    case SchedulerKind::linear: return 1.0 - de / dE;
    case SchedulerKind::cos2E: return std::cos(de * std::numbers::pi / (2.0 * dE));
  }
  return 1.0;
}

struct TrainConfig {
  double lr = 0.01;
  double weight_decay = 5e-4;
  std::size_t hidden = 64;
  std::size_t max_epochs = 10000;
  std::size_t patience = 100;
  std::size_t student_epochs = 0;  // E of the scheduler; 0 means max_epochs
  std::uint64_t seed = 0;
  double p = 0.6;
  std::size_t degree_threshold = 5;
  double gamma = 1.0;
  AlphaMode alpha_mode = AlphaMode::invfreq;
  double alpha = 1.0;
  SchedulerKind scheduler = SchedulerKind::paper;
  double kd_temperature = 1.0;
  bool use_kd = true;  // false: skip the students and predict with the routed expert
  bool finetune_encoder = false;
  SplitMode split_mode = SplitMode::balanced;
  ExpansionConfig expansion;

  void validate() const {
    LTE4G_REQUIRE(max_epochs >= 1, ConfigError, "max_epochs must be >= 1");
    LTE4G_REQUIRE(patience >= 1, ConfigError, "patience must be >= 1");
    LTE4G_REQUIRE(hidden >= 1, ConfigError, "hidden must be >= 1");
    LTE4G_REQUIRE(lr > 0.0 && std::isfinite(lr), ConfigError, "lr must be positive");
    LTE4G_REQUIRE(weight_decay >= 0.0, ConfigError, "weight_decay must be >= 0");
    LTE4G_REQUIRE(p > 0.0 && p < 1.0, ConfigError, "p must lie in (0,1)");
    LTE4G_REQUIRE(gamma >= 0.0, ConfigError, "gamma must be >= 0");
    LTE4G_REQUIRE(alpha > 0.0, ConfigError, "alpha must be positive");
    LTE4G_REQUIRE(kd_temperature > 0.0, ConfigError, "kd_temperature must be positive");
    LTE4G_REQUIRE(expansion.k >= 1, ConfigError, "candidate k must be >= 1");
  }

  std::size_t scheduler_horizon() const { return student_epochs == 0 ? max_epochs : student_epochs; }

  AdamConfig adam() const {
    AdamConfig a;
    a.lr = lr;
    a.weight_decay = weight_decay;
    return a;
  }
};

/// Collects per-epoch JSON events and optionally streams them as JSONL.
struct EventLog {
  std::ostream* sink = nullptr;
  std::vector<nlohmann::ordered_json> events;

  void emit(nlohmann::ordered_json e) {
    if (sink) *sink << e.dump() << '\n';
    events.push_back(std::move(e));
  }
};

/// A head plus, when the encoder is finetuned, its private copy of the encoder.
struct Branch {
  Head head;
  std::optional<Encoder> encoder;

  std::vector<Parameter*> parameters() {
    auto p = head.parameters();
    if (encoder) p.push_back(&encoder->weight);
    return p;
  }
  std::vector<const Parameter*> parameters() const {
    auto p = head.parameters();
    if (encoder) p.push_back(&encoder->weight);
    return p;
  }
};

inline Var branch_logits(Tape& t, Branch& b, const NormalizedAdjacency& adj, const SparseMat& x,
                         const DenseMat& hpre, bool trainable) {
  Var h = b.encoder ? encode(t, *b.encoder, adj, x, trainable) : t.constant(hpre);
  return head_logits(t, b.head, adj, h, trainable);
}

inline DenseMat branch_logits_value(Branch& b, const NormalizedAdjacency& adj, const SparseMat& x,
                                    const DenseMat& hpre) {
  Tape t;
  return t.value(branch_logits(t, b, adj, x, hpre, false));
}

/// Argmax of each requested logit row mapped through the head's class set.
inline std::vector<ClassId> predict_rows(const DenseMat& logits, std::span<const NodeId> nodes,
                                         std::span<const ClassId> class_set) {
  std::vector<ClassId> out;
  out.reserve(nodes.size());
  for (NodeId v : nodes) out.push_back(predict_from_logits(logits.row(v), class_set));
  return out;
}

inline double macro_f1_of(std::span<const ClassId> preds, std::span<const NodeId> nodes, const Graph& g) {
  std::vector<std::size_t> labels;
  labels.reserve(nodes.size());
  for (NodeId v : nodes) labels.push_back(g.label(v));
  return evaluate(preds, labels, g.class_count()).macro_f1;
}

struct StageResult {
  std::string stage;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_val = -1.0;
};

/// Adam with early stopping on a validation score (higher is better). `step` records the
/// loss on a fresh tape and may fill extra loss terms for the log; `validate` scores the
/// current parameters. The best parameters are restored at the end.
inline StageResult run_stage(const std::string& stage, std::vector<Parameter*> params,
                             const TrainConfig& cfg,
                             const std::function<Var(std::size_t, Tape&, nlohmann::ordered_json&)>& step,
                             const std::function<double()>& validate, EventLog* log,
                             nlohmann::ordered_json extra = {}) {
  Adam opt(params, cfg.adam());
  StageResult r{stage, 0, 0, -1.0};
  std::vector<DenseMat> best;
  for (Parameter* p : params) best.push_back(p->value);
  std::size_t since_best = 0;
  for (std::size_t e = 0; e < cfg.max_epochs; ++e) {
    opt.zero_grad();
    Tape t;
    nlohmann::ordered_json losses = nlohmann::ordered_json::object();
    Var loss = step(e, t, losses);
    const double lv = t.scalar(loss);
    if (!std::isfinite(lv))
      throw DivergenceError(stage + ": non-finite loss " + std::to_string(lv) + " at epoch " +
                            std::to_string(e));
    t.backward(loss);
    opt.step();
    for (Parameter* p : params)
      if (!p->value.all_finite())
        throw DivergenceError(stage + ": parameter " + p->name + " became non-finite at epoch " +
                              std::to_string(e));
    const double val = validate();
    r.epochs_run = e + 1;
    if (log) {
      nlohmann::ordered_json ev;
      ev["stage"] = stage;
      ev["epoch"] = e;
      if (!extra.is_null())
        for (auto it = extra.begin(); it != extra.end(); ++it) ev[it.key()] = it.value();
      ev["loss"] = lv;
      if (!losses.empty()) ev["losses"] = losses;
      ev["val_macro_f1"] = val;
      log->emit(std::move(ev));
    }
    // Ties keep the later parameters; only a strict gain resets the patience counter.
    const bool gain = val > r.best_val;
    if (val >= r.best_val) {
      r.best_val = val;
      r.best_epoch = e;
      for (std::size_t k = 0; k < params.size(); ++k) best[k] = params[k]->value;
    }
    if (gain) since_best = 0;
    else if (++since_best >= cfg.patience) break;
  }
  for (std::size_t k = 0; k < params.size(); ++k) params[k]->value = best[k];
  if (log)
    log->emit({{"stage", stage}, {"event", "stage_end"}, {"epochs_run", r.epochs_run},
               {"best_epoch", r.best_epoch}, {"best_val_macro_f1", r.best_val}});
  return r;
}

/// Graph-level constants shared by every stage.
struct TrainContext {
  const Graph& g;
  NormalizedAdjacency adj;

  explicit TrainContext(const Graph& graph) : g(graph), adj(normalize_adjacency(graph)) {}
};

inline std::vector<ClassId> all_classes(const Graph& g) {
  std::vector<ClassId> c(g.class_count());
  for (ClassId k = 0; k < c.size(); ++k) c[k] = k;
  return c;
}

inline FocalConfig focal_config(const TrainConfig& cfg, const SplitManifest& m, std::size_t classes) {
  if (cfg.alpha_mode == AlphaMode::invfreq) return FocalConfig::inverse_frequency(m.train_counts, cfg.gamma);
  return FocalConfig::uniform(classes, cfg.alpha, cfg.gamma);
}

struct PretrainResult {
  Encoder encoder;
  Head og;
  DenseMat hpre;  // n x D
  DenseMat p_og;  // n x |C|
  StageResult stage;
};

/// Loss used for the og model: focal for pretraining, (weighted) CE for the baselines.
enum class OgLoss { focal, ce, weighted_ce };

inline Var og_loss(Tape& t, const TrainContext& ctx, Encoder& enc, Head& og, std::span<const NodeId> nodes,
                   std::span<const std::size_t> labels, OgLoss kind, const FocalConfig& focal,
                   std::span<const double> weights) {
  Var h = encode(t, enc, ctx.adj, ctx.g.features());
  HeadOutput out = head_forward(t, og, ctx.adj, h, nodes);
  if (kind == OgLoss::focal) return focal_loss(t, out.probs, labels, focal);
  return ce_loss(t, out.probs, labels, kind == OgLoss::weighted_ce ? weights : std::span<const double>{});
}

inline PretrainResult train_og(const TrainContext& ctx, const SplitManifest& m, const TrainConfig& cfg,
                               OgLoss loss_kind, const std::string& stage, EventLog* log) {
  cfg.validate();
  const Graph& g = ctx.g;
  LTE4G_REQUIRE(!m.train.empty(), ContractError, stage + ": empty training set");
  PretrainResult r{make_encoder(g.num_features(), cfg.hidden, cfg.seed),
                   make_head(HeadScope::og, all_classes(g), cfg.hidden, cfg.seed), {}, {}, {}};
  const auto labels = r.og.local_labels(g, m.train);
  const FocalConfig focal = focal_config(cfg, m, g.class_count());
  std::vector<double> weights;
  if (loss_kind == OgLoss::weighted_ce) {
    std::vector<std::size_t> counts(g.class_count(), 0);
    for (NodeId v : m.train) ++counts[g.label(v)];
    weights = FocalConfig::inverse_frequency(counts, 0.0).alpha;
  }
  const std::vector<NodeId>& val = m.val.empty() ? m.train : m.val;

  auto step = [&](std::size_t, Tape& t, nlohmann::ordered_json&) {
    return og_loss(t, ctx, r.encoder, r.og, m.train, labels, loss_kind, focal, weights);
  };
  auto validate = [&] {
    Tape t;
    Var h = encode(t, r.encoder, ctx.adj, g.features(), false);
    const DenseMat& z = t.value(head_logits(t, r.og, ctx.adj, h, false));
    return macro_f1_of(predict_rows(z, val, r.og.class_set), val, g);
  };
  std::vector<Parameter*> params{&r.encoder.weight, &r.og.w_gnn, &r.og.w_mlp};
  r.stage = run_stage(stage, params, cfg, step, validate, log);
  r.hpre = encode_value(r.encoder, ctx.adj, g.features());
  r.p_og = softmax_rows(head_logits_value(r.og, ctx.adj, r.hpre));
  return r;
}

inline PretrainResult pretrain(const TrainContext& ctx, const SplitManifest& m, const TrainConfig& cfg,
                               EventLog* log = nullptr) {
  return train_og(ctx, m, cfg, OgLoss::focal, "pretrain", log);
}

// ---- experts ---------------------------------------------------------------

inline HeadScope scope_of(Subset s) {
  constexpr HeadScope map[] = {HeadScope::HH, HeadScope::HT, HeadScope::TH, HeadScope::TT};
  return map[static_cast<std::size_t>(s)];
}

inline Subset sibling(Subset s) {
  constexpr Subset map[] = {Subset::HT, Subset::HH, Subset::TT, Subset::TH};
  return map[static_cast<std::size_t>(s)];
}

/// Subset of `nodes` whose true class side and degree side match `s`.
inline std::vector<NodeId> nodes_in_subset(std::span<const NodeId> nodes, const Graph& g,
                                           const SubsetPartition& part, Subset s) {
  std::vector<NodeId> out;
  for (NodeId v : nodes) {
    const bool head_class = part.is_head_class(g.label(v));
    const bool head_deg = g.degree(v) > part.degree_threshold;
    if (head_class == (side_of(s) == Side::head) && head_deg == is_head_degree(s)) out.push_back(v);
  }
  return out;
}

/// Nodes of `nodes` whose label is scored by `h`.
inline std::vector<NodeId> nodes_scored_by(std::span<const NodeId> nodes, const Graph& g, const Head& h) {
  std::vector<NodeId> out;
  for (NodeId v : nodes)
    if (std::binary_search(h.class_set.begin(), h.class_set.end(), g.label(v))) out.push_back(v);
  return out;
}

struct ExpertSet {
  std::array<Branch, 4> experts;              // indexed by Subset
  std::array<bool, 4> trained{};              // false: substituted or left at init
  std::array<std::optional<Subset>, 4> substitute;
  std::array<DenseMat, 4> initial_gnn;        // W_gnn at the start of each expert's training
  std::array<StageResult, 4> stages;
  std::vector<std::string> warnings;

  Branch& operator[](Subset s) { return experts[static_cast<std::size_t>(s)]; }
  const Branch& operator[](Subset s) const { return experts[static_cast<std::size_t>(s)]; }

  std::vector<const Parameter*> parameters() const {
    std::vector<const Parameter*> p;
    for (const auto& b : experts)
      for (const Parameter* q : b.parameters()) p.push_back(q);
    return p;
  }
};

/// CE of one expert over its subset, restricted to the expert's class set.
inline Var expert_loss(Tape& t, const TrainContext& ctx, Branch& b, std::span<const NodeId> nodes,
                       std::span<const std::size_t> local_labels, const DenseMat& hpre) {
  Var z = t.select_rows(branch_logits(t, b, ctx.adj, ctx.g.features(), hpre, true), nodes);
  return ce_loss(t, t.row_softmax(z), local_labels);
}

/// Trains one expert with CE over its subset; validation is Macro-F1 on `val`.
inline StageResult train_expert(const TrainContext& ctx, Branch& b, std::span<const NodeId> train,
                                std::span<const NodeId> val, const DenseMat& hpre,
                                const TrainConfig& cfg, const std::string& stage, EventLog* log) {
  const Graph& g = ctx.g;
  const auto labels = b.head.local_labels(g, train);
  std::vector<NodeId> tr(train.begin(), train.end()), va(val.begin(), val.end());
  if (va.empty()) va = tr;
  auto step = [&](std::size_t, Tape& t, nlohmann::ordered_json&) {
    return expert_loss(t, ctx, b, tr, labels, hpre);
  };
  auto validate = [&] {
    const DenseMat z = branch_logits_value(b, ctx.adj, g.features(), hpre);
    return macro_f1_of(predict_rows(z, va, b.head.class_set), va, g);
  };
  return run_stage(stage, b.parameters(), cfg, step, validate, log);
}

/// Copies the GNN weight of a trained expert into its tail-degree sibling; the MLP stays
/// freshly initialised.
inline void finetune_from(Branch& dst, const Branch& src) {
  dst.head.w_gnn.value = src.head.w_gnn.value;
  if (src.encoder && dst.encoder) dst.encoder->weight.value = src.encoder->weight.value;
}

inline void rename_branch(Branch& b, HeadScope scope) {
  const std::string base = std::string("head.") + to_string(scope);
  b.head.scope = scope;
  b.head.w_gnn.name = base + ".W_gnn";
  b.head.w_mlp.name = base + ".W_mlp";
  if (b.encoder) b.encoder->weight.name = std::string("encoder.") + to_string(scope) + ".W";
}

inline Branch make_branch(HeadScope scope, std::vector<ClassId> classes, const TrainConfig& cfg,
                          const Encoder* finetune_base) {
  Branch b{make_head(scope, std::move(classes), cfg.hidden, cfg.seed), std::nullopt};
  if (finetune_base) {
    b.encoder = *finetune_base;
    b.encoder->weight.name = std::string("encoder.") + to_string(scope) + ".W";
  }
  return b;
}

/// Phase A trains HH and TH; phase B initialises HT from HH and TT from TH and trains them.
/// An empty subset takes a copy of its sibling's trained expert.
inline ExpertSet train_experts(const TrainContext& ctx, const SplitManifest& m, const SubsetPartition& part,
                               const PretrainResult& pre, const TrainConfig& cfg, EventLog* log = nullptr) {
  cfg.validate();
  const Graph& g = ctx.g;
  bool any = false;
  for (Subset s : kAllSubsets) any = any || !part[s].empty();
  LTE4G_REQUIRE(any, ConfigError, "train_experts: all four training subsets are empty");

  ExpertSet ex;
  const Encoder* base = cfg.finetune_encoder ? &pre.encoder : nullptr;
  for (Subset s : kAllSubsets)
    ex[s] = make_branch(scope_of(s), part.side_classes(side_of(s)), cfg, base);

  auto run = [&](Subset s) {
    const auto i = static_cast<std::size_t>(s);
    ex.initial_gnn[i] = ex[s].head.w_gnn.value;
    auto val = nodes_scored_by(nodes_in_subset(m.val, g, part, s), g, ex[s].head);
    if (val.empty()) {
      val = nodes_scored_by(m.val, g, ex[s].head);
      ex.warnings.push_back(std::string("expert ") + to_string(s) +
                            ": no validation nodes in its subset; using all validation nodes of its classes");
    }
    ex.stages[i] = train_expert(ctx, ex[s], part[s], val, pre.hpre, cfg,
                                std::string("expert_") + to_string(s), log);
    ex.trained[i] = true;
  };

  for (Subset s : {Subset::HH, Subset::TH})
    if (!part[s].empty()) run(s);
  for (Subset s : {Subset::HT, Subset::TT}) {
    const Subset src = sibling(s);
    if (part[s].empty()) continue;
    if (ex.trained[static_cast<std::size_t>(src)]) {
      finetune_from(ex[s], ex[src]);
      if (log)
        log->emit({{"stage", std::string("expert_") + to_string(s)}, {"event", "init_from"},
                   {"source", to_string(src)}});
    }
    run(s);
  }
  for (Subset s : kAllSubsets) {
    const auto i = static_cast<std::size_t>(s);
    if (ex.trained[i]) continue;
    const Subset sib = sibling(s);
    if (ex.trained[static_cast<std::size_t>(sib)]) {
      Branch copy = ex[sib];
      rename_branch(copy, scope_of(s));
      ex[s] = std::move(copy);
      ex.substitute[i] = sib;
      ex.warnings.push_back(std::string("expert ") + to_string(s) + ": empty subset, using expert " +
                            to_string(sib));
    } else {
      ex.warnings.push_back(std::string("expert ") + to_string(s) +
                            ": empty subset and empty sibling; left at initialisation");
    }
  }
  return ex;
}

// ---- students ----------------------------------------------------------------

struct StudentSet {
  std::array<Branch, 2> students;  // indexed by Side
  StageResult stage;

  Branch& operator[](Side s) { return students[static_cast<std::size_t>(s)]; }
  const Branch& operator[](Side s) const { return students[static_cast<std::size_t>(s)]; }
};

/// Routing decision of every node, computed once from the frozen pretrained state.
inline std::vector<Route> route_all(const PrototypeTable& table, const DenseMat& hpre,
                                    std::span<const ClassId> head_classes) {
  std::vector<Route> r(hpre.rows());
  for (NodeId v = 0; v < hpre.rows(); ++v) r[v] = route_node(v, table, hpre, head_classes);
  return r;
}

/// Student loss terms of one epoch, kept so the total can be recomposed from its parts.
struct StudentLosses {
  double kd_hh = 0, kd_ht = 0, kd_th = 0, kd_tt = 0;
  double l_head = 0, l_tail = 0, ce_head = 0, ce_tail = 0, total = 0, beta = 1;

  nlohmann::ordered_json to_json() const {
    return {{"kd_HH", kd_hh}, {"kd_HT", kd_ht}, {"kd_TH", kd_th}, {"kd_TT", kd_tt},
            {"student_H", l_head}, {"student_T", l_tail}, {"ce_H", ce_head}, {"ce_T", ce_tail},
            {"total", total}};
  }
};

/// The student objective with the expert targets precomputed:
/// L = [b KD_HH + (1-b) KD_HT] + [b KD_TH + (1-b) KD_TT] + CE_H + CE_T.
struct StudentObjective {
  const TrainContext& ctx;
  const SubsetPartition& part;
  const DenseMat& hpre;
  double temperature = 1.0;
  std::array<DenseMat, 4> targets;
  std::array<std::vector<NodeId>, 2> side_nodes;
  std::array<std::vector<std::size_t>, 2> side_labels;

  StudentObjective(const TrainContext& c, const SubsetPartition& p, const PretrainResult& pre,
                   const ExpertSet& experts, const StudentSet& st, double temp)
      : ctx(c), part(p), hpre(pre.hpre), temperature(temp) {
    for (Subset s : kAllSubsets) {
      Branch b = experts[s];
      const DenseMat z = branch_logits_value(b, ctx.adj, ctx.g.features(), hpre);
      std::vector<std::size_t> idx(part[s].begin(), part[s].end());
      targets[static_cast<std::size_t>(s)] = softmax_rows(gather_rows(z, idx), temperature);
    }
    for (Side s : {Side::head, Side::tail}) {
      const auto si = static_cast<std::size_t>(s);
      side_nodes[si] = part.side_nodes(s);
      side_labels[si] = st[s].head.local_labels(ctx.g, side_nodes[si]);
    }
  }

  Var kd_term(Tape& t, Var z, Subset s) const {
    const auto& nodes = part[s];
    if (nodes.empty()) return t.constant(DenseMat(1, 1, 0.0));
    Var zs = t.select_rows(z, nodes);
    if (temperature != 1.0) zs = t.scale(zs, 1.0 / temperature);
    return kd_loss(t, targets[static_cast<std::size_t>(s)], t.row_softmax(zs));
  }

  Var operator()(Tape& t, StudentSet& st, double beta, StudentLosses& L) const {
    L.beta = beta;
    std::array<Var, 2> side_loss, ce;
    for (Side s : {Side::head, Side::tail}) {
      const auto si = static_cast<std::size_t>(s);
      Var z = branch_logits(t, st[s], ctx.adj, ctx.g.features(), hpre, true);
      const Subset hi = s == Side::head ? Subset::HH : Subset::TH;
      const Subset lo = s == Side::head ? Subset::HT : Subset::TT;
      Var kd_hi = kd_term(t, z, hi), kd_lo = kd_term(t, z, lo);
      side_loss[si] = t.add(t.scale(kd_hi, beta), t.scale(kd_lo, 1.0 - beta));
      ce[si] = side_nodes[si].empty()
                   ? t.constant(DenseMat(1, 1, 0.0))
                   : ce_loss(t, t.row_softmax(t.select_rows(z, side_nodes[si])), side_labels[si]);
      (s == Side::head ? L.kd_hh : L.kd_th) = t.scalar(kd_hi);
      (s == Side::head ? L.kd_ht : L.kd_tt) = t.scalar(kd_lo);
      (s == Side::head ? L.l_head : L.l_tail) = t.scalar(side_loss[si]);
      (s == Side::head ? L.ce_head : L.ce_tail) = t.scalar(ce[si]);
    }
    Var total = t.add(t.add(side_loss[0], side_loss[1]), t.add(ce[0], ce[1]));
    L.total = t.scalar(total);
    return total;
  }
};

/// Joint distillation of the four frozen experts into the head and tail students.
/// Raises ContractError if any encoder or expert parameter changes during the stage.
inline StudentSet train_students(const TrainContext& ctx, const SplitManifest& m, const SubsetPartition& part,
                                 const PretrainResult& pre, const ExpertSet& experts,
                                 const PrototypeTable& protos, const TrainConfig& cfg,
                                 EventLog* log = nullptr, std::vector<StudentLosses>* trace = nullptr) {
  cfg.validate();
  const Graph& g = ctx.g;
  auto frozen = experts.parameters();
  frozen.push_back(&pre.encoder.weight);
  const std::uint64_t hash_before = parameter_hash(frozen);

  const Encoder* base = cfg.finetune_encoder ? &pre.encoder : nullptr;
  StudentSet st;
  st[Side::head] = make_branch(HeadScope::H, part.side_classes(Side::head), cfg, base);
  st[Side::tail] = make_branch(HeadScope::T, part.side_classes(Side::tail), cfg, base);

  const StudentObjective objective(ctx, part, pre, experts, st, cfg.kd_temperature);
  const auto routes = route_all(protos, pre.hpre, part.head_classes);
  const std::vector<NodeId>& val = m.val.empty() ? m.train : m.val;
  const std::size_t horizon = cfg.scheduler_horizon();

  auto step = [&](std::size_t e, Tape& t, nlohmann::ordered_json& out) {
    StudentLosses L;
    Var total = objective(t, st, beta_schedule(std::min(e, horizon), horizon, cfg.scheduler), L);
    out = L.to_json();
    out["beta"] = L.beta;
    if (trace) trace->push_back(L);
    return total;
  };

  auto validate = [&] {
    const DenseMat zh = branch_logits_value(st[Side::head], ctx.adj, g.features(), pre.hpre);
    const DenseMat zt = branch_logits_value(st[Side::tail], ctx.adj, g.features(), pre.hpre);
    std::vector<ClassId> preds;
    preds.reserve(val.size());
    for (NodeId v : val)
      preds.push_back(routes[v].student == Side::head
                          ? predict_from_logits(zh.row(v), st[Side::head].head.class_set)
                          : predict_from_logits(zt.row(v), st[Side::tail].head.class_set));
    return macro_f1_of(preds, val, g);
  };

  std::vector<Parameter*> params = st[Side::head].parameters();
  for (Parameter* p : st[Side::tail].parameters()) params.push_back(p);
  st.stage = run_stage("student", params, cfg, step, validate, log);

  const std::uint64_t hash_after = parameter_hash(frozen);
  LTE4G_REQUIRE(hash_before == hash_after, ContractError,
                "train_students: encoder/expert parameters changed during distillation");
  if (log) log->emit({{"stage", "student"}, {"event", "isolation_check"}, {"hash", hash_after}});
  return st;
}

// ---- baselines -----------------------------------------------------------------

enum class BaselineKind { origin, reweight, oversample };

inline const char* to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::origin: return "origin";
    case BaselineKind::reweight: return "reweight";
    case BaselineKind::oversample: return "oversample";
  }
  return "?";
}

struct Oversampled {
  Graph graph;
  SplitManifest manifest;
  std::vector<NodeId> source;  // source[i] = original node of appended node n+i
};

/// Appends one copy of every minority-class train node (ratio 1.0). A copy has the
/// original's features, label and neighbours, and joins the training set.
inline Oversampled oversample_minority(const Graph& g, const SplitManifest& m,
                                       std::span<const ClassId> minority) {
  Oversampled o;
  for (NodeId v : m.train)
    if (std::find(minority.begin(), minority.end(), g.label(v)) != minority.end()) o.source.push_back(v);
  const std::size_t n = g.num_nodes();
  std::vector<Edge> edges = g.edges();
  std::vector<Triplet> feats;
  const SparseMat& x = g.features();
  for (NodeId v = 0; v < n; ++v) {
    auto c = x.row_cols(v);
    auto val = x.row_values(v);
    for (std::size_t k = 0; k < c.size(); ++k) feats.push_back({v, c[k], val[k]});
  }
  std::vector<ClassId> labels = g.labels();
  o.manifest = m;
  for (std::size_t i = 0; i < o.source.size(); ++i) {
    const NodeId src = o.source[i], dup = n + i;
    for (NodeId u : g.neighbors(src)) edges.emplace_back(dup, u);
    auto c = x.row_cols(src);
    auto val = x.row_values(src);
    for (std::size_t k = 0; k < c.size(); ++k) feats.push_back({dup, c[k], val[k]});
    labels.push_back(g.label(src));
    o.manifest.train.push_back(dup);
    ++o.manifest.train_counts[g.label(src)];
  }
  const std::size_t total = n + o.source.size();
  o.graph = Graph(total, std::move(edges), SparseMat::from_triplets(total, g.num_features(), std::move(feats)),
                  std::move(labels), g.class_count());
  return o;
}

inline std::vector<ClassId> minority_classes_for(const SplitManifest& m, const Graph& g, double p) {
  if (!m.protocol.minority_classes.empty()) return m.protocol.minority_classes;
  return split_classes(m, g, p).tail;
}

struct BaselineResult {
  PretrainResult model;
  DenseMat logits;  // rows of the original nodes only
  std::size_t oversampled = 0;
};

inline BaselineResult train_baseline(const Graph& g, const SplitManifest& m, const TrainConfig& cfg,
                                     BaselineKind kind, EventLog* log = nullptr) {
  BaselineResult r;
  if (kind == BaselineKind::oversample) {
    Oversampled o = oversample_minority(g, m, minority_classes_for(m, g, cfg.p));
    TrainContext ctx(o.graph);
    r.model = train_og(ctx, o.manifest, cfg, OgLoss::ce, "baseline_oversample", log);
    r.oversampled = o.source.size();
    const DenseMat full = head_logits_value(r.model.og, ctx.adj, r.model.hpre);
    std::vector<std::size_t> idx(g.num_nodes());
    for (NodeId v = 0; v < idx.size(); ++v) idx[v] = v;
    r.logits = gather_rows(full, idx);
    return r;
  }
  TrainContext ctx(g);
  r.model = train_og(ctx, m, cfg, kind == BaselineKind::reweight ? OgLoss::weighted_ce : OgLoss::ce,
                     std::string("baseline_") + to_string(kind), log);
  r.logits = head_logits_value(r.model.og, ctx.adj, r.model.hpre);
  return r;
}

}  // namespace lte4g
