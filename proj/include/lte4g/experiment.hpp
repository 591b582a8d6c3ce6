#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lte4g/checkpoint.hpp"
#include "lte4g/dataset_io.hpp"
#include "lte4g/imbalance.hpp"
#include "lte4g/metrics.hpp"
#include "lte4g/pipeline.hpp"

namespace lte4g {

namespace fs = std::filesystem;

struct ExperimentConfig {
  std::string dataset;
  ProtocolKind protocol = ProtocolKind::manual;
  double imb_ratio = 0.05;
  std::size_t imb_classes = 5;
  std::size_t per_class_head = 20;
  std::size_t val_per_class = 25;
  std::size_t test_per_class = 55;
  std::size_t lt_max_count = 0;
  Method method = Method::lte4g;
  TrainConfig train;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::string out = "runs/default";
};

/// Thrown by the experiment driver; carries the stage that failed.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

inline std::string alpha_string(const TrainConfig& t) {
  if (t.alpha_mode == AlphaMode::invfreq) return "invfreq";
  return "uniform:" + io_detail::format_double(t.alpha);
}

inline void parse_alpha(const std::string& s, TrainConfig& t) {
  if (s == "invfreq") {
    t.alpha_mode = AlphaMode::invfreq;
    return;
  }
  if (s.rfind("uniform:", 0) == 0) {
    const std::string v = s.substr(8);
    double a = 0.0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), a);
    if (ec != std::errc{} || p != v.data() + v.size() || !(a > 0.0))
      throw ConfigError("alpha: expected uniform:F with F > 0, got '" + s + "'");
    t.alpha_mode = AlphaMode::uniform;
    t.alpha = a;
    return;
  }
  throw ConfigError("alpha: expected uniform:F or invfreq, got '" + s + "'");
}

inline std::string confidence_string(const ExpansionConfig& e) {
  if (e.confidence == ConfidenceRule::argmax) return "argmax";
  return "tau:" + io_detail::format_double(e.tau);
}

inline void parse_confidence(const std::string& s, ExpansionConfig& e) {
  if (s == "argmax") {
    e.confidence = ConfidenceRule::argmax;
    return;
  }
  if (s.rfind("tau:", 0) == 0) {
    const std::string v = s.substr(4);
    double tau = 0.0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), tau);
    if (ec != std::errc{} || p != v.data() + v.size() || !(tau >= 0.0 && tau <= 1.0))
      throw ConfigError("candidate_confidence: expected tau:F with F in [0,1], got '" + s + "'");
    e.confidence = ConfidenceRule::threshold;
    e.tau = tau;
    return;
  }
  throw ConfigError("candidate_confidence: expected argmax or tau:F, got '" + s + "'");
}

inline std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || ec != std::errc{} || p != tok.data() + tok.size())
      throw ConfigError("seeds: invalid seed '" + tok + "' in '" + s + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("seeds: empty list");
  return out;
}

inline nlohmann::ordered_json to_json(const ExperimentConfig& c) {
  const TrainConfig& t = c.train;
  nlohmann::ordered_json j;
  j["dataset"] = c.dataset;
  j["protocol"] = to_string(c.protocol);
  j["imb_ratio"] = c.imb_ratio;
  j["imb_classes"] = c.imb_classes;
  j["per_class_head"] = c.per_class_head;
  j["val_per_class"] = c.val_per_class;
  j["test_per_class"] = c.test_per_class;
  j["lt_max_count"] = c.lt_max_count;
  j["method"] = to_string(c.method);
  j["seeds"] = c.seeds;
  j["out"] = c.out;
  j["lr"] = t.lr;
  j["weight_decay"] = t.weight_decay;
  j["hidden"] = t.hidden;
  j["max_epochs"] = t.max_epochs;
  j["patience"] = t.patience;
  j["student_epochs"] = t.student_epochs;
  j["p"] = t.p;
  j["degree_threshold"] = t.degree_threshold;
  j["gamma"] = t.gamma;
  j["alpha"] = alpha_string(t);
  j["scheduler"] = to_string(t.scheduler);
  j["kd_temperature"] = t.kd_temperature;
  j["use_kd"] = t.use_kd;
  j["finetune_encoder"] = t.finetune_encoder;
  j["split_mode"] = to_string(t.split_mode);
  j["candidate_order"] = t.expansion.order_string();
  j["candidate_budget"] = t.expansion.budget == BudgetRule::mean ? "mean" : "max";
  j["candidate_confidence"] = confidence_string(t.expansion);
  j["candidate_k"] = t.expansion.k;
  return j;
}

/// Applies the keys present in `j` on top of `c`. Unknown keys are rejected.
inline void apply_json(ExperimentConfig& c, const nlohmann::json& j) {
  LTE4G_REQUIRE(j.is_object(), ConfigError, "config: top level must be a JSON object");
  static const std::set<std::string> known = [] {
    std::set<std::string> k;
    const auto defaults = to_json(ExperimentConfig{});
    for (auto it = defaults.begin(); it != defaults.end(); ++it) k.insert(it.key());
    return k;
  }();
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.contains(it.key())) throw ConfigError("config: unknown key '" + it.key() + "'");
  TrainConfig& t = c.train;
  try {
    auto get = [&](const char* key, auto& dst) {
      if (j.contains(key)) dst = j.at(key).get<std::decay_t<decltype(dst)>>();
    };
    auto get_str = [&](const char* key) -> std::optional<std::string> {
      if (!j.contains(key)) return std::nullopt;
      return j.at(key).get<std::string>();
    };
    get("dataset", c.dataset);
    if (auto s = get_str("protocol")) c.protocol = protocol_from_string(*s);
    get("imb_ratio", c.imb_ratio);
    get("imb_classes", c.imb_classes);
    get("per_class_head", c.per_class_head);
    get("val_per_class", c.val_per_class);
    get("test_per_class", c.test_per_class);
    get("lt_max_count", c.lt_max_count);
    if (auto s = get_str("method")) c.method = method_from_string(*s);
    get("seeds", c.seeds);
    get("out", c.out);
    get("lr", t.lr);
    get("weight_decay", t.weight_decay);
    get("hidden", t.hidden);
    get("max_epochs", t.max_epochs);
    get("patience", t.patience);
    get("student_epochs", t.student_epochs);
    get("p", t.p);
    get("degree_threshold", t.degree_threshold);
    get("gamma", t.gamma);
    if (auto s = get_str("alpha")) parse_alpha(*s, t);
    if (auto s = get_str("scheduler")) t.scheduler = scheduler_from_string(*s);
    get("kd_temperature", t.kd_temperature);
    get("use_kd", t.use_kd);
    get("finetune_encoder", t.finetune_encoder);
    if (auto s = get_str("split_mode")) t.split_mode = split_mode_from_string(*s);
    if (auto s = get_str("candidate_order")) t.expansion.order = ExpansionConfig::parse_order(*s);
    if (auto s = get_str("candidate_budget")) {
      if (*s == "mean") t.expansion.budget = BudgetRule::mean;
      else if (*s == "max") t.expansion.budget = BudgetRule::max;
      else throw ConfigError("candidate_budget: expected mean|max, got '" + *s + "'");
    }
    if (auto s = get_str("candidate_confidence")) parse_confidence(*s, t.expansion);
    get("candidate_k", t.expansion.k);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline void validate(const ExperimentConfig& c) {
  c.train.validate();
  LTE4G_REQUIRE(!c.seeds.empty(), ConfigError, "config: seeds must not be empty");
  LTE4G_REQUIRE(!c.out.empty(), ConfigError, "config: out must not be empty");
  LTE4G_REQUIRE(c.imb_ratio > 0.0 && c.imb_ratio <= 1.0, ConfigError, "config: imb_ratio must lie in (0,1]");
}

inline ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  LTE4G_REQUIRE(in.good(), ConfigError, "cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  ExperimentConfig c;
  apply_json(c, j);
  return c;
}

inline fs::path seed_dir(const ExperimentConfig& c, std::uint64_t seed) {
  return fs::path(c.out) / ("seed_" + std::to_string(seed));
}

inline void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path);
  LTE4G_REQUIRE(out.good(), ValidationError, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  LTE4G_REQUIRE(in.good(), ValidationError, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

inline TrainConfig seeded(const TrainConfig& t, std::uint64_t seed) {
  TrainConfig s = t;
  s.seed = seed;
  return s;
}

inline Graph load_experiment_graph(const ExperimentConfig& c) {
  LTE4G_REQUIRE(!c.dataset.empty(), ConfigError, "config: dataset directory not set");
  return load_dataset_dir(c.dataset);
}

inline SplitManifest build_manifest(const Graph& g, const ExperimentConfig& c, std::uint64_t seed) {
  switch (c.protocol) {
    case ProtocolKind::manual: {
      ManualOptions o;
      o.per_class_head = c.per_class_head;
      o.val_per_class = c.val_per_class;
      o.test_per_class = c.test_per_class;
      return apply_manual_imbalance(g, c.imb_classes, c.imb_ratio, seed, o);
    }
    case ProtocolKind::longtail: {
      LongTailOptions o;
      o.val_per_class = c.val_per_class;
      o.test_per_class = c.test_per_class;
      o.max_count = c.lt_max_count;
      return apply_longtail(g, c.imb_ratio, seed, o);
    }
    case ProtocolKind::natural: return split_natural(g, seed);
  }
  throw ConfigError("unknown protocol");
}

// ---- stages ------------------------------------------------------------------
// Each stage reads what the previous one wrote, so any stage can be rerun from an output
// directory alone.

inline void stage_prepare(const ExperimentConfig& c, const Graph& g, std::uint64_t seed) {
  const fs::path dir = seed_dir(c, seed);
  fs::create_directories(dir);
  SplitManifest m = build_manifest(g, c, seed);
  validate_manifest(m, g);
  write_json(dir / "manifest.json", to_json(m));
}

inline SplitManifest read_manifest(const fs::path& dir, const Graph& g) {
  SplitManifest m = manifest_from_json(read_json(dir / "manifest.json"));
  validate_manifest(m, g);
  return m;
}

inline void stage_train(const ExperimentConfig& c, const Graph& g, std::uint64_t seed) {
  const fs::path dir = seed_dir(c, seed);
  const SplitManifest m = read_manifest(dir, g);
  const TrainConfig t = seeded(c.train, seed);
  std::ofstream events(dir / "events.jsonl");
  EventLog log{&events, {}};
  if (c.method == Method::lte4g) {
    ModelBundle b = fit_lte4g(g, m, t, &log);
    nlohmann::ordered_json pj = to_json(b.partition);
    pj["expert_warnings"] = b.experts.warnings;
    write_json(dir / "partition.json", pj);
    save_checkpoint(dir / "checkpoint.json", b.parameters());
  } else {
    BaselineResult r = train_baseline(g, m, t, baseline_kind(c.method), &log);
    std::vector<const Parameter*> params{&r.model.encoder.weight, &r.model.og.w_gnn, &r.model.og.w_mlp};
    save_checkpoint(dir / "checkpoint.json", params);
  }
}

inline std::vector<PredictionRow> infer_rows(const ExperimentConfig& c, const Graph& g, std::uint64_t seed,
                                             std::span<const NodeId> nodes) {
  const fs::path dir = seed_dir(c, seed);
  const SplitManifest m = read_manifest(dir, g);
  const TrainConfig t = seeded(c.train, seed);
  const Checkpoint ck = load_checkpoint(dir / "checkpoint.json");
  if (c.method == Method::lte4g) {
    const SubsetPartition part = partition_from_json(read_json(dir / "partition.json"));
    ModelBundle b = restore_bundle(g, m, part, t, ck);
    return predict_bundle(b, g, nodes);
  }
  return predict_baseline(restore_baseline_logits(g, m, t, c.method, ck), g, nodes);
}

inline void stage_infer(const ExperimentConfig& c, const Graph& g, std::uint64_t seed) {
  const fs::path dir = seed_dir(c, seed);
  const SplitManifest m = read_manifest(dir, g);
  const auto rows = infer_rows(c, g, seed, m.test);
  std::ofstream out(dir / "predictions.tsv");
  write_predictions_tsv(out, rows);
}

inline std::vector<PredictionRow> read_predictions(const fs::path& path) {
  std::ifstream in(path);
  LTE4G_REQUIRE(in.good(), ValidationError, "cannot open " + path.string());
  std::vector<PredictionRow> rows;
  std::string line;
  std::getline(in, line);
  for (std::size_t ln = 2; std::getline(in, line); ++ln) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, '\t')) f.push_back(tok);
    if (f.size() != 5) throw ParseError(path.string(), ln, "expected 5 TAB-separated fields");
    PredictionRow r;
    const std::string file = path.string();
    r.node = io_detail::parse_number<std::size_t>(f[0], file, ln, "node id");
    r.routed = f[1] != "-";
    if (r.routed) {
      if (f[1] != "H" && f[1] != "T") throw ParseError(file, ln, "routed_student must be H, T or -");
      r.route.student = f[1] == "H" ? Side::head : Side::tail;
      r.route.c_star = io_detail::parse_number<std::size_t>(f[2], file, ln, "c_star");
    }
    r.predicted = io_detail::parse_number<std::size_t>(f[3], file, ln, "predicted class");
    r.truth = io_detail::parse_number<std::size_t>(f[4], file, ln, "true class");
    rows.push_back(r);
  }
  return rows;
}

/// Evaluates a prediction table: overall metrics, the class x degree breakdown and, for
/// routed methods, the routing-side accuracy and its upper bound on accuracy.
inline nlohmann::ordered_json evaluate_predictions(std::span<const PredictionRow> rows, const Graph& g,
                                                   std::span<const ClassId> head_classes,
                                                   std::size_t threshold) {
  std::vector<std::size_t> preds, labels;
  std::vector<NodeId> nodes;
  for (const auto& r : rows) {
    LTE4G_REQUIRE(r.node < g.num_nodes() && g.label(r.node) == r.truth, ValidationError,
                  "predictions: node " + std::to_string(r.node) + " does not match the dataset");
    preds.push_back(r.predicted);
    labels.push_back(r.truth);
    nodes.push_back(r.node);
  }
  const MetricsReport rep = evaluate(preds, labels, g.class_count());
  nlohmann::ordered_json j = to_json(rep);
  j["count"] = rows.size();
  j["subsets"] = to_json(subset_breakdown(preds, nodes, g, head_classes, threshold));
  const bool routed = !rows.empty() && rows.front().routed;
  if (routed) {
    const double side = routing_side_accuracy(rows, head_classes);
    j["routing_side_accuracy"] = side;
    j["accuracy_le_routing"] = rep.acc <= side;
  }
  return j;
}

inline void stage_eval(const ExperimentConfig& c, const Graph& g, std::uint64_t seed) {
  const fs::path dir = seed_dir(c, seed);
  const auto rows = read_predictions(dir / "predictions.tsv");
  std::vector<ClassId> head_classes;
  std::size_t threshold = c.train.degree_threshold;
  if (c.method == Method::lte4g) {
    const SubsetPartition part = partition_from_json(read_json(dir / "partition.json"));
    head_classes = part.head_classes;
    threshold = part.degree_threshold;
  } else {
    head_classes = split_classes(read_manifest(dir, g), g, c.train.p).head;
  }
  nlohmann::ordered_json j;
  j["method"] = to_string(c.method);
  j["seed"] = seed;
  j["test"] = evaluate_predictions(rows, g, head_classes, threshold);
  write_json(dir / "metrics.json", j);
  std::vector<std::size_t> preds, labels;
  for (const auto& r : rows) {
    preds.push_back(r.predicted);
    labels.push_back(r.truth);
  }
  std::ofstream csv(dir / "metrics.csv");
  csv << to_csv(evaluate(preds, labels, g.class_count()));
}

inline nlohmann::ordered_json summarize(const ExperimentConfig& c) {
  static const char* keys[] = {"acc", "bacc", "macro_f1", "gmeans"};
  nlohmann::ordered_json s;
  s["method"] = to_string(c.method);
  s["seeds"] = c.seeds;
  for (const char* k : keys) {
    std::vector<double> v;
    for (auto seed : c.seeds) v.push_back(read_json(seed_dir(c, seed) / "metrics.json").at("test").at(k).get<double>());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
    s["metrics"][k] = {{"mean", mean}, {"std", sd}, {"values", v}};
  }
  return s;
}

inline void stage_report(const ExperimentConfig& c) {
  write_json(fs::path(c.out) / "summary.json", summarize(c));
}

inline void snapshot_config(const ExperimentConfig& c) {
  fs::create_directories(c.out);
  write_json(fs::path(c.out) / "config.json", to_json(c));
}

/// Runs `fn`, rethrowing any failure tagged with the stage name.
template <typename Fn>
void tagged(const std::string& stage, Fn&& fn) {
  try {
    fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

/// prepare -> train -> infer -> eval for every seed, then the summary.
inline nlohmann::ordered_json run_experiment(const ExperimentConfig& c) {
  tagged("config", [&] { validate(c); });
  Graph g;
  tagged("load", [&] { g = load_experiment_graph(c); });
  tagged("config", [&] { snapshot_config(c); });
  for (auto seed : c.seeds) {
    const std::string tag = "seed " + std::to_string(seed);
    tagged("prepare " + tag, [&] { stage_prepare(c, g, seed); });
    tagged("train " + tag, [&] { stage_train(c, g, seed); });
    tagged("infer " + tag, [&] { stage_infer(c, g, seed); });
    tagged("eval " + tag, [&] { stage_eval(c, g, seed); });
  }
  nlohmann::ordered_json s;
  tagged("report", [&] {
    s = summarize(c);
    write_json(fs::path(c.out) / "summary.json", s);
  });
  return s;
}

}  // namespace lte4g
