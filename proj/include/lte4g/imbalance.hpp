#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "lte4g/error.hpp"
#include "lte4g/graph.hpp"

namespace lte4g {

enum class ProtocolKind { manual, longtail, natural };

inline const char* to_string(ProtocolKind k) {
  switch (k) {
    case ProtocolKind::manual: return "manual";
    case ProtocolKind::longtail: return "lt";
    case ProtocolKind::natural: return "natural";
  }
  return "?";
}

inline ProtocolKind protocol_from_string(const std::string& s) {
  if (s == "manual") return ProtocolKind::manual;
  if (s == "lt") return ProtocolKind::longtail;
  if (s == "natural") return ProtocolKind::natural;
  throw ConfigError("unknown protocol '" + s + "' (expected manual|lt|natural)");
}

struct ProtocolDescriptor {
  ProtocolKind kind = ProtocolKind::manual;
  double imbalance_ratio = 1.0;
  std::size_t num_imb_classes = 0;
  std::uint64_t seed = 0;
  std::size_t per_class_head = 20;
  std::size_t val_per_class = 25;
  std::size_t test_per_class = 55;
  std::size_t lt_max_count = 0;  // 0: largest class's remaining pool
  std::vector<ClassId> minority_classes;
};

struct SplitManifest {
  std::vector<NodeId> train;
  std::vector<NodeId> val;
  std::vector<NodeId> test;
  std::vector<std::size_t> train_counts;  // per class id
  ProtocolDescriptor protocol;
  std::vector<std::string> warnings;
};

struct ManualOptions {
  std::size_t per_class_head = 20;
  std::size_t val_per_class = 25;
  std::size_t test_per_class = 55;
};

struct LongTailOptions {
  std::size_t val_per_class = 25;
  std::size_t test_per_class = 55;
  std::size_t max_count = 0;
};

namespace imbalance_detail {

/// Class ids sorted by full-graph cardinality, descending; ties by lower id.
inline std::vector<ClassId> classes_by_size(const Graph& g) {
  const auto sizes = g.class_sizes();
  std::vector<ClassId> order(g.class_count());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](ClassId a, ClassId b) { return sizes[a] > sizes[b]; });
  return order;
}

/// Nodes of each class in a seed-determined random order.
inline std::vector<std::vector<NodeId>> shuffled_members(const Graph& g, std::mt19937_64& rng) {
  std::vector<std::vector<NodeId>> members(g.class_count());
  for (NodeId v = 0; v < g.num_nodes(); ++v) members[g.label(v)].push_back(v);
  for (auto& m : members) std::shuffle(m.begin(), m.end(), rng);
  return members;
}

inline void finalize(SplitManifest& m, const Graph& g) {
  std::sort(m.train.begin(), m.train.end());
  std::sort(m.val.begin(), m.val.end());
  std::sort(m.test.begin(), m.test.end());
  m.train_counts.assign(g.class_count(), 0);
  for (NodeId v : m.train) ++m.train_counts[g.label(v)];
}

}  // namespace imbalance_detail

/// Fixed 20-per-class quotas with the `num_imb_classes` smallest classes reduced to
/// round(20 * ratio) (at least 1); equal val/test quotas for every class.
inline SplitManifest apply_manual_imbalance(const Graph& g, std::size_t num_imb_classes, double ratio,
                                            std::uint64_t seed, ManualOptions opt = {}) {
  LTE4G_REQUIRE(ratio > 0.0 && ratio <= 1.0, ProtocolError, "manual imbalance: ratio must be in (0,1]");
  LTE4G_REQUIRE(num_imb_classes < g.class_count(), ProtocolError,
                "manual imbalance: num_imb_classes must be < class count");
  std::mt19937_64 rng(seed);
  const auto order = imbalance_detail::classes_by_size(g);
  auto members = imbalance_detail::shuffled_members(g, rng);
  const std::size_t minority_quota = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(static_cast<double>(opt.per_class_head) * ratio)));

  SplitManifest m;
  m.protocol = {ProtocolKind::manual, ratio, num_imb_classes, seed, opt.per_class_head,
                opt.val_per_class, opt.test_per_class, 0, {}};
  std::vector<bool> minority(g.class_count(), false);
  for (std::size_t r = g.class_count() - num_imb_classes; r < g.class_count(); ++r) {
    minority[order[r]] = true;
    m.protocol.minority_classes.push_back(order[r]);
  }
  std::sort(m.protocol.minority_classes.begin(), m.protocol.minority_classes.end());
  for (ClassId c = 0; c < g.class_count(); ++c) {
    const std::size_t quota = minority[c] ? minority_quota : opt.per_class_head;
    const auto& nodes = members[c];
    if (nodes.size() < quota + opt.val_per_class + opt.test_per_class)
      throw ProtocolError("manual imbalance: class " + std::to_string(c) + " has " +
                          std::to_string(nodes.size()) + " nodes, needs " +
                          std::to_string(quota + opt.val_per_class + opt.test_per_class));
    auto it = nodes.begin();
    m.train.insert(m.train.end(), it, it + static_cast<std::ptrdiff_t>(quota));
    it += static_cast<std::ptrdiff_t>(quota);
    m.val.insert(m.val.end(), it, it + static_cast<std::ptrdiff_t>(opt.val_per_class));
    it += static_cast<std::ptrdiff_t>(opt.val_per_class);
    m.test.insert(m.test.end(), it, it + static_cast<std::ptrdiff_t>(opt.test_per_class));
  }
  imbalance_detail::finalize(m, g);
  return m;
}

/// Long-tailed split: classes sorted by cardinality get train counts
/// round(max * ratio^(i/(|C|-1))), realised by discarding the lowest-degree nodes of
/// each class's pool. Val/test quotas are fixed per class.
inline SplitManifest apply_longtail(const Graph& g, double ratio, std::uint64_t seed,
                                    LongTailOptions opt = {}) {
  LTE4G_REQUIRE(ratio > 0.0 && ratio <= 1.0, ProtocolError, "long-tail: ratio must be in (0,1]");
  std::mt19937_64 rng(seed);
  const auto order = imbalance_detail::classes_by_size(g);
  auto members = imbalance_detail::shuffled_members(g, rng);
  const std::size_t c_count = g.class_count();

  SplitManifest m;
  m.protocol = {ProtocolKind::longtail, ratio, c_count > 0 ? c_count - 1 : 0, seed, 0,
                opt.val_per_class, opt.test_per_class, opt.max_count, {}};
  std::vector<std::vector<NodeId>> pool(c_count);
  for (ClassId c = 0; c < c_count; ++c) {
    const auto& nodes = members[c];
    if (nodes.size() < opt.val_per_class + opt.test_per_class + 1)
      throw ProtocolError("long-tail: class " + std::to_string(c) + " has too few nodes (" +
                          std::to_string(nodes.size()) + ")");
    auto it = nodes.begin();
    m.val.insert(m.val.end(), it, it + static_cast<std::ptrdiff_t>(opt.val_per_class));
    it += static_cast<std::ptrdiff_t>(opt.val_per_class);
    m.test.insert(m.test.end(), it, it + static_cast<std::ptrdiff_t>(opt.test_per_class));
    it += static_cast<std::ptrdiff_t>(opt.test_per_class);
    pool[c].assign(it, nodes.end());
  }
  const double max_count =
      static_cast<double>(opt.max_count > 0 ? opt.max_count : pool[order[0]].size());
  for (std::size_t r = 0; r < c_count; ++r) {
    const ClassId c = order[r];
    const double expo = c_count > 1 ? static_cast<double>(r) / static_cast<double>(c_count - 1) : 0.0;
    double target = std::round(max_count * std::pow(ratio, expo));
    if (target < 1.0) {
      m.warnings.push_back("long-tail: target for class " + std::to_string(c) + " below 1, clamped");
      target = 1.0;
    }
    auto& p = pool[c];
    std::size_t keep = static_cast<std::size_t>(target);
    if (keep > p.size()) {
      m.warnings.push_back("long-tail: class " + std::to_string(c) + " pool " +
                           std::to_string(p.size()) + " below target " + std::to_string(keep));
      keep = p.size();
    }
    // Lowest degrees first; the shuffled pool order breaks ties.
    std::stable_sort(p.begin(), p.end(),
                     [&g](NodeId a, NodeId b) { return g.degree(a) < g.degree(b); });
    m.train.insert(m.train.end(), p.end() - static_cast<std::ptrdiff_t>(keep), p.end());
    if (r > 0) m.protocol.minority_classes.push_back(c);
  }
  std::sort(m.protocol.minority_classes.begin(), m.protocol.minority_classes.end());
  imbalance_detail::finalize(m, g);
  return m;
}

/// Stratified 10/10/80 split; every class gets at least one train and one val node.
inline SplitManifest split_natural(const Graph& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto members = imbalance_detail::shuffled_members(g, rng);
  SplitManifest m;
  m.protocol = {ProtocolKind::natural, 1.0, 0, seed, 0, 0, 0, 0, {}};
  for (ClassId c = 0; c < g.class_count(); ++c) {
    const auto& nodes = members[c];
    if (nodes.size() < 3)
      throw ProtocolError("natural split: class " + std::to_string(c) + " has fewer than 3 nodes");
    const auto tenth = [&] {
      return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(nodes.size()))));
    };
    const std::size_t n_train = tenth();
    const std::size_t n_val = tenth();
    auto it = nodes.begin();
    m.train.insert(m.train.end(), it, it + static_cast<std::ptrdiff_t>(n_train));
    it += static_cast<std::ptrdiff_t>(n_train);
    m.val.insert(m.val.end(), it, it + static_cast<std::ptrdiff_t>(n_val));
    it += static_cast<std::ptrdiff_t>(n_val);
    m.test.insert(m.test.end(), it, nodes.end());
  }
  imbalance_detail::finalize(m, g);
  return m;
}

// ---- JSON -----------------------------------------------------------------

inline nlohmann::ordered_json to_json(const ProtocolDescriptor& p) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(p.kind);
  j["imbalance_ratio"] = p.imbalance_ratio;
  j["num_imb_classes"] = p.num_imb_classes;
  j["seed"] = p.seed;
  j["per_class_head"] = p.per_class_head;
  j["val_per_class"] = p.val_per_class;
  j["test_per_class"] = p.test_per_class;
  j["lt_max_count"] = p.lt_max_count;
  j["minority_classes"] = p.minority_classes;
  return j;
}

inline nlohmann::ordered_json to_json(const SplitManifest& m) {
  nlohmann::ordered_json j;
  j["train"] = m.train;
  j["val"] = m.val;
  j["test"] = m.test;
  j["protocol"] = to_json(m.protocol);
  j["train_counts"] = m.train_counts;
  j["warnings"] = m.warnings;
  return j;
}

inline SplitManifest manifest_from_json(const nlohmann::json& j) {
  try {
    SplitManifest m;
    m.train = j.at("train").get<std::vector<NodeId>>();
    m.val = j.at("val").get<std::vector<NodeId>>();
    m.test = j.at("test").get<std::vector<NodeId>>();
    const auto& p = j.at("protocol");
    m.protocol.kind = protocol_from_string(p.at("kind").get<std::string>());
    m.protocol.imbalance_ratio = p.at("imbalance_ratio").get<double>();
    m.protocol.num_imb_classes = p.at("num_imb_classes").get<std::size_t>();
    m.protocol.seed = p.at("seed").get<std::uint64_t>();
    m.protocol.per_class_head = p.at("per_class_head").get<std::size_t>();
    m.protocol.val_per_class = p.at("val_per_class").get<std::size_t>();
    m.protocol.test_per_class = p.at("test_per_class").get<std::size_t>();
    m.protocol.lt_max_count = p.at("lt_max_count").get<std::size_t>();
    m.protocol.minority_classes = p.at("minority_classes").get<std::vector<ClassId>>();
    m.train_counts = j.at("train_counts").get<std::vector<std::size_t>>();
    if (j.contains("warnings")) m.warnings = j.at("warnings").get<std::vector<std::string>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("manifest JSON: ") + e.what());
  }
}

/// Checks disjointness, id range and train_counts consistency.
inline void validate_manifest(const SplitManifest& m, const Graph& g) {
  std::vector<int> owner(g.num_nodes(), -1);
  auto mark = [&](const std::vector<NodeId>& s, int tag, const char* name) {
    for (NodeId v : s) {
      LTE4G_REQUIRE(v < g.num_nodes(), ValidationError,
                    std::string("manifest: ") + name + " id out of range");
      LTE4G_REQUIRE(owner[v] == -1, ValidationError,
                    std::string("manifest: node ") + std::to_string(v) + " appears twice");
      owner[v] = tag;
    }
  };
  mark(m.train, 0, "train");
  mark(m.val, 1, "val");
  mark(m.test, 2, "test");
  std::vector<std::size_t> counts(g.class_count(), 0);
  for (NodeId v : m.train) ++counts[g.label(v)];
  LTE4G_REQUIRE(counts == m.train_counts, ValidationError, "manifest: train_counts inconsistent");
}

}  // namespace lte4g
