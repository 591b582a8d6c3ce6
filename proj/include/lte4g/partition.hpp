#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "lte4g/graph.hpp"
#include "lte4g/imbalance.hpp"

namespace lte4g {

enum class Subset : std::size_t { HH = 0, HT = 1, TH = 2, TT = 3 };
enum class Side : std::size_t { head = 0, tail = 1 };

inline constexpr std::array<Subset, 4> kAllSubsets{Subset::HH, Subset::HT, Subset::TH, Subset::TT};

inline const char* to_string(Subset s) {
  constexpr const char* names[] = {"HH", "HT", "TH", "TT"};
  return names[static_cast<std::size_t>(s)];
}
inline Side side_of(Subset s) { return (s == Subset::HH || s == Subset::HT) ? Side::head : Side::tail; }
inline bool is_head_degree(Subset s) { return s == Subset::HH || s == Subset::TH; }

/// How train nodes are assigned to subsets. `balanced` is the class-cardinality x
/// degree rule; the random modes are ablation controls that replace one or both criteria
/// with a random assignment of the same sizes.
enum class SplitMode { balanced, random_class, random_degree, random_both };

inline const char* to_string(SplitMode m) {
  switch (m) {
    case SplitMode::balanced: return "balanced";
    case SplitMode::random_class: return "random_class";
    case SplitMode::random_degree: return "random_degree";
    case SplitMode::random_both: return "random_both";
  }
  return "?";
}

inline SplitMode split_mode_from_string(const std::string& s) {
  if (s == "balanced") return SplitMode::balanced;
  if (s == "random_class") return SplitMode::random_class;
  if (s == "random_degree") return SplitMode::random_degree;
  if (s == "random_both") return SplitMode::random_both;
  throw ConfigError("unknown split mode '" + s + "'");
}

struct SubsetPartition {
  std::vector<ClassId> head_classes;  // sorted ids
  std::vector<ClassId> tail_classes;
  std::array<std::vector<NodeId>, 4> subsets;  // indexed by Subset, sorted ids
  std::size_t degree_threshold = 5;
  double head_class_fraction = 0.6;
  SplitMode mode = SplitMode::balanced;
  std::vector<std::string> warnings;

  const std::vector<NodeId>& operator[](Subset s) const { return subsets[static_cast<std::size_t>(s)]; }
  std::vector<NodeId>& operator[](Subset s) { return subsets[static_cast<std::size_t>(s)]; }

  bool is_head_class(ClassId c) const {
    return std::binary_search(head_classes.begin(), head_classes.end(), c);
  }

  /// Classes scored by the heads of one side. Under random class assignment a side may
  /// contain any class, so its heads score all of them.
  std::vector<ClassId> side_classes(Side s) const {
    if (mode == SplitMode::random_class || mode == SplitMode::random_both) {
      std::vector<ClassId> all(head_classes);
      all.insert(all.end(), tail_classes.begin(), tail_classes.end());
      std::sort(all.begin(), all.end());
      return all;
    }
    return s == Side::head ? head_classes : tail_classes;
  }

  /// Union of the two subsets on one side, sorted.
  std::vector<NodeId> side_nodes(Side s) const {
    const auto& a = (*this)[s == Side::head ? Subset::HH : Subset::TH];
    const auto& b = (*this)[s == Side::head ? Subset::HT : Subset::TT];
    std::vector<NodeId> out;
    std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
  }
};

struct ClassSplit {
  std::vector<ClassId> head;
  std::vector<ClassId> tail;
  std::vector<std::string> warnings;
};

/// Top ceil(p * |C|) classes by training cardinality become head classes. Ties are broken
/// by full-graph cardinality, then by lower class id. Both sides are kept non-empty.
inline ClassSplit split_classes(const SplitManifest& m, const Graph& g, double p) {
  LTE4G_REQUIRE(p > 0.0 && p < 1.0, ContractError, "split_classes: p must lie in (0,1)");
  const std::size_t c = g.class_count();
  LTE4G_REQUIRE(c >= 2, ContractError, "split_classes: need at least two classes");
  std::vector<std::size_t> train(c, 0);
  for (NodeId v : m.train) ++train[g.label(v)];
  const auto full = g.class_sizes();
  std::vector<ClassId> order(c);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](ClassId a, ClassId b) {
    if (train[a] != train[b]) return train[a] > train[b];
    if (full[a] != full[b]) return full[a] > full[b];
    return a < b;
  });
  ClassSplit out;
  // Guard against p*|C| landing a hair above an integer through rounding.
  std::size_t head = static_cast<std::size_t>(std::ceil(p * static_cast<double>(c) - 1e-9));
  if (head >= c) {
    out.warnings.push_back("split_classes: p=" + std::to_string(p) +
                           " leaves no tail class; clamped head count to |C|-1");
    head = c - 1;
  }
  if (head == 0) head = 1;
  out.head.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(head));
  out.tail.assign(order.begin() + static_cast<std::ptrdiff_t>(head), order.end());
  std::sort(out.head.begin(), out.head.end());
  std::sort(out.tail.begin(), out.tail.end());
  return out;
}

/// Tail-degree flag per node: degree <= threshold.
inline std::vector<bool> split_degree(const Graph& g, std::size_t threshold) {
  std::vector<bool> tail(g.num_nodes());
  for (NodeId v = 0; v < g.num_nodes(); ++v) tail[v] = g.degree(v) <= threshold;
  return tail;
}

inline SubsetPartition make_subsets(const SplitManifest& m, const Graph& g, double p,
                                    std::size_t threshold, SplitMode mode = SplitMode::balanced,
                                    std::uint64_t seed = 0) {
  SubsetPartition part;
  ClassSplit cs = split_classes(m, g, p);
  part.head_classes = cs.head;
  part.tail_classes = cs.tail;
  part.warnings = cs.warnings;
  part.degree_threshold = threshold;
  part.head_class_fraction = p;
  part.mode = mode;

  const auto tail_degree = split_degree(g, threshold);
  std::array<std::vector<NodeId>, 4> balanced;
  for (NodeId v : m.train) {
    const bool head_class = part.is_head_class(g.label(v));
    const bool head_deg = !tail_degree[v];
    const Subset s = head_class ? (head_deg ? Subset::HH : Subset::HT)
                                : (head_deg ? Subset::TH : Subset::TT);
    balanced[static_cast<std::size_t>(s)].push_back(v);
  }

  std::mt19937_64 rng(seed ^ 0x5eedc1a55ull);
  auto sz = [&](Subset s) { return balanced[static_cast<std::size_t>(s)].size(); };
  switch (mode) {
    case SplitMode::balanced:
      part.subsets = balanced;
      break;
    case SplitMode::random_degree:
    case SplitMode::random_class: {
      // One axis is kept; membership along the other is drawn at random inside each
      // group, so all four subset sizes match the balanced split.
      const bool keep_class = mode == SplitMode::random_degree;
      const std::array<std::pair<Subset, Subset>, 2> groups =
          keep_class ? std::array{std::pair{Subset::HH, Subset::HT}, std::pair{Subset::TH, Subset::TT}}
                     : std::array{std::pair{Subset::HH, Subset::TH}, std::pair{Subset::HT, Subset::TT}};
      for (const auto& [a, b] : groups) {
        std::vector<NodeId> pool = balanced[static_cast<std::size_t>(a)];
        pool.insert(pool.end(), balanced[static_cast<std::size_t>(b)].begin(),
                    balanced[static_cast<std::size_t>(b)].end());
        std::sort(pool.begin(), pool.end());
        std::shuffle(pool.begin(), pool.end(), rng);
        part[a].assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(sz(a)));
        part[b].assign(pool.begin() + static_cast<std::ptrdiff_t>(sz(a)), pool.end());
      }
      break;
    }
    case SplitMode::random_both: {
      std::vector<NodeId> all = m.train;
      std::shuffle(all.begin(), all.end(), rng);
      std::size_t pos = 0;
      for (Subset s : kAllSubsets) {
        part[s].assign(all.begin() + static_cast<std::ptrdiff_t>(pos),
                       all.begin() + static_cast<std::ptrdiff_t>(pos + sz(s)));
        pos += sz(s);
      }
      break;
    }
  }
  for (Subset s : kAllSubsets) {
    std::sort(part[s].begin(), part[s].end());
    if (part[s].empty()) part.warnings.push_back(std::string("subset ") + to_string(s) + " is empty");
  }
  return part;
}

inline nlohmann::ordered_json to_json(const SubsetPartition& p) {
  nlohmann::ordered_json j;
  j["head_classes"] = p.head_classes;
  j["tail_classes"] = p.tail_classes;
  j["degree_threshold"] = p.degree_threshold;
  j["head_class_fraction"] = p.head_class_fraction;
  j["mode"] = to_string(p.mode);
  for (Subset s : kAllSubsets) j["subsets"][to_string(s)] = p[s];
  j["warnings"] = p.warnings;
  return j;
}

inline SubsetPartition partition_from_json(const nlohmann::json& j) {
  try {
    SubsetPartition p;
    p.head_classes = j.at("head_classes").get<std::vector<ClassId>>();
    p.tail_classes = j.at("tail_classes").get<std::vector<ClassId>>();
    p.degree_threshold = j.at("degree_threshold").get<std::size_t>();
    p.head_class_fraction = j.at("head_class_fraction").get<double>();
    p.mode = split_mode_from_string(j.at("mode").get<std::string>());
    for (Subset s : kAllSubsets) p[s] = j.at("subsets").at(to_string(s)).get<std::vector<NodeId>>();
    p.warnings = j.at("warnings").get<std::vector<std::string>>();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("partition JSON: ") + e.what());
  }
}

}  // namespace lte4g
