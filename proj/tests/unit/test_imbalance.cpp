#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "lte4g/imbalance.hpp"
#include "support/oracles.hpp"

using namespace lte4g;

namespace {

// Class sizes of Cora, shuffled so class id order differs from size order.
const std::vector<std::size_t> kCoraSizes{351, 217, 418, 818, 426, 298, 180};

const Graph& cora_like() {
  static const Graph g = sbm_generate(7, kCoraSizes, 0.01, 0.0005, 1.0, 8);
  return g;
}

std::vector<std::size_t> sorted_counts(const SplitManifest& m, const Graph& g) {
  const auto order = imbalance_detail::classes_by_size(g);
  std::vector<std::size_t> out;
  for (ClassId c : order) out.push_back(m.train_counts[c]);
  return out;
}

std::vector<double> proportions(const std::vector<std::size_t>& counts) {
  const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
  std::vector<double> p;
  for (auto c : counts) p.push_back(100.0 * static_cast<double>(c) / total);
  return p;
}

std::vector<std::size_t> per_class(const std::vector<NodeId>& s, const Graph& g) {
  std::vector<std::size_t> c(g.class_count(), 0);
  for (NodeId v : s) ++c[g.label(v)];
  return c;
}

}  // namespace

TEST(ManualImbalance, ThreeClassesTenPercent) {
  const auto m = apply_manual_imbalance(cora_like(), 3, 0.10, 0);
  EXPECT_EQ(sorted_counts(m, cora_like()), (std::vector<std::size_t>{20, 20, 20, 20, 2, 2, 2}));
  const std::vector<double> table{23.3, 23.3, 23.3, 23.3, 2.4, 2.4, 2.4};
  const auto p = proportions(sorted_counts(m, cora_like()));
  for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(p[i], table[i], 0.1) << i;
}

TEST(ManualImbalance, FiveClassesFivePercent) {
  const auto m = apply_manual_imbalance(cora_like(), 5, 0.05, 0);
  EXPECT_EQ(sorted_counts(m, cora_like()), (std::vector<std::size_t>{20, 20, 1, 1, 1, 1, 1}));
  const std::vector<double> table{44.4, 44.4, 2.2, 2.2, 2.2, 2.2, 2.2};
  const auto p = proportions(sorted_counts(m, cora_like()));
  for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(p[i], table[i], 0.1) << i;
}

TEST(ManualImbalance, OtherTableRows) {
  const std::vector<std::pair<std::pair<std::size_t, double>, std::vector<double>>> rows{
      {{3, 0.05}, {24.1, 24.1, 24.1, 24.1, 1.2, 1.2, 1.2}},
      {{5, 0.10}, {40.0, 40.0, 4.0, 4.0, 4.0, 4.0, 4.0}}};
  for (const auto& [cfg, table] : rows) {
    const auto m = apply_manual_imbalance(cora_like(), cfg.first, cfg.second, 1);
    const auto p = proportions(sorted_counts(m, cora_like()));
    for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(p[i], table[i], 0.1) << cfg.first << "/" << cfg.second;
  }
}

TEST(ManualImbalance, MinorityAreSmallestClasses) {
  const auto m = apply_manual_imbalance(cora_like(), 3, 0.10, 0);
  // sizes 298, 217, 180 belong to class ids 5, 1, 6
  EXPECT_EQ(m.protocol.minority_classes, (std::vector<ClassId>{1, 5, 6}));
  EXPECT_EQ(m.train_counts[3], 20u);
  EXPECT_EQ(m.train_counts[6], 2u);
}

TEST(ManualImbalance, RatioOneIsBalanced) {
  const auto m = apply_manual_imbalance(cora_like(), 3, 1.0, 0);
  for (auto c : m.train_counts) EXPECT_EQ(c, 20u);
}

TEST(ManualImbalance, EqualValTestPerClassAndDisjoint) {
  const auto m = apply_manual_imbalance(cora_like(), 5, 0.05, 4);
  EXPECT_NO_THROW(validate_manifest(m, cora_like()));
  for (auto c : per_class(m.val, cora_like())) EXPECT_EQ(c, 25u);
  for (auto c : per_class(m.test, cora_like())) EXPECT_EQ(c, 55u);
}

TEST(ManualImbalance, Reproducible) {
  const auto a = apply_manual_imbalance(cora_like(), 3, 0.1, 11);
  const auto b = apply_manual_imbalance(cora_like(), 3, 0.1, 11);
  const auto c = apply_manual_imbalance(cora_like(), 3, 0.1, 12);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  EXPECT_NE(a.train, c.train);
}

TEST(ManualImbalance, InsufficientClassNamesIt) {
  const std::vector<std::size_t> sizes{100, 30};
  const Graph g = sbm_generate(1, sizes, 0.1, 0.01, 1.0);
  try {
    apply_manual_imbalance(g, 1, 0.5, 0);
    FAIL() << "expected ProtocolError";
  } catch (const ProtocolError& e) {
    EXPECT_NE(std::string(e.what()).find("class 1"), std::string::npos) << e.what();
  }
}

TEST(ManualImbalance, RejectsBadArguments) {
  EXPECT_THROW(apply_manual_imbalance(cora_like(), 7, 0.1, 0), ProtocolError);
  EXPECT_THROW(apply_manual_imbalance(cora_like(), 3, 0.0, 0), ProtocolError);
  EXPECT_THROW(apply_manual_imbalance(cora_like(), 3, 1.5, 0), ProtocolError);
}

TEST(LongTail, GeometricProfileMatchesTable) {
  const auto m = apply_longtail(cora_like(), 0.01, 0);
  const auto counts = sorted_counts(m, cora_like());
  const double max = static_cast<double>(818 - 25 - 55);
  for (std::size_t i = 0; i < counts.size(); ++i)
    EXPECT_EQ(counts[i], static_cast<std::size_t>(std::round(max * std::pow(0.01, i / 6.0)))) << i;
  const std::vector<double> table{54.0, 25.0, 11.6, 5.4, 2.4, 1.2, 0.5};
  const auto p = proportions(counts);
  for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(p[i], table[i], 0.2) << i;
  EXPECT_NEAR(static_cast<double>(counts.front()) / static_cast<double>(counts.back()), 100.0, 10.0);
}

TEST(LongTail, KeepsHighestDegreeNodes) {
  const auto m = apply_longtail(cora_like(), 0.01, 0);
  const Graph& g = cora_like();
  std::set<NodeId> taken(m.train.begin(), m.train.end());
  taken.insert(m.val.begin(), m.val.end());
  taken.insert(m.test.begin(), m.test.end());
  std::vector<std::size_t> min_train(g.class_count(), SIZE_MAX), max_left(g.class_count(), 0);
  for (NodeId v : m.train) min_train[g.label(v)] = std::min(min_train[g.label(v)], g.degree(v));
  for (NodeId v = 0; v < g.num_nodes(); ++v)
    if (!taken.count(v)) max_left[g.label(v)] = std::max(max_left[g.label(v)], g.degree(v));
  for (ClassId c = 0; c < g.class_count(); ++c) EXPECT_LE(max_left[c], min_train[c]) << c;
}

TEST(LongTail, MonotoneAcrossSortedClasses) {
  for (double ratio : {0.01, 0.05, 0.2, 0.5}) {
    const auto counts = sorted_counts(apply_longtail(cora_like(), ratio, 3), cora_like());
    EXPECT_TRUE(std::is_sorted(counts.rbegin(), counts.rend())) << ratio;
  }
}

TEST(LongTail, RatioOneGivesEqualCounts) {
  LongTailOptions opt;
  opt.max_count = 60;
  const auto m = apply_longtail(cora_like(), 1.0, 0, opt);
  for (auto c : m.train_counts) EXPECT_EQ(c, 60u);
}

TEST(LongTail, ClampsTinyTargetsAndWarns) {
  LongTailOptions opt;
  opt.max_count = 10;
  const auto m = apply_longtail(cora_like(), 0.01, 0, opt);
  EXPECT_EQ(sorted_counts(m, cora_like()).back(), 1u);
  EXPECT_FALSE(m.warnings.empty());
  EXPECT_NO_THROW(validate_manifest(m, cora_like()));
}

TEST(Natural, StratifiedTenPercent) {
  const Graph& g = cora_like();
  const auto m = split_natural(g, 5);
  EXPECT_NO_THROW(validate_manifest(m, g));
  const auto sizes = g.class_sizes();
  const auto tr = per_class(m.train, g), va = per_class(m.val, g), te = per_class(m.test, g);
  for (ClassId c = 0; c < g.class_count(); ++c) {
    EXPECT_GE(tr[c], 1u);
    EXPECT_LE(std::abs(static_cast<double>(tr[c]) - 0.1 * static_cast<double>(sizes[c])), 1.0);
    EXPECT_EQ(tr[c] + va[c] + te[c], sizes[c]);
  }
  EXPECT_EQ(m.train.size() + m.val.size() + m.test.size(), g.num_nodes());
}

TEST(Natural, LargeGraphTrainSizeNearTenPercent) {
  std::vector<std::size_t> sizes(70, 0);
  std::mt19937_64 rng(8);
  std::size_t total = 0;
  for (auto& s : sizes) total += (s = 15 + rng() % 550);
  const Graph g = sbm_generate(2, sizes, 0.0, 0.0, 1.0, 2);
  const auto m = split_natural(g, 0);
  EXPECT_NEAR(static_cast<double>(m.train.size()), 0.1 * static_cast<double>(total), 70.0);
  EXPECT_EQ(m.train.size(), m.val.size());
}

TEST(Natural, TooSmallClassFails) {
  const std::vector<std::size_t> sizes{10, 2};
  EXPECT_THROW(split_natural(sbm_generate(1, sizes, 0.2, 0.1, 1.0), 0), ProtocolError);
}

TEST(Manifest, JsonRoundTripAndKeyOrder) {
  const auto m = apply_manual_imbalance(cora_like(), 3, 0.1, 2);
  const auto j = to_json(m);
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  EXPECT_EQ(keys[0], "train");
  EXPECT_EQ(keys[1], "val");
  EXPECT_EQ(keys[2], "test");
  EXPECT_EQ(keys[3], "protocol");
  const auto back = manifest_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(to_json(back).dump(), j.dump());
}

TEST(Manifest, ValidationCatchesCorruption) {
  const Graph& g = cora_like();
  auto m = apply_manual_imbalance(g, 3, 0.1, 2);
  auto overlap = m;
  overlap.val.push_back(overlap.train.front());
  EXPECT_THROW(validate_manifest(overlap, g), ValidationError);
  auto range = m;
  range.test.push_back(g.num_nodes());
  EXPECT_THROW(validate_manifest(range, g), ValidationError);
  auto counts = m;
  counts.train_counts[0] += 1;
  EXPECT_THROW(validate_manifest(counts, g), ValidationError);
  EXPECT_THROW(manifest_from_json(nlohmann::json::parse("{\"train\":[]}")), ValidationError);
}
