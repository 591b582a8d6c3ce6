#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lte4g/error.hpp"
#include "lte4g/graph.hpp"
#include "lte4g/partition.hpp"

namespace lte4g {

/// cm[t][p] counts samples of true class t predicted as p.
struct ConfusionMatrix {
  std::size_t classes = 0;
  std::vector<std::size_t> counts;  // row-major classes x classes

  explicit ConfusionMatrix(std::size_t c = 0) : classes(c), counts(c * c, 0) {}
  std::size_t& at(std::size_t t, std::size_t p) { return counts[t * classes + p]; }
  std::size_t at(std::size_t t, std::size_t p) const { return counts[t * classes + p]; }
  std::size_t total() const {
    std::size_t s = 0;
    for (auto v : counts) s += v;
    return s;
  }
};

inline ConfusionMatrix confusion_matrix(std::span<const std::size_t> preds,
                                        std::span<const std::size_t> labels, std::size_t classes) {
  LTE4G_REQUIRE(preds.size() == labels.size(), ContractError,
                "confusion_matrix: preds/labels length mismatch");
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    LTE4G_REQUIRE(labels[i] < classes && preds[i] < classes, ContractError,
                  "confusion_matrix: class id out of range at sample " + std::to_string(i));
    ++cm.at(labels[i], preds[i]);
  }
  return cm;
}

struct MetricsReport {
  double acc = 0.0;
  double bacc = 0.0;
  double macro_f1 = 0.0;
  double gmeans = 0.0;
  std::vector<double> recall;
  std::vector<double> precision;
  std::vector<double> f1;
  std::vector<std::size_t> support;  // true-class counts
  ConfusionMatrix cm;
};

/// Recall-based metrics average over classes that occur in the evaluated labels; macro-F1
/// averages over classes that occur in labels or predictions. G-Means is 0 as soon as one
/// averaged recall is 0.
inline MetricsReport compute_metrics(const ConfusionMatrix& cm) {
  const std::size_t c = cm.classes;
  MetricsReport r;
  r.cm = cm;
  r.recall.assign(c, 0.0);
  r.precision.assign(c, 0.0);
  r.f1.assign(c, 0.0);
  r.support.assign(c, 0);
  std::vector<std::size_t> col(c, 0);
  std::size_t correct = 0, total = 0;
  for (std::size_t t = 0; t < c; ++t)
    for (std::size_t p = 0; p < c; ++p) {
      r.support[t] += cm.at(t, p);
      col[p] += cm.at(t, p);
      total += cm.at(t, p);
      if (t == p) correct += cm.at(t, p);
    }
  r.acc = total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
  // Recalls are summed per support group, so a class-balanced set yields correct/total
  // bit for bit, the same expression as acc.
  std::map<std::size_t, std::size_t> tp_by_support;
  double log_sum = 0.0, f1_sum = 0.0;
  std::size_t present = 0, f1_classes = 0;
  bool zero_recall = false;
  for (std::size_t k = 0; k < c; ++k) {
    const double tp = static_cast<double>(cm.at(k, k));
    if (r.support[k] > 0) r.recall[k] = tp / static_cast<double>(r.support[k]);
    if (col[k] > 0) r.precision[k] = tp / static_cast<double>(col[k]);
    const double pr = r.precision[k] + r.recall[k];
    r.f1[k] = pr > 0.0 ? 2.0 * r.precision[k] * r.recall[k] / pr : 0.0;
    if (r.support[k] > 0) {
      ++present;
      tp_by_support[r.support[k]] += cm.at(k, k);
      if (r.recall[k] == 0.0) zero_recall = true;
      else log_sum += std::log(r.recall[k]);
    }
    if (r.support[k] > 0 || col[k] > 0) {
      ++f1_classes;
      f1_sum += r.f1[k];
    }
  }
  if (present > 0) {
    for (const auto& [support, tp] : tp_by_support)
      r.bacc += static_cast<double>(tp) / static_cast<double>(support * present);
    r.gmeans = zero_recall ? 0.0 : std::exp(log_sum / static_cast<double>(present));
  }
  if (f1_classes > 0) r.macro_f1 = f1_sum / static_cast<double>(f1_classes);
  return r;
}

inline MetricsReport evaluate(std::span<const std::size_t> preds, std::span<const std::size_t> labels,
                              std::size_t classes) {
  return compute_metrics(confusion_matrix(preds, labels, classes));
}

struct SubsetScore {
  std::size_t count = 0;
  double bacc = 0.0;
};

/// bAcc inside each class-side x degree bucket of the evaluated nodes. Buckets with no
/// nodes are absent (nullopt), not zero.
inline std::array<std::optional<SubsetScore>, 4> subset_breakdown(
    std::span<const std::size_t> preds, std::span<const NodeId> nodes, const Graph& g,
    std::span<const ClassId> head_classes, std::size_t threshold) {
  LTE4G_REQUIRE(preds.size() == nodes.size(), ContractError, "subset_breakdown: length mismatch");
  std::array<std::vector<std::size_t>, 4> bp, bl;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const NodeId v = nodes[i];
    const bool head_class =
        std::find(head_classes.begin(), head_classes.end(), g.label(v)) != head_classes.end();
    const bool head_deg = g.degree(v) > threshold;
    const Subset s = head_class ? (head_deg ? Subset::HH : Subset::HT)
                                : (head_deg ? Subset::TH : Subset::TT);
    bp[static_cast<std::size_t>(s)].push_back(preds[i]);
    bl[static_cast<std::size_t>(s)].push_back(g.label(v));
  }
  std::array<std::optional<SubsetScore>, 4> out;
  for (std::size_t k = 0; k < 4; ++k) {
    if (bl[k].empty()) continue;
    out[k] = SubsetScore{bl[k].size(), evaluate(bp[k], bl[k], g.class_count()).bacc};
  }
  return out;
}

inline nlohmann::ordered_json to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["acc"] = r.acc;
  j["bacc"] = r.bacc;
  j["macro_f1"] = r.macro_f1;
  j["gmeans"] = r.gmeans;
  j["recall"] = r.recall;
  j["precision"] = r.precision;
  j["f1"] = r.f1;
  j["support"] = r.support;
  std::vector<std::vector<std::size_t>> rows(r.cm.classes);
  for (std::size_t t = 0; t < r.cm.classes; ++t)
    for (std::size_t p = 0; p < r.cm.classes; ++p) rows[t].push_back(r.cm.at(t, p));
  j["confusion"] = rows;
  return j;
}

inline nlohmann::ordered_json to_json(const std::array<std::optional<SubsetScore>, 4>& b) {
  nlohmann::ordered_json j;
  for (Subset s : kAllSubsets) {
    const auto& v = b[static_cast<std::size_t>(s)];
    if (v) j[to_string(s)] = {{"count", v->count}, {"bacc", v->bacc}};
    else j[to_string(s)] = nullptr;
  }
  return j;
}

/// One row per aggregate metric, then one row per class.
inline std::string to_csv(const MetricsReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "scope,metric,value\n";
  os << "overall,acc," << r.acc << "\n";
  os << "overall,bacc," << r.bacc << "\n";
  os << "overall,macro_f1," << r.macro_f1 << "\n";
  os << "overall,gmeans," << r.gmeans << "\n";
  for (std::size_t c = 0; c < r.recall.size(); ++c) {
    os << "class_" << c << ",recall," << r.recall[c] << "\n";
    os << "class_" << c << ",precision," << r.precision[c] << "\n";
    os << "class_" << c << ",f1," << r.f1[c] << "\n";
    os << "class_" << c << ",support," << r.support[c] << "\n";
  }
  return os.str();
}

}  // namespace lte4g
