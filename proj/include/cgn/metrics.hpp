// Multiclass classification metrics: one-vs-rest counts, macro precision /
// recall / F1, accuracy as trace over total, and rank-statistic ROC AUC.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "cgn/concept_graph.hpp"
#include "cgn/errors.hpp"
#include "json.hpp"

namespace cgn {

struct ConfusionCounts {
  std::size_t classes = 0;
  std::size_t total = 0;
  std::vector<std::vector<std::size_t>> matrix;  // [truth][predicted]
  std::vector<std::size_t> tp, fp, tn, fn;
};

inline ConfusionCounts confusion_matrix(std::span<const std::size_t> truth,
                                        std::span<const std::size_t> predicted,
                                        std::size_t classes = kNumPlaneClasses) {
  if (truth.size() != predicted.size())
    throw ContractError("confusion_matrix: label sequences differ in length");
  ConfusionCounts c;
  c.classes = classes;
  c.total = truth.size();
  c.matrix.assign(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= classes || predicted[i] >= classes)
      throw ContractError("confusion_matrix: label out of range at sample " + std::to_string(i));
    ++c.matrix[truth[i]][predicted[i]];
  }
  c.tp.assign(classes, 0);
  c.fp.assign(classes, 0);
  c.tn.assign(classes, 0);
  c.fn.assign(classes, 0);
  for (std::size_t k = 0; k < classes; ++k) {
    std::size_t row = 0, col = 0;
    for (std::size_t j = 0; j < classes; ++j) {
      row += c.matrix[k][j];
      col += c.matrix[j][k];
    }
    c.tp[k] = c.matrix[k][k];
    c.fn[k] = row - c.tp[k];
    c.fp[k] = col - c.tp[k];
    c.tn[k] = c.total - c.tp[k] - c.fn[k] - c.fp[k];
  }
  return c;
}

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct PrecisionRecallF1 {
  std::vector<ClassScores> per_class;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline double safe_ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

inline ClassScores class_scores(std::size_t tp, std::size_t fp, std::size_t fn) {
  ClassScores s;
  s.precision = safe_ratio(static_cast<double>(tp), static_cast<double>(tp + fp));
  s.recall = safe_ratio(static_cast<double>(tp), static_cast<double>(tp + fn));
  s.f1 = safe_ratio(2.0 * s.precision * s.recall, s.precision + s.recall);
  return s;
}

/// Per-class values with 0/0 := 0; macro values are unweighted class means.
inline PrecisionRecallF1 prf1(const ConfusionCounts& c) {
  PrecisionRecallF1 r;
  for (std::size_t k = 0; k < c.classes; ++k) {
    r.per_class.push_back(class_scores(c.tp[k], c.fp[k], c.fn[k]));
    r.precision += r.per_class.back().precision;
    r.recall += r.per_class.back().recall;
    r.f1 += r.per_class.back().f1;
  }
  if (c.classes) {
    const double k = static_cast<double>(c.classes);
    r.precision /= k;
    r.recall /= k;
    r.f1 /= k;
  }
  return r;
}

inline double accuracy(const ConfusionCounts& c) {
  if (c.total == 0) throw ContractError("accuracy: no samples");
  std::size_t diag = 0;
  for (std::size_t k = 0; k < c.classes; ++k) diag += c.matrix[k][k];
  return static_cast<double>(diag) / static_cast<double>(c.total);
}

/// Binary ROC AUC of `scores` against `positive` via the Mann-Whitney rank
/// statistic with midranks for ties. Requires both classes present.
inline double binary_auc(std::span<const double> scores, const std::vector<bool>& positive) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t t = i; t < j; ++t)
      if (positive[order[t]]) {
        rank_sum += midrank;
        ++pos;
      }
    i = j;
  }
  const double p = static_cast<double>(pos), q = static_cast<double>(n - pos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

struct AucResult {
  double macro = 0.0;
  std::vector<double> per_class;  // NaN where the class was skipped
  std::vector<std::size_t> skipped;
};

/// One-vs-rest AUC per class from probability vectors, macro-averaged over the
/// classes that have at least one positive and one negative sample.
inline AucResult auc_ovr(std::span<const std::size_t> truth,
                         std::span<const std::vector<double>> probabilities,
                         std::size_t classes = kNumPlaneClasses) {
  if (truth.size() != probabilities.size())
    throw ContractError("auc_ovr: label and score counts differ");
  AucResult r;
  std::size_t computed = 0;
  std::vector<double> scores(truth.size());
  std::vector<bool> positive(truth.size());
  for (std::size_t k = 0; k < classes; ++k) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (probabilities[i].size() != classes)
        throw ContractError("auc_ovr: probability vector " + std::to_string(i) + " has wrong length");
      scores[i] = probabilities[i][k];
      positive[i] = truth[i] == k;
      pos += positive[i];
    }
    if (pos == 0 || pos == truth.size()) {
      r.per_class.push_back(std::numeric_limits<double>::quiet_NaN());
      r.skipped.push_back(k);
      continue;
    }
    r.per_class.push_back(binary_auc(scores, positive));
    r.macro += r.per_class.back();
    ++computed;
  }
  if (computed == 0) throw ContractError("auc_ovr: no class has both positive and negative samples");
  r.macro /= static_cast<double>(computed);
  return r;
}

struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double auc = 0.0;
  ConfusionCounts counts;
  PrecisionRecallF1 per_class;
  AucResult auc_detail;
};

inline Metrics compute_metrics(std::span<const std::size_t> truth,
                               std::span<const std::vector<double>> probabilities,
                               std::size_t classes = kNumPlaneClasses) {
  std::vector<std::size_t> predicted;
  predicted.reserve(probabilities.size());
  for (const auto& p : probabilities) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < p.size(); ++k)
      if (p[k] > p[best]) best = k;
    predicted.push_back(best);
  }
  Metrics m;
  m.counts = confusion_matrix(truth, predicted, classes);
  m.accuracy = accuracy(m.counts);
  m.per_class = prf1(m.counts);
  m.precision = m.per_class.precision;
  m.recall = m.per_class.recall;
  m.f1 = m.per_class.f1;
  m.auc_detail = auc_ovr(truth, probabilities, classes);
  m.auc = m.auc_detail.macro;
  return m;
}

inline nlohmann::ordered_json metrics_to_json(const Metrics& m) {
  nlohmann::ordered_json j;
  j["accuracy"] = m.accuracy;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = m.f1;
  j["auc"] = m.auc;
  nlohmann::ordered_json per;
  for (std::size_t k = 0; k < m.counts.classes; ++k) {
    nlohmann::ordered_json c;
    c["precision"] = m.per_class.per_class[k].precision;
    c["recall"] = m.per_class.per_class[k].recall;
    c["f1"] = m.per_class.per_class[k].f1;
    const double auc = m.auc_detail.per_class[k];
    c["auc"] = std::isnan(auc) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(auc);
    c["tp"] = m.counts.tp[k];
    c["fp"] = m.counts.fp[k];
    c["tn"] = m.counts.tn[k];
    c["fn"] = m.counts.fn[k];
    const std::string name =
        k < kNumPlaneClasses ? std::string(kPlaneNames[k]) : "class" + std::to_string(k);
    per[name] = std::move(c);
  }
  j["per_class"] = std::move(per);
  j["confusion"] = m.counts.matrix;
  return j;
}

}  // namespace cgn
