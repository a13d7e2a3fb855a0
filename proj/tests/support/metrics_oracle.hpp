// Brute-force reference metrics computed sample by sample, sharing no code
// with the library implementation.
#pragma once

#include <cstddef>
#include <vector>

namespace cgn::testing {

struct OracleMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double auc = 0.0;
  std::vector<double> class_precision, class_recall, class_f1, class_auc;
  std::vector<bool> auc_defined;
};

inline std::size_t oracle_argmax(const std::vector<double>& p) {
  std::size_t best = 0;
  for (std::size_t k = 0; k < p.size(); ++k)
    if (p[k] > p[best]) best = k;
  return best;
}

/// AUC as the fraction of (positive, negative) pairs ranked correctly, ties
/// counting one half.
inline double pairwise_auc(const std::vector<double>& score, const std::vector<bool>& positive) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < score.size(); ++i) {
    if (!positive[i]) continue;
    for (std::size_t j = 0; j < score.size(); ++j) {
      if (positive[j]) continue;
      pairs += 1.0;
      if (score[i] > score[j]) wins += 1.0;
      else if (score[i] == score[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

inline OracleMetrics oracle_metrics(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& pred,
                                    const std::vector<std::vector<double>>& probs, std::size_t classes) {
  OracleMetrics o;
  const std::size_t n = truth.size();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) correct += truth[i] == pred[i];
  o.accuracy = double(correct) / double(n);
  std::size_t auc_count = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (pred[i] == c && truth[i] == c) tp += 1;
      if (pred[i] == c && truth[i] != c) fp += 1;
      if (pred[i] != c && truth[i] == c) fn += 1;
    }
    const double p = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double r = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    const double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    o.class_precision.push_back(p);
    o.class_recall.push_back(r);
    o.class_f1.push_back(f);
    o.precision += p / double(classes);
    o.recall += r / double(classes);
    o.f1 += f / double(classes);

    std::vector<double> s;
    std::vector<bool> pos;
    std::size_t npos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      s.push_back(probs[i][c]);
      pos.push_back(truth[i] == c);
      npos += truth[i] == c;
    }
    const bool defined = npos > 0 && npos < n;
    o.auc_defined.push_back(defined);
    o.class_auc.push_back(defined ? pairwise_auc(s, pos) : 0.0);
    if (defined) {
      o.auc += o.class_auc.back();
      ++auc_count;
    }
  }
  o.auc /= double(auc_count);
  return o;
}

}  // namespace cgn::testing
