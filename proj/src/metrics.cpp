#include "cpijit/metrics.hpp"

#include <cmath>
#include <vector>

#include "cpijit/changeset.hpp"
#include "cpijit/error.hpp"
#include "cpijit/rng.hpp"

namespace cpijit {

double auc_roc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) fail(ErrorCode::kDimensionMismatch, "scores and labels differ in length");
  double pos = 0.0, neg = 0.0;
  for (int l : labels) {
    if (l == 1) {
      pos += 1.0;
    } else if (l == 0) {
      neg += 1.0;
    } else {
      fail(ErrorCode::kDomain, "labels must be 0 or 1");
    }
  }
  if (pos == 0.0 || neg == 0.0) fail(ErrorCode::kUndefinedMetric, "AUC needs both classes");
  const std::vector<double> ranks = average_ranks(scores);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (labels[i] == 1) rank_sum += ranks[i];
  }
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

ClassificationMetrics classification_metrics(std::span<const double> scores, std::span<const int> labels,
                                             double threshold) {
  if (scores.size() != labels.size()) fail(ErrorCode::kDimensionMismatch, "scores and labels differ in length");
  if (scores.empty()) fail(ErrorCode::kEmptyDataset, "no predictions to score");
  ClassificationMetrics m;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i] == 1) {
      (predicted ? m.tp : m.fn)++;
    } else {
      (predicted ? m.fp : m.tn)++;
    }
  }
  const auto tp = static_cast<double>(m.tp);
  if (m.tp + m.fp > 0) {
    m.precision = tp / static_cast<double>(m.tp + m.fp);
  } else {
    m.degenerate = true;
  }
  if (m.tp + m.fn > 0) {
    m.recall = tp / static_cast<double>(m.tp + m.fn);
  } else {
    m.degenerate = true;
  }
  if (m.precision + m.recall > 0.0) {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  } else {
    m.degenerate = true;
  }
  m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(scores.size());
  return m;
}

BaselineAuc random_baseline(std::span<const int> labels, int repeats, std::uint64_t seed) {
  if (repeats < 1) fail(ErrorCode::kArgument, "baseline needs at least one repeat");
  Rng rng(seed, "random-baseline");
  std::vector<double> aucs;
  std::vector<double> scores(labels.size());
  for (int r = 0; r < repeats; ++r) {
    for (double& s : scores) s = rng.bernoulli(0.5) ? 1.0 : 0.0;
    aucs.push_back(auc_roc(scores, labels));
  }
  BaselineAuc out;
  out.repeats = repeats;
  for (double a : aucs) out.mean += a;
  out.mean /= repeats;
  if (repeats > 1) {
    double ss = 0.0;
    for (double a : aucs) ss += (a - out.mean) * (a - out.mean);
    out.std = std::sqrt(ss / (repeats - 1));
  }
  return out;
}

char verdict(double without, double with, double tolerance) {
  const double delta = with - without;
  if (std::abs(delta) < tolerance) return '=';
  return delta > 0.0 ? '+' : '-';
}

}  // namespace cpijit
