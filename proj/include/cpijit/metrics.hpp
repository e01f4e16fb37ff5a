#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace cpijit {

/// Area under the ROC curve via the Mann-Whitney rank sum; tied scores count
/// one half. Throws kUndefinedMetric when only one class is present.
double auc_roc(std::span<const double> scores, std::span<const int> labels);

struct ClassificationMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  /// Set when a zero denominator forced precision, recall or F1 to 0.
  bool degenerate = false;
};

/// A score at or above the threshold predicts the positive class.
ClassificationMetrics classification_metrics(std::span<const double> scores, std::span<const int> labels,
                                             double threshold = 0.5);

struct BaselineAuc {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation across repeats
  int repeats = 0;
};

/// AUC of a fair-coin classifier (scores 0 or 1) repeated `repeats` times.
BaselineAuc random_baseline(std::span<const int> labels, int repeats = 50, std::uint64_t seed = 0);

/// '+', '-' or '=' for with - without, '=' when |with - without| < tolerance.
char verdict(double without, double with, double tolerance = 0.005);

}  // namespace cpijit
