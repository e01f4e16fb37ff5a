#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cpijit/principal_curve.hpp"
#include "cpijit/rng.hpp"

namespace cpijit {

struct SmoteConfig {
  int k_neighbors = 5;
  std::uint64_t seed = 0;
  /// Columns holding 0/1 flags (e.g. fix). They are not interpolated and do
  /// not enter the neighbour distance; a synthetic row takes the majority
  /// value of its base point's neighbourhood (ties keep the base value).
  std::vector<std::size_t> binary_columns;
};

/// One synthetic row with the draw that produced it:
/// point = minority[base] + gap * (minority[neighbor] - minority[base]).
struct SyntheticSample {
  Point point;
  std::size_t base = 0;
  std::size_t neighbor = 0;
  double gap = 0.0;
};

/// Stateful SMOTE draw: base points cycle round-robin across calls and the
/// random stream continues, so successive batches never repeat each other.
class SmoteGenerator {
 public:
  /// Throws kCannotInterpolate for fewer than 2 minority points.
  SmoteGenerator(std::span<const Point> minority, const SmoteConfig& config);

  std::vector<SyntheticSample> next(std::size_t count);

  /// k nearest neighbours of each minority point, nearest first.
  const std::vector<std::vector<std::size_t>>& neighbors() const { return neighbors_; }
  std::size_t k() const { return k_; }

 private:
  std::vector<Point> minority_;
  std::vector<std::vector<std::size_t>> neighbors_;
  std::vector<bool> is_binary_;
  std::vector<std::size_t> binary_columns_;
  std::size_t k_ = 0;
  std::size_t cursor_ = 0;
  Rng rng_;
};

std::vector<SyntheticSample> smote_sample(std::span<const Point> minority, std::size_t k_needed,
                                          const SmoteConfig& config);

struct SmotePcConfig {
  double similarity_threshold = 0.95;
  int max_rejects = 50;
  double batch_fraction = 0.25;
  std::size_t similarity_points = 100;  // resampling size for curve comparison
  CurveFitConfig curve;
  SmoteConfig smote;
};

struct BalancedRow {
  Point features;
  int label = 0;
  bool synthetic = false;
  /// Input row this row came from; for synthetic rows, the SMOTE base point.
  std::size_t source = 0;
};

struct ClassBalance {
  int label = 0;
  std::size_t original = 0;
  std::size_t synthesized = 0;
  double curve_similarity = 1.0;
  int accepted_batches = 0;
  int rejected_batches = 0;
  bool threshold_relaxed = false;
  double final_threshold = 0.0;
};

struct BalancedSet {
  std::vector<BalancedRow> rows;
  std::map<int, std::size_t> per_class_counts;
  /// Smallest similarity between a minority class curve and the curve of that
  /// class together with its accepted synthetics (1 with no synthetics).
  double curve_similarity = 1.0;
  int rejected_batches = 0;
  bool threshold_relaxed = false;
  std::vector<ClassBalance> classes;

  std::vector<Point> feature_rows() const;
  std::vector<int> labels() const;
};

/// Oversamples every minority class up to the majority count. The curve gate
/// accepts a SMOTE batch only if the principal curve of the class, its
/// accepted synthetics and the batch stays cosine-similar to the curve of the
/// class alone. After max_rejects consecutive rejections the threshold drops
/// by 0.01 per further rejection and the result is flagged.
BalancedSet smote_pc(std::span<const Point> features, std::span<const int> labels,
                     const SmotePcConfig& config);

/// Plain SMOTE to the majority count, same layout and provenance as smote_pc.
BalancedSet smote_balance(std::span<const Point> features, std::span<const int> labels,
                          const SmoteConfig& config);

struct BalanceReport {
  PrincipalCurve raw_curve;
  PrincipalCurve smote_curve;
  PrincipalCurve smotepc_curve;
  double raw_vs_smote = 0.0;
  double raw_vs_smotepc = 0.0;
  double smote_vs_smotepc = 0.0;
};

/// Fits curves (features + label coordinate) on the raw segment, its plain
/// SMOTE balancing and the given SMOTE-PC balancing, and compares them.
BalanceReport balance_report(std::span<const Point> features, std::span<const int> labels,
                             const BalancedSet& smotepc, const SmotePcConfig& config);

nlohmann::json to_json(const BalancedSet& set);
nlohmann::json to_json(const BalanceReport& report);

}  // namespace cpijit
