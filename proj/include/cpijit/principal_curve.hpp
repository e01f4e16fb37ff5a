#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cpijit/changeset.hpp"

namespace cpijit {

using Point = std::vector<double>;

/// Ordered polyline in feature space. arclength[i] is the curve length from
/// the first vertex to vertex i.
class PrincipalCurve {
 public:
  PrincipalCurve() = default;
  /// Throws kArgument for fewer than 2 vertices or ragged dimensions.
  explicit PrincipalCurve(std::vector<Point> vertices);

  const std::vector<Point>& vertices() const { return vertices_; }
  const std::vector<double>& arclength() const { return arclength_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return vertices_.size(); }
  double length() const { return arclength_.empty() ? 0.0 : arclength_.back(); }

  PrincipalCurve reversed() const;

 private:
  std::vector<Point> vertices_;
  std::vector<double> arclength_;
  std::size_t dim_ = 0;
};

struct CurveFitConfig {
  int segments = 50;         // vertices of the fitted polyline
  int max_iter = 20;
  double tol = 1e-4;         // relative change of the mean squared distance
  double smooth_span = 0.3;  // fraction of points in each local fit
};

struct CurveFitReport {
  int iterations = 0;
  double final_mean_sq_projection_distance = 0.0;
  bool converged = false;
  /// Mean squared projection distance of the initial line and of every
  /// accepted iteration; nonincreasing.
  std::vector<double> distance_history;
};

struct CurveFit {
  PrincipalCurve curve;
  CurveFitReport report;
};

struct Projection {
  double lambda = 0.0;  // arclength of the foot point
  Point foot;
  double dist = 0.0;
};

/// Hastie-Stuetzle alternation: start from the first principal component
/// line, then repeatedly project, smooth each coordinate against arclength
/// with a local linear (running lines) smoother, and re-vertex.
/// Throws kPointCurve when the points do not span any direction.
CurveFit fit_curve(std::span<const Point> points, const CurveFitConfig& config = {});

/// Closest point on the polyline; ties go to the smaller arclength.
Projection project(const PrincipalCurve& curve, std::span<const double> x);

/// Mean squared distance from the points to the curve.
double mean_sq_projection_distance(const PrincipalCurve& curve, std::span<const Point> points);

/// m points at equal arclength spacing, both endpoints included.
std::vector<Point> resample(const PrincipalCurve& curve, std::size_t m = 100);

/// Cosine of the resampled, self-centred, flattened curves, taking the better
/// of the two orientations of `b`.
double curve_cosine_similarity(const PrincipalCurve& a, const PrincipalCurve& b, std::size_t m = 100);

/// Feature rows of a dataset, optionally with the label appended as an extra
/// coordinate.
std::vector<Point> curve_points(const Dataset& d, bool include_label = true);

nlohmann::json to_json(const PrincipalCurve& curve);
PrincipalCurve curve_from_json(const nlohmann::json& j);

}  // namespace cpijit
