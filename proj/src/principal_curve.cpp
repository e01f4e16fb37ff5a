#include "cpijit/principal_curve.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "cpijit/error.hpp"

namespace cpijit {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double diff = a[k] - b[k];
    s += diff * diff;
  }
  return s;
}

struct SegmentFoot {
  double t = 0.0;   // fraction along the segment
  double d2 = 0.0;  // squared distance
};

SegmentFoot closest_on_segment(const Point& p, const Point& q, std::span<const double> x) {
  double len2 = 0.0, dot = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double e = q[k] - p[k];
    len2 += e * e;
    dot += (x[k] - p[k]) * e;
  }
  double t = len2 > 0.0 ? std::clamp(dot / len2, 0.0, 1.0) : 0.0;
  double d2 = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double f = p[k] + t * (q[k] - p[k]) - x[k];
    d2 += f * f;
  }
  return {t, d2};
}

// Local linear regression of every coordinate on lambda, evaluated at `at`.
// `order` sorts the points by lambda; `q` is the neighbourhood size.
Point local_linear(std::span<const Point> points, std::span<const double> lambda,
                   std::span<const std::size_t> order, std::size_t q, double at) {
  const std::size_t n = order.size();
  const std::size_t dim = points.front().size();
  // Window of q nearest lambdas around `at`.
  auto it = std::lower_bound(order.begin(), order.end(), at,
                             [&](std::size_t i, double v) { return lambda[i] < v; });
  std::size_t lo = static_cast<std::size_t>(it - order.begin());
  std::size_t hi = lo;  // window is [lo, hi)
  while (hi - lo < q) {
    const bool can_left = lo > 0;
    const bool can_right = hi < n;
    if (can_left && (!can_right || at - lambda[order[lo - 1]] <= lambda[order[hi]] - at)) {
      --lo;
    } else {
      ++hi;
    }
  }
  double radius = std::max(at - lambda[order[lo]], lambda[order[hi - 1]] - at);
  radius = radius > 0.0 ? radius * (1.0 + 1e-9) : 1.0;

  double sw = 0.0, sl = 0.0;
  std::vector<double> w(hi - lo);
  for (std::size_t k = lo; k < hi; ++k) {
    const double u = std::abs(lambda[order[k]] - at) / radius;
    const double c = 1.0 - u * u * u;
    w[k - lo] = c * c * c;
    sw += w[k - lo];
    sl += w[k - lo] * lambda[order[k]];
  }
  const double lbar = sl / sw;
  double sll = 0.0;
  for (std::size_t k = lo; k < hi; ++k) {
    const double dl = lambda[order[k]] - lbar;
    sll += w[k - lo] * dl * dl;
  }
  Point out(dim, 0.0);
  for (std::size_t c = 0; c < dim; ++c) {
    double sx = 0.0;
    for (std::size_t k = lo; k < hi; ++k) sx += w[k - lo] * points[order[k]][c];
    const double xbar = sx / sw;
    double slx = 0.0;
    if (sll > 0.0) {
      for (std::size_t k = lo; k < hi; ++k) {
        slx += w[k - lo] * (lambda[order[k]] - lbar) * (points[order[k]][c] - xbar);
      }
    }
    const double slope = sll > 0.0 ? slx / sll : 0.0;
    out[c] = xbar + slope * (at - lbar);
  }
  return out;
}

std::vector<Point> flatten_centered(const PrincipalCurve& curve, std::size_t m) {
  auto pts = resample(curve, m);
  Point mean(curve.dim(), 0.0);
  for (const auto& p : pts) {
    for (std::size_t k = 0; k < p.size(); ++k) mean[k] += p[k];
  }
  for (double& v : mean) v /= static_cast<double>(m);
  for (auto& p : pts) {
    for (std::size_t k = 0; k < p.size(); ++k) p[k] -= mean[k];
  }
  return pts;
}

double cosine(const std::vector<Point>& a, const std::vector<Point>& b, bool reverse_b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  const std::size_t m = a.size();
  for (std::size_t i = 0; i < m; ++i) {
    const Point& pb = reverse_b ? b[m - 1 - i] : b[i];
    for (std::size_t k = 0; k < a[i].size(); ++k) {
      dot += a[i][k] * pb[k];
      na += a[i][k] * a[i][k];
      nb += pb[k] * pb[k];
    }
  }
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

double flat_norm2(const std::vector<Point>& pts) {
  double s = 0.0;
  for (const auto& p : pts) {
    for (double v : p) s += v * v;
  }
  return s;
}

}  // namespace

PrincipalCurve::PrincipalCurve(std::vector<Point> vertices) : vertices_(std::move(vertices)) {
  if (vertices_.size() < 2) fail(ErrorCode::kArgument, "a principal curve needs at least 2 vertices");
  dim_ = vertices_.front().size();
  if (dim_ == 0) fail(ErrorCode::kArgument, "curve vertices must have positive dimension");
  arclength_.assign(vertices_.size(), 0.0);
  for (std::size_t i = 1; i < vertices_.size(); ++i) {
    if (vertices_[i].size() != dim_) fail(ErrorCode::kDimensionMismatch, "ragged curve vertices");
    arclength_[i] = arclength_[i - 1] + std::sqrt(squared_distance(vertices_[i - 1], vertices_[i]));
  }
}

PrincipalCurve PrincipalCurve::reversed() const {
  return PrincipalCurve(std::vector<Point>(vertices_.rbegin(), vertices_.rend()));
}

Projection project(const PrincipalCurve& curve, std::span<const double> x) {
  if (x.size() != curve.dim()) {
    fail(ErrorCode::kDimensionMismatch, "point has dimension " + std::to_string(x.size()) +
                                            ", curve has " + std::to_string(curve.dim()));
  }
  const auto& v = curve.vertices();
  const auto& arc = curve.arclength();
  std::size_t best_seg = 0;
  SegmentFoot best = closest_on_segment(v[0], v[1], x);
  for (std::size_t s = 1; s + 1 < v.size(); ++s) {
    const SegmentFoot f = closest_on_segment(v[s], v[s + 1], x);
    // A later segment must be strictly closer beyond rounding noise.
    if (f.d2 < best.d2 - 1e-12 * (1.0 + best.d2)) {
      best = f;
      best_seg = s;
    }
  }
  Projection p;
  const Point& a = v[best_seg];
  const Point& b = v[best_seg + 1];
  p.foot.resize(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) p.foot[k] = a[k] + best.t * (b[k] - a[k]);
  p.lambda = arc[best_seg] + best.t * (arc[best_seg + 1] - arc[best_seg]);
  p.dist = std::sqrt(squared_distance(p.foot, x));
  return p;
}

double mean_sq_projection_distance(const PrincipalCurve& curve, std::span<const Point> points) {
  if (points.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& x : points) {
    const auto p = project(curve, x);
    sum += p.dist * p.dist;
  }
  return sum / static_cast<double>(points.size());
}

CurveFit fit_curve(std::span<const Point> points, const CurveFitConfig& config) {
  if (config.segments < 2) fail(ErrorCode::kArgument, "curve needs at least 2 vertices");
  if (config.max_iter < 0) fail(ErrorCode::kArgument, "max_iter must be nonnegative");
  if (!(config.smooth_span > 0.0 && config.smooth_span <= 1.0)) {
    fail(ErrorCode::kArgument, "smooth_span must lie in (0, 1]");
  }
  if (points.empty()) fail(ErrorCode::kInsufficientData, "fit_curve on empty point set");
  const std::size_t dim = points.front().size();
  if (dim < 2) fail(ErrorCode::kArgument, "fit_curve needs dimension >= 2");
  if (points.size() < dim + 1) {
    fail(ErrorCode::kInsufficientData, "fit_curve needs at least dim + 1 = " +
                                           std::to_string(dim + 1) + " points, got " +
                                           std::to_string(points.size()));
  }
  const std::size_t n = points.size();
  Eigen::MatrixXd x(n, dim);
  for (std::size_t i = 0; i < n; ++i) {
    if (points[i].size() != dim) fail(ErrorCode::kDimensionMismatch, "ragged point set");
    for (std::size_t k = 0; k < dim; ++k) {
      if (!std::isfinite(points[i][k])) fail(ErrorCode::kDomain, "fit_curve: non-finite coordinate");
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = points[i][k];
    }
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mean;
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const double top = eig.eigenvalues()(eig.eigenvalues().size() - 1);
  const double scale = 1.0 + mean.squaredNorm();
  if (!(top > 1e-20 * scale)) {
    fail(ErrorCode::kPointCurve, "points collapse to a single location; no curve through them");
  }
  Eigen::VectorXd dir = eig.eigenvectors().col(eig.eigenvectors().cols() - 1);
  Eigen::Index pivot = 0;
  dir.cwiseAbs().maxCoeff(&pivot);
  if (dir(pivot) < 0.0) dir = -dir;

  const Eigen::VectorXd scores = centered * dir;
  const double smin = scores.minCoeff();
  const double smax = scores.maxCoeff();
  const auto vcount = static_cast<std::size_t>(config.segments);
  std::vector<Point> init(vcount, Point(dim));
  for (std::size_t j = 0; j < vcount; ++j) {
    const double s = smin + (smax - smin) * static_cast<double>(j) / static_cast<double>(vcount - 1);
    for (std::size_t k = 0; k < dim; ++k) {
      init[j][k] = mean(static_cast<Eigen::Index>(k)) + s * dir(static_cast<Eigen::Index>(k));
    }
  }

  CurveFit fit{PrincipalCurve(std::move(init)), {}};
  double dist = mean_sq_projection_distance(fit.curve, points);
  fit.report.distance_history.push_back(dist);
  const double tiny = 1e-14 * (top + 1e-300);
  const std::size_t q = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(config.smooth_span * static_cast<double>(n))), 3, n);

  std::vector<double> lambda(n);
  std::vector<std::size_t> order(n);
  if (dist <= tiny) fit.report.converged = true;
  while (!fit.report.converged && fit.report.iterations < config.max_iter) {
    for (std::size_t i = 0; i < n; ++i) lambda[i] = project(fit.curve, points[i]).lambda;
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return lambda[a] < lambda[b]; });
    const double lo = lambda[order.front()];
    const double hi = lambda[order.back()];
    if (!(hi > lo)) break;
    std::vector<Point> vertices;
    vertices.reserve(vcount);
    for (std::size_t j = 0; j < vcount; ++j) {
      const double at = lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(vcount - 1);
      vertices.push_back(local_linear(points, lambda, order, q, at));
    }
    PrincipalCurve next(std::move(vertices));
    if (!(next.length() > 0.0)) break;
    const double next_dist = mean_sq_projection_distance(next, points);
    ++fit.report.iterations;
    const double rel = (dist - next_dist) / std::max(dist, std::numeric_limits<double>::min());
    if (next_dist > dist) {
      // The smoother overshot; keep the better curve and stop.
      fit.report.converged = rel > -config.tol;
      break;
    }
    fit.curve = std::move(next);
    dist = next_dist;
    fit.report.distance_history.push_back(dist);
    if (rel < config.tol || dist <= tiny) fit.report.converged = true;
  }
  fit.report.final_mean_sq_projection_distance = dist;
  return fit;
}

std::vector<Point> resample(const PrincipalCurve& curve, std::size_t m) {
  if (m < 2) fail(ErrorCode::kArgument, "resample needs m >= 2");
  const auto& v = curve.vertices();
  const auto& arc = curve.arclength();
  const double total = curve.length();
  std::vector<Point> out;
  out.reserve(m);
  std::size_t seg = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (i + 1 == m) {
      out.push_back(v.back());
      break;
    }
    const double s = total * static_cast<double>(i) / static_cast<double>(m - 1);
    while (seg + 2 < v.size() && arc[seg + 1] < s) ++seg;
    const double len = arc[seg + 1] - arc[seg];
    const double t = len > 0.0 ? std::clamp((s - arc[seg]) / len, 0.0, 1.0) : 0.0;
    Point p(curve.dim());
    for (std::size_t k = 0; k < p.size(); ++k) p[k] = v[seg][k] + t * (v[seg + 1][k] - v[seg][k]);
    out.push_back(std::move(p));
  }
  return out;
}

double curve_cosine_similarity(const PrincipalCurve& a, const PrincipalCurve& b, std::size_t m) {
  if (a.dim() != b.dim()) fail(ErrorCode::kDimensionMismatch, "curves differ in dimension");
  const auto fa = flatten_centered(a, m);
  const auto fb = flatten_centered(b, m);
  const double na = flat_norm2(fa), nb = flat_norm2(fb);
  if (!(na > 0.0) || !(nb > 0.0)) {
    fail(ErrorCode::kDegenerateCurve, "curve is point-like after centring; cosine undefined");
  }
  return std::max(cosine(fa, fb, false), cosine(fa, fb, true));
}

std::vector<Point> curve_points(const Dataset& d, bool include_label) {
  std::vector<Point> out;
  out.reserve(d.size());
  for (const auto& c : d.changesets) {
    Point p = c.features;
    if (include_label) p.push_back(static_cast<double>(c.label));
    out.push_back(std::move(p));
  }
  return out;
}

nlohmann::json to_json(const PrincipalCurve& curve) {
  return {{"dim", curve.dim()}, {"vertices", curve.vertices()}, {"arclength", curve.arclength()}};
}

PrincipalCurve curve_from_json(const nlohmann::json& j) {
  PrincipalCurve c(j.at("vertices").get<std::vector<Point>>());
  if (j.contains("dim") && j.at("dim").get<std::size_t>() != c.dim()) {
    fail(ErrorCode::kDimensionMismatch, "curve JSON dim does not match its vertices");
  }
  return c;
}

}  // namespace cpijit
