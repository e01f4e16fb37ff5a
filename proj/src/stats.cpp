#include "cpijit/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "cpijit/error.hpp"

namespace cpijit {

namespace {

constexpr int kMaxGammaIterations = 10000;
constexpr double kGammaEps = 1e-16;

void check_binary(std::span<const int> labels) {
  for (int l : labels) {
    if (l != 0 && l != 1) fail(ErrorCode::kDomain, "labels must be 0 or 1");
  }
}

// Series expansion of P(a, x); converges fast for x < a + 1.
double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int n = 0; n < kMaxGammaIterations; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * kGammaEps) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Continued fraction for Q(a, x) (modified Lentz); for x >= a + 1.
double gamma_q_fraction(double a, double x) {
  constexpr double tiny = std::numeric_limits<double>::min() / kGammaEps;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxGammaIterations; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kGammaEps) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

std::uint64_t ContingencyTable2x2::at(int prev, int curr) const {
  if (prev == 0) return curr == 0 ? n00 : n01;
  return curr == 0 ? n10 : n11;
}

ContingencyTable2x2 pair_table(std::span<const int> labels) {
  if (labels.size() < 2) fail(ErrorCode::kInsufficientData, "pair_table needs at least 2 changesets");
  check_binary(labels);
  ContingencyTable2x2 t;
  for (std::size_t i = 1; i < labels.size(); ++i) {
    const int prev = labels[i - 1], curr = labels[i];
    if (prev == 0) {
      (curr == 0 ? t.n00 : t.n01)++;
    } else {
      (curr == 0 ? t.n10 : t.n11)++;
    }
  }
  return t;
}

ContingencyTable2x2 pair_table(const Dataset& d) {
  const auto labels = d.labels();
  return pair_table(labels);
}

double gamma_p(double a, double x) {
  if (!(a > 0.0) || x < 0.0) fail(ErrorCode::kDomain, "gamma_p requires a > 0 and x >= 0");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_fraction(a, x);
}

double gamma_q(double a, double x) {
  if (!(a > 0.0) || x < 0.0) fail(ErrorCode::kDomain, "gamma_q requires a > 0 and x >= 0");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_fraction(a, x);
}

double chi_square_sf(double x, double dof) {
  if (x <= 0.0) return 1.0;
  return gamma_q(0.5 * dof, 0.5 * x);
}

ChiSquareResult chi_square_independence(const ContingencyTable2x2& t) {
  const double total = static_cast<double>(t.total());
  if (total < 1.0) fail(ErrorCode::kDegenerateTable, "contingency table is empty");
  const std::array<double, 2> row = {static_cast<double>(t.n00 + t.n01),
                                     static_cast<double>(t.n10 + t.n11)};
  const std::array<double, 2> col = {static_cast<double>(t.n00 + t.n10),
                                     static_cast<double>(t.n01 + t.n11)};
  if (row[0] == 0.0 || row[1] == 0.0 || col[0] == 0.0 || col[1] == 0.0) {
    fail(ErrorCode::kDegenerateTable, "contingency table has a zero marginal");
  }
  double stat = 0.0;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const double expected = row[i] * col[j] / total;
      const double diff = static_cast<double>(t.at(i, j)) - expected;
      stat += diff * diff / expected;
    }
  }
  return {stat, chi_square_sf(stat, 1.0)};
}

double inverse_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) fail(ErrorCode::kDomain, "inverse_normal_cdf requires 0 < p < 1");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x = 0.0;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement against the exact CDF.
  const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

double z_for_confidence(double confidence) {
  if (!(confidence > 0.0 && confidence < 1.0)) {
    fail(ErrorCode::kArgument, "confidence must lie in (0, 1)");
  }
  if (confidence == 0.95) return 1.96;
  return inverse_normal_cdf(1.0 - 0.5 * (1.0 - confidence));
}

double intersecting_fraction(const Dataset& d) {
  if (d.size() < 2) fail(ErrorCode::kInsufficientData, "intersecting_fraction needs at least 2 changesets");
  for (const auto& c : d.changesets) {
    if (!c.modified_files) {
      fail(ErrorCode::kUnsupportedDataset, "changeset '" + c.id + "' carries no modified-file list");
    }
  }
  std::size_t hits = 0;
  for (std::size_t i = 1; i < d.size(); ++i) {
    const auto& prev = *d.changesets[i - 1].modified_files;
    const std::unordered_set<std::string> prev_set(prev.begin(), prev.end());
    const auto& curr = *d.changesets[i].modified_files;
    if (std::any_of(curr.begin(), curr.end(), [&](const std::string& f) { return prev_set.contains(f); })) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(d.size() - 1);
}

TripletDistribution triplet_distribution(std::span<const int> labels, double confidence) {
  if (labels.size() < 3) fail(ErrorCode::kInsufficientData, "triplet_distribution needs at least 3 changesets");
  check_binary(labels);
  std::array<std::uint64_t, 8> counts{};
  for (std::size_t i = 2; i < labels.size(); ++i) {
    ++counts[TripletDistribution::index(labels[i - 2], labels[i - 1], labels[i])];
  }
  TripletDistribution out;
  out.n = labels.size() - 2;
  out.confidence = confidence;
  const double z = z_for_confidence(confidence);
  const double n = static_cast<double>(out.n);
  for (std::size_t k = 0; k < 8; ++k) {
    const double p = static_cast<double>(counts[k]) / n;
    out.p[k] = p;
    out.ci_half_width[k] = z * std::sqrt(p * (1.0 - p) / n);
  }
  return out;
}

TripletDistribution triplet_distribution(const Dataset& d, double confidence) {
  const auto labels = d.labels();
  return triplet_distribution(labels, confidence);
}

DriftSeries drift_series(const Dataset& d, std::int64_t window_seconds) {
  if (d.size() < 2) fail(ErrorCode::kInsufficientData, "drift_series needs at least 2 changesets");
  if (window_seconds <= 0) fail(ErrorCode::kArgument, "window width must be positive");
  const std::int64_t start = d.changesets.front().timestamp;
  const auto n_windows =
      static_cast<std::size_t>((d.changesets.back().timestamp - start) / window_seconds + 1);
  std::vector<std::uint64_t> n10(n_windows, 0), n11(n_windows, 0);
  for (std::size_t i = 0; i + 1 < d.size(); ++i) {
    if (d.changesets[i].label != 1) continue;
    const auto w = static_cast<std::size_t>((d.changesets[i].timestamp - start) / window_seconds);
    (d.changesets[i + 1].label == 1 ? n11 : n10)[w]++;
  }
  DriftSeries s;
  for (std::size_t w = 0; w < n_windows; ++w) {
    s.window_starts.push_back(start + static_cast<std::int64_t>(w) * window_seconds);
    const std::uint64_t denom = n10[w] + n11[w];
    s.defect_first_pairs.push_back(denom);
    if (denom == 0) {
      s.p_0_given_1.emplace_back();
      s.p_1_given_1.emplace_back();
    } else {
      s.p_0_given_1.emplace_back(static_cast<double>(n10[w]) / static_cast<double>(denom));
      s.p_1_given_1.emplace_back(static_cast<double>(n11[w]) / static_cast<double>(denom));
    }
  }
  return s;
}

nlohmann::json to_json(const ContingencyTable2x2& t) {
  return {{"n00", t.n00}, {"n01", t.n01}, {"n10", t.n10}, {"n11", t.n11}};
}

nlohmann::json to_json(const TripletDistribution& t) {
  nlohmann::json probs = nlohmann::json::object();
  nlohmann::json ci = nlohmann::json::object();
  for (int k = 0; k < 8; ++k) {
    const std::string key = "P" + std::to_string((k >> 2) & 1) + std::to_string((k >> 1) & 1) +
                            std::to_string(k & 1);
    probs[key] = t.p[k];
    ci[key] = t.ci_half_width[k];
  }
  return {{"n", t.n}, {"confidence", t.confidence}, {"p", probs}, {"ci_half_width", ci}};
}

}  // namespace cpijit
