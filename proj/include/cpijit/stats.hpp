#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cpijit/changeset.hpp"

namespace cpijit {

/// Counts of consecutive label patterns (previous, current).
struct ContingencyTable2x2 {
  std::uint64_t n00 = 0, n01 = 0, n10 = 0, n11 = 0;

  std::uint64_t total() const { return n00 + n01 + n10 + n11; }
  std::uint64_t at(int prev, int curr) const;
};

struct ChiSquareResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Triplet (c_t, c_{t+1}, c_{t+2}) label distribution. Index abc as a*4 + b*2 + c.
struct TripletDistribution {
  std::array<double, 8> p{};
  std::array<double, 8> ci_half_width{};
  std::uint64_t n = 0;
  double confidence = 0.95;

  static constexpr int index(int a, int b, int c) { return a * 4 + b * 2 + c; }
  double prob(int a, int b, int c) const { return p[index(a, b, c)]; }
};

/// P(0|1) and P(1|1) per time window; nullopt where the window holds no pair
/// whose first changeset is defect-inducing.
struct DriftSeries {
  std::vector<std::int64_t> window_starts;
  std::vector<std::optional<double>> p_0_given_1;
  std::vector<std::optional<double>> p_1_given_1;
  std::vector<std::uint64_t> defect_first_pairs;
};

ContingencyTable2x2 pair_table(std::span<const int> labels);
ContingencyTable2x2 pair_table(const Dataset& d);

/// Pearson chi-square test of independence, 1 degree of freedom, no
/// continuity correction.
ChiSquareResult chi_square_independence(const ContingencyTable2x2& t);

/// Regularized lower/upper incomplete gamma P(a, x), Q(a, x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);
/// Survival function of the chi-square distribution.
double chi_square_sf(double x, double dof);

/// Inverse standard normal CDF (rational approximation with one Halley step).
double inverse_normal_cdf(double p);
/// Two-sided z for a confidence level; exactly 1.96 at 0.95.
double z_for_confidence(double confidence);

/// Fraction of consecutive pairs whose modified-file sets intersect.
double intersecting_fraction(const Dataset& d);

TripletDistribution triplet_distribution(std::span<const int> labels, double confidence = 0.95);
TripletDistribution triplet_distribution(const Dataset& d, double confidence = 0.95);

DriftSeries drift_series(const Dataset& d, std::int64_t window_seconds = kDefaultWindowSeconds);

nlohmann::json to_json(const ContingencyTable2x2& t);
nlohmann::json to_json(const TripletDistribution& t);

}  // namespace cpijit
