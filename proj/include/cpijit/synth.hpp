#pragma once

// Synthetic changeset streams with planted structure. Feature columns reuse
// canonical metric names so the output loads through the ordinary CSV path;
// values are not meant to look like real metrics.

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include <nlohmann/json_fwd.hpp>

#include "cpijit/changeset.hpp"

namespace cpijit {

/// Column names used for synthetic features, in order (fix and churn are
/// skipped so no loader rule applies to them).
inline constexpr std::array<std::string_view, 13> kSyntheticFeatureNames = {
    "ns", "nd", "nf", "entropy", "la", "ld", "lt", "ndev", "age", "nuc", "exp", "rexp", "sexp"};

/// Labels follow a two-state Markov chain, features are i.i.d. N(0, 1).
/// p_1_given_1 == p_1_given_0 gives i.i.d. labels.
struct MarkovSpec {
  std::size_t n = 5000;
  std::size_t features = 4;
  double p_1_given_1 = 0.9;
  double p_1_given_0 = 0.1;
  std::uint64_t seed = 0;
};
Dataset synth_markov(const MarkovSpec& spec);

/// Two features. Majority class: Gaussian blob below the origin. Minority
/// class: noisy upper half circle, with a fraction of points scattered
/// uniformly over the square [-6, 6]^2.
struct ManifoldSpec {
  std::size_t majority = 1818;
  std::size_t minority = 182;
  double radius = 3.0;
  double noise = 0.1;
  double outlier_fraction = 0.15;
  std::uint64_t seed = 0;
};
Dataset synth_manifold(const ManifoldSpec& spec);

/// P(y = 1 | x, previous label) = sigmoid(signal * w_t . x + carry * (2 y_prev - 1) + bias),
/// where w_t is the unit vector at angle rotation * t / segment_length in
/// the plane of the first two features. rotation = 0 gives a stationary
/// stream; carry = 0 removes the label dependence.
struct JointSpec {
  std::size_t n = 4000;
  std::size_t features = 4;
  double signal = 3.0;
  double carry = 0.0;
  double bias = -1.5;
  double rotation = 0.0;  // radians per segment
  std::size_t segments = 20;
  std::uint64_t seed = 0;
};
Dataset synth_joint(const JointSpec& spec);

/// Points on a random line through a random offset, plus optional isotropic
/// noise. Labels are all 0.
struct LineSpec {
  std::size_t n = 500;
  std::size_t dim = 3;
  double noise = 0.0;
  std::uint64_t seed = 0;
};
Dataset synth_line(const LineSpec& spec);

/// Dispatches on j["kind"] in {markov, manifold, joint, line}; remaining keys
/// override the spec fields. Throws kConfig for unknown kinds or keys.
Dataset synth_from_json(const nlohmann::json& j, std::uint64_t seed);

/// Schema selecting exactly the dataset's feature columns.
SchemaMap synthetic_schema(const Dataset& d);

}  // namespace cpijit
