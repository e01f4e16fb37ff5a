#include "cpijit/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpijit/error.hpp"
#include "cpijit/nn.hpp"
#include "cpijit/rng.hpp"

namespace cpijit {

namespace {

constexpr std::int64_t kStartTime = 1262304000;  // 2010-01-01T00:00:00Z
constexpr std::int64_t kStep = 3600;

Dataset make_dataset(std::string project, std::size_t features) {
  if (features == 0 || features > kSyntheticFeatureNames.size()) {
    fail(ErrorCode::kArgument, "synthetic data supports 1 to " + std::to_string(kSyntheticFeatureNames.size()) +
                                   " features");
  }
  Dataset d;
  d.project = std::move(project);
  for (std::size_t j = 0; j < features; ++j) d.feature_names.emplace_back(kSyntheticFeatureNames[j]);
  return d;
}

void push(Dataset& d, std::vector<double> features, int label) {
  Changeset c;
  const std::size_t i = d.changesets.size();
  char id[32];
  std::snprintf(id, sizeof id, "s%06zu", i);
  c.id = id;
  c.timestamp = kStartTime + static_cast<std::int64_t>(i) * kStep;
  c.features = std::move(features);
  c.label = label;
  d.changesets.push_back(std::move(c));
}

void check_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) fail(ErrorCode::kArgument, std::string(what) + " must lie in [0, 1]");
}

template <typename Spec>
void override_fields(Spec& spec, const nlohmann::json& j, nlohmann::json defaults) {
  for (const auto& [key, value] : j.items()) {
    if (key == "kind") continue;
    if (!defaults.contains(key)) fail(ErrorCode::kConfig, "unknown synthetic-data key '" + key + "'");
    defaults[key] = value;
  }
  spec = defaults.get<Spec>();
}

}  // namespace

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(MarkovSpec, n, features, p_1_given_1, p_1_given_0, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ManifoldSpec, majority, minority, radius, noise, outlier_fraction, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(JointSpec, n, features, signal, carry, bias, rotation, segments, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(LineSpec, n, dim, noise, seed)

Dataset synth_markov(const MarkovSpec& spec) {
  check_probability(spec.p_1_given_1, "p_1_given_1");
  check_probability(spec.p_1_given_0, "p_1_given_0");
  Dataset d = make_dataset("markov", spec.features);
  Rng labels(spec.seed, "labels");
  Rng features(spec.seed, "features");
  int prev = 0;
  for (std::size_t i = 0; i < spec.n; ++i) {
    const int y = labels.bernoulli(prev == 1 ? spec.p_1_given_1 : spec.p_1_given_0) ? 1 : 0;
    std::vector<double> x(spec.features);
    for (double& v : x) v = features.normal();
    push(d, std::move(x), y);
    prev = y;
  }
  return d;
}

Dataset synth_manifold(const ManifoldSpec& spec) {
  check_probability(spec.outlier_fraction, "outlier_fraction");
  Dataset d = make_dataset("manifold", 2);
  Rng rng(spec.seed, "points");
  std::vector<std::pair<std::vector<double>, int>> rows;
  for (std::size_t i = 0; i < spec.majority; ++i) {
    rows.push_back({{rng.normal(0.0, 1.5), rng.normal(-spec.radius, 1.0)}, 0});
  }
  for (std::size_t i = 0; i < spec.minority; ++i) {
    if (rng.uniform() < spec.outlier_fraction) {
      const double bound = 2.0 * spec.radius;
      rows.push_back({{rng.uniform(-bound, bound), rng.uniform(-bound, bound)}, 1});
    } else {
      const double t = rng.uniform(0.0, std::numbers::pi);
      rows.push_back({{spec.radius * std::cos(t) + rng.normal(0.0, spec.noise),
                       spec.radius * std::sin(t) + rng.normal(0.0, spec.noise)},
                      1});
    }
  }
  Rng order(spec.seed, "order");
  order.shuffle(rows.begin(), rows.end());
  for (auto& [x, y] : rows) push(d, std::move(x), y);
  return d;
}

Dataset synth_joint(const JointSpec& spec) {
  if (spec.features < 2) fail(ErrorCode::kArgument, "joint generator needs at least 2 features");
  if (spec.segments == 0) fail(ErrorCode::kArgument, "segments must be positive");
  Dataset d = make_dataset("joint", spec.features);
  Rng rng(spec.seed, "joint");
  const double segment_length = static_cast<double>(spec.n) / static_cast<double>(spec.segments);
  int prev = 0;
  for (std::size_t i = 0; i < spec.n; ++i) {
    std::vector<double> x(spec.features);
    for (double& v : x) v = rng.normal();
    const double angle = spec.rotation * static_cast<double>(i) / segment_length;
    const double s = spec.signal * (std::cos(angle) * x[0] + std::sin(angle) * x[1]) +
                     spec.carry * (2.0 * prev - 1.0) + spec.bias;
    const int y = rng.bernoulli(nn::sigmoid(s)) ? 1 : 0;
    push(d, std::move(x), y);
    prev = y;
  }
  return d;
}

Dataset synth_line(const LineSpec& spec) {
  if (spec.dim < 2) fail(ErrorCode::kArgument, "line fixture needs at least 2 dimensions");
  Dataset d = make_dataset("line", spec.dim);
  Rng rng(spec.seed, "line");
  std::vector<double> offset(spec.dim), dir(spec.dim);
  double norm = 0.0;
  for (std::size_t j = 0; j < spec.dim; ++j) {
    offset[j] = rng.normal(0.0, 2.0);
    dir[j] = rng.normal();
    norm += dir[j] * dir[j];
  }
  norm = std::sqrt(norm);
  for (double& v : dir) v /= norm;
  for (std::size_t i = 0; i < spec.n; ++i) {
    const double t = rng.uniform(-5.0, 5.0);
    std::vector<double> x(spec.dim);
    for (std::size_t j = 0; j < spec.dim; ++j) x[j] = offset[j] + t * dir[j] + spec.noise * rng.normal();
    push(d, std::move(x), 0);
  }
  return d;
}

Dataset synth_from_json(const nlohmann::json& j, std::uint64_t seed) {
  if (!j.is_object() || !j.contains("kind")) fail(ErrorCode::kConfig, "synthetic spec needs a 'kind'");
  const std::string kind = j.at("kind").get<std::string>();
  try {
    if (kind == "markov") {
      MarkovSpec s;
      s.seed = seed;
      override_fields(s, j, s);
      return synth_markov(s);
    }
    if (kind == "manifold") {
      ManifoldSpec s;
      s.seed = seed;
      override_fields(s, j, s);
      return synth_manifold(s);
    }
    if (kind == "joint") {
      JointSpec s;
      s.seed = seed;
      override_fields(s, j, s);
      return synth_joint(s);
    }
    if (kind == "line") {
      LineSpec s;
      s.seed = seed;
      override_fields(s, j, s);
      return synth_line(s);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, "synthetic spec: " + std::string(e.what()));
  }
  fail(ErrorCode::kConfig, "unknown synthetic kind '" + kind + "'");
}

SchemaMap synthetic_schema(const Dataset& d) {
  SchemaMap s;
  s.metrics = d.feature_names;
  return s;
}

}  // namespace cpijit
