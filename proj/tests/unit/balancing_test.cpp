#include <algorithm>
#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "cpijit/balancing.hpp"
#include "cpijit/error.hpp"
#include "cpijit/rng.hpp"
#include "cpijit/synth.hpp"

namespace cpijit {
namespace {

std::vector<Point> cloud(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Point> pts(n, Point(dim));
  for (auto& p : pts) {
    for (double& v : p) v = rng.normal();
  }
  return pts;
}

double sq_dist(const Point& a, const Point& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return s;
}

TEST(Smote, SamplesLieOnSegmentToANearNeighbour) {
  const auto minority = cloud(30, 3, 1);
  SmoteConfig cfg;
  cfg.seed = 5;
  const auto samples = smote_sample(minority, 200, cfg);
  ASSERT_EQ(samples.size(), 200u);
  for (const auto& s : samples) {
    // Neighbour oracle: brute-force rank of the chosen neighbour.
    const Point& a = minority[s.base];
    std::size_t closer = 0;
    for (std::size_t j = 0; j < minority.size(); ++j) {
      if (j != s.base && sq_dist(a, minority[j]) < sq_dist(a, minority[s.neighbor])) ++closer;
    }
    EXPECT_LT(closer, 5u);
    EXPECT_GE(s.gap, 0.0);
    EXPECT_LE(s.gap, 1.0);
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_NEAR(s.point[k], a[k] + s.gap * (minority[s.neighbor][k] - a[k]), 1e-12);
    }
  }
}

TEST(Smote, ReplayMatchesIndependentGeneration) {
  // Oracle: rebuild every sample from its recorded base, neighbour and gap.
  const auto minority = cloud(12, 2, 2);
  SmoteConfig cfg;
  cfg.seed = 9;
  cfg.k_neighbors = 3;
  const auto samples = smote_sample(minority, 30, cfg);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    EXPECT_EQ(samples[i].base, i % minority.size());  // round robin over base rows
    const auto& s = samples[i];
    Point expect(2);
    for (std::size_t k = 0; k < 2; ++k) {
      expect[k] = minority[s.base][k] + s.gap * (minority[s.neighbor][k] - minority[s.base][k]);
    }
    EXPECT_EQ(s.point, expect);
  }
  EXPECT_EQ(smote_sample(minority, 30, cfg)[17].point, samples[17].point);
}

TEST(Smote, BinaryColumnsStayBinary) {
  auto minority = cloud(20, 3, 3);
  Rng rng(4);
  for (auto& p : minority) p[2] = rng.bernoulli(0.5) ? 1.0 : 0.0;
  SmoteConfig cfg;
  cfg.binary_columns = {2};
  for (const auto& s : smote_sample(minority, 100, cfg)) {
    EXPECT_TRUE(s.point[2] == 0.0 || s.point[2] == 1.0);
  }
}

TEST(Smote, Errors) {
  const std::vector<Point> one = {{1.0, 2.0}};
  try {
    smote_sample(one, 3, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCannotInterpolate);
  }
  SmoteConfig cfg;
  cfg.binary_columns = {7};
  EXPECT_THROW(smote_sample(cloud(5, 2, 1), 3, cfg), Error);
}

TEST(SmoteBalance, ExactClassCounts) {
  const auto x = cloud(130, 2, 6);
  std::vector<int> y(130, 0);
  for (std::size_t i = 0; i < 30; ++i) y[i * 4] = 1;
  const auto set = smote_balance(x, y, {});
  EXPECT_EQ(set.per_class_counts.at(0), 100u);
  EXPECT_EQ(set.per_class_counts.at(1), 100u);
  std::size_t synthetic = 0;
  for (const auto& r : set.rows) {
    if (!r.synthetic) continue;
    ++synthetic;
    EXPECT_EQ(r.label, 1);
    EXPECT_EQ(y[r.source], 1);  // source points at an original minority row
  }
  EXPECT_EQ(synthetic, 70u);
}

TEST(SmotePc, BalancesExactlyAndIsDeterministic) {
  ManifoldSpec spec;
  spec.majority = 400;
  spec.minority = 40;
  spec.seed = 3;
  const Dataset d = synth_manifold(spec);
  const auto x = d.feature_rows();
  const auto y = d.labels();
  SmotePcConfig cfg;
  cfg.smote.seed = 11;
  const auto a = smote_pc(x, y, cfg);
  EXPECT_EQ(a.per_class_counts.at(0), 400u);
  EXPECT_EQ(a.per_class_counts.at(1), 400u);
  ASSERT_EQ(a.classes.size(), 1u);
  EXPECT_EQ(a.classes[0].synthesized, 360u);
  EXPECT_GE(a.classes[0].accepted_batches, 1);
  const auto b = smote_pc(x, y, cfg);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) EXPECT_EQ(a.rows[i].features, b.rows[i].features);
}

TEST(SmotePc, ImpossibleThresholdRelaxes) {
  ManifoldSpec spec;
  spec.majority = 200;
  spec.minority = 20;
  spec.seed = 4;
  const Dataset d = synth_manifold(spec);
  SmotePcConfig cfg;
  cfg.similarity_threshold = 1.5;  // unreachable: cosine is at most 1
  cfg.max_rejects = 2;
  const auto set = smote_pc(d.feature_rows(), d.labels(), cfg);
  EXPECT_TRUE(set.threshold_relaxed);
  EXPECT_LE(set.classes[0].final_threshold, 1.0);
  EXPECT_EQ(set.per_class_counts.at(1), 200u);
}

TEST(SmotePc, AlreadyBalancedIsUnchanged) {
  const auto x = cloud(40, 2, 7);
  std::vector<int> y(40);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 2);
  const auto set = smote_pc(x, y, {});
  EXPECT_EQ(set.rows.size(), 40u);
  EXPECT_TRUE(std::none_of(set.rows.begin(), set.rows.end(), [](const BalancedRow& r) { return r.synthetic; }));
}

TEST(SmotePc, RejectsBadBatchFraction) {
  SmotePcConfig cfg;
  cfg.batch_fraction = 0.0;
  const auto x = cloud(10, 2, 1);
  const std::vector<int> y = {0, 0, 0, 0, 0, 0, 0, 1, 1, 1};
  EXPECT_THROW(smote_pc(x, y, cfg), Error);
}

TEST(SmotePc, ThreeClassesArePaddedToTheMajority) {
  std::vector<Point> x;
  std::vector<int> y;
  const std::size_t sizes[] = {120, 30, 12};
  for (int c = 0; c < 3; ++c) {
    for (const auto& p : cloud(sizes[c], 2, 20 + static_cast<std::uint64_t>(c))) {
      x.push_back({p[0] + 4.0 * c, p[1]});
      y.push_back(c);
    }
  }
  SmotePcConfig cfg;
  cfg.smote.seed = 2;
  const auto set = smote_pc(x, y, cfg);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(set.per_class_counts.at(c), 120u) << "class " << c;
  EXPECT_EQ(set.classes.size(), 2u);
  for (const auto& r : set.rows) {
    if (r.synthetic) EXPECT_EQ(y[r.source], r.label);
  }
}

TEST(SmotePc, OriginalRowsSurviveAsAMultiset) {
  ManifoldSpec spec;
  spec.majority = 300;
  spec.minority = 30;
  spec.seed = 6;
  const Dataset d = synth_manifold(spec);
  auto x = d.feature_rows();
  auto y = d.labels();
  x.push_back(x[0]);  // a duplicate must be kept twice
  y.push_back(y[0]);
  const auto set = smote_pc(x, y, {});
  std::multiset<std::pair<Point, int>> in, out;
  for (std::size_t i = 0; i < x.size(); ++i) in.insert({x[i], y[i]});
  for (const auto& r : set.rows) {
    if (!r.synthetic) out.insert({r.features, r.label});
  }
  EXPECT_EQ(in, out);
}

TEST(SmotePc, IndependentRefitMeetsTheThreshold) {
  ManifoldSpec spec;
  spec.majority = 400;
  spec.minority = 40;
  spec.seed = 8;
  const Dataset d = synth_manifold(spec);
  const auto x = d.feature_rows();
  const auto y = d.labels();
  SmotePcConfig cfg;
  cfg.smote.seed = 4;
  const auto set = smote_pc(x, y, cfg);
  ASSERT_FALSE(set.threshold_relaxed);
  std::vector<Point> minority, augmented;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (y[i] == 1) minority.push_back(x[i]);
  }
  augmented = minority;
  for (const auto& r : set.rows) {
    if (r.synthetic) augmented.push_back(r.features);
  }
  const auto before = fit_curve(minority, cfg.curve).curve;
  const auto after = fit_curve(augmented, cfg.curve).curve;
  EXPECT_GE(curve_cosine_similarity(before, after, cfg.similarity_points), cfg.similarity_threshold);
}

TEST(BalanceReport, NoSyntheticsMeansIdenticalCurves) {
  const auto x = cloud(60, 2, 9);
  std::vector<int> y(60);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 2);
  const auto set = smote_pc(x, y, {});
  const auto r = balance_report(x, y, set, {});
  EXPECT_NEAR(r.raw_vs_smote, 1.0, 1e-12);
  EXPECT_NEAR(r.raw_vs_smotepc, 1.0, 1e-12);
  EXPECT_NEAR(r.smote_vs_smotepc, 1.0, 1e-12);
}

}  // namespace
}  // namespace cpijit
