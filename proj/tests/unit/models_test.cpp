#include <cmath>
#include <limits>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "cpijit/error.hpp"
#include "cpijit/experiment.hpp"
#include "cpijit/metrics.hpp"
#include "cpijit/models.hpp"
#include "cpijit/synth.hpp"
#include "gradcheck.hpp"

namespace cpijit {
namespace {

TrainConfig small_config(int epochs = 5) {
  TrainConfig c;
  c.epochs = epochs;
  c.hidden_size = 8;
  c.num_layers = 2;
  c.dense_sizes = {8};
  c.lookback = 4;
  c.batch_size = 32;
  c.learning_rate = 1e-2;
  c.seed = 3;
  return c;
}

Point random_point(Rng& rng, std::size_t d) {
  Point p(d);
  for (double& v : p) v = rng.normal();
  return p;
}

template <typename Ex>
std::pair<std::vector<Ex>, std::vector<Ex>> split(const std::vector<Ex>& all, double train_fraction) {
  const auto cut = static_cast<std::ptrdiff_t>(train_fraction * static_cast<double>(all.size()));
  return {std::vector<Ex>(all.begin(), all.begin() + cut), std::vector<Ex>(all.begin() + cut, all.end())};
}

std::vector<int> icp_labels(const std::vector<IcpExample>& xs) {
  std::vector<int> y;
  for (const auto& e : xs) y.push_back(e.label);
  return y;
}

double icp_auc(const DeepIcpModel& m, const std::vector<IcpExample>& xs) {
  const auto scores = m.predict(xs);
  return auc_roc(scores, icp_labels(xs));
}

// Gradient checks on the composite models ------------------------------------

TEST(ForecastModel, GradientMatchesFiniteDifferences) {
  TrainConfig c = small_config();
  c.dropout_rate = 0.25;
  ForecastModel m(3, c);
  m.init(5);
  Rng rng(6);
  ForecastExample ex;
  for (int t = 0; t < 4; ++t) {
    Point p = random_point(rng, 3);
    p.push_back(rng.bernoulli(0.5) ? 1.0 : 0.0);
    ex.window.push_back(p);
  }
  ex.target = random_point(rng, 3);
  ex.target.push_back(1.0);
  auto params = m.params();
  const auto worst = testing_support::max_relative_error(
      params, [&] { Rng d(42); return m.loss(ex, &d); },
      [&] { nn::zero_grads(params); Rng d(42); m.loss_and_grad(ex, &d); }, 100, 7);
  EXPECT_LT(worst, 1e-4);
}

class DeepIcpGradient : public ::testing::TestWithParam<bool> {};

TEST_P(DeepIcpGradient, FusionMatchesFiniteDifferences) {
  TrainConfig c = small_config();
  c.dropout_rate = 0.25;
  c.forecast_part = GetParam();
  DeepIcpModel m(3, c);
  m.init(8);
  Rng rng(9);
  IcpExample ex;
  for (int t = 0; t < 4; ++t) {
    Point p = random_point(rng, 3);
    p.push_back(rng.bernoulli(0.5) ? 1.0 : 0.0);
    ex.window.push_back(p);
  }
  ex.x = random_point(rng, 3);
  ex.label = 1;
  auto params = m.params();
  const auto worst = testing_support::max_relative_error(
      params, [&] { Rng d(43); return m.loss(ex, &d); },
      [&] { nn::zero_grads(params); Rng d(43); m.loss_and_grad(ex, &d); }, 100, 10);
  EXPECT_LT(worst, 1e-4);
}

INSTANTIATE_TEST_SUITE_P(WithAndWithoutForecastPart, DeepIcpGradient, ::testing::Bool());

TEST(DeepIcpModel, AblationDropsForecastPart) {
  TrainConfig c = small_config();
  c.forecast_part = false;
  DeepIcpModel m(3, c);
  m.init(1);
  EXPECT_FALSE(m.forecast_part());
  EXPECT_EQ(m.part_c.front().in(), c.hidden_size);
  c.forecast_part = true;
  DeepIcpModel full(3, c);
  EXPECT_EQ(full.part_c.front().in(), 2 * c.hidden_size);
}

// Windows ---------------------------------------------------------------------

TEST(Windows, PrecedingWindowZeroPadsBeforeStart) {
  const std::vector<Point> f = {{1.0}, {2.0}, {3.0}};
  const std::vector<int> y = {1, 0, 1};
  const auto w = preceding_window(f, y, 1, 3);
  ASSERT_EQ(w.size(), 3u);
  EXPECT_EQ(w[0], (Point{0.0, 0.0}));
  EXPECT_EQ(w[1], (Point{0.0, 0.0}));
  EXPECT_EQ(w[2], (Point{1.0, 1.0}));
}

TEST(Windows, ForecastExamplesNeedMoreRowsThanLookback) {
  const std::vector<Point> f(4, Point{1.0});
  const std::vector<int> y(4, 0);
  try {
    forecast_examples(f, y, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInsufficientData);
  }
  const auto ex = forecast_examples(f, y, 3);
  ASSERT_EQ(ex.size(), 1u);
  EXPECT_EQ(ex[0].window.size(), 3u);
  EXPECT_EQ(ex[0].target, (Point{1.0, 0.0}));
}

// Logistic baseline ---------------------------------------------------------

TEST(Logistic, ZeroWeightsPredictHalf) {
  const LogisticModel m{{0.0, 0.0, 0.0}, 0.0};
  EXPECT_EQ(predict(m, Point{1.0, -4.0, 9.0}), 0.5);
}

TEST(Logistic, KnownWeightsGiveSigmoidOfScore) {
  const LogisticModel m{{0.5, -1.0}, 0.25};
  const Point x = {2.0, 0.3};
  EXPECT_NEAR(predict(m, x), 1.0 / (1.0 + std::exp(-(0.5 * 2.0 - 0.3 + 0.25))), 1e-15);
}

TEST(Logistic, BinaryFeatureMatchesClosedFormMle) {
  // With one binary feature the likelihood factorizes, so the maximizer is
  // bias = logit(p0), weight = logit(p1) - logit(p0).
  std::vector<Point> x;
  std::vector<int> y;
  auto add = [&](double v, int label, int count) {
    for (int k = 0; k < count; ++k) {
      x.push_back({v});
      y.push_back(label);
    }
  };
  add(0.0, 1, 30);
  add(0.0, 0, 70);
  add(1.0, 1, 80);
  add(1.0, 0, 20);
  const LogisticModel m = fit_logistic(x, y);
  auto logit = [](double p) { return std::log(p / (1 - p)); };
  EXPECT_NEAR(m.bias, logit(0.3), 1e-3);
  EXPECT_NEAR(m.weights[0], logit(0.8) - logit(0.3), 1e-3);
}

TEST(Logistic, RejectsNonBinaryLabels) {
  const std::vector<Point> x = {{0.0}, {1.0}};
  const std::vector<int> y = {0, 2};
  EXPECT_THROW(fit_logistic(x, y), Error);
}

// Training behaviour --------------------------------------------------------

TEST(ForecastModel, LearnsConstantSequence) {
  std::vector<Point> f(200, Point{2.0, -1.0});
  std::vector<int> y(200, 1);
  const auto ex = forecast_examples(f, y, 4);
  TrainConfig c = small_config(30);
  const auto fit = train_forecaster(ex, {}, c);
  const Point next = fit.model.predict_next(ex.front().window);
  EXPECT_GT(fit.model.predict_proba(ex.front().window), 0.95);
  EXPECT_NEAR(next[0], 2.0, 0.05);
  EXPECT_NEAR(next[1], -1.0, 0.05);
}

TEST(ForecastModel, MarkovLabelsArePredictable) {
  MarkovSpec s;
  s.n = 1500;
  s.seed = 1;
  const Dataset d = synth_markov(s);
  const auto ex = forecast_examples(d.feature_rows(), d.labels(), 4);
  auto [train, test] = split(ex, 0.7);
  const auto fit = train_forecaster(train, {}, small_config(3));
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& e : test) {
    scores.push_back(fit.model.predict_proba(e.window));
    labels.push_back(static_cast<int>(e.target.back()));
  }
  EXPECT_GT(auc_roc(scores, labels), 0.7);
}

TEST(ForecastModel, IndependentLabelsGiveChanceAuc) {
  MarkovSpec s;
  s.n = 1500;
  s.p_1_given_1 = 0.3;
  s.p_1_given_0 = 0.3;
  s.seed = 2;
  const Dataset d = synth_markov(s);
  const auto ex = forecast_examples(d.feature_rows(), d.labels(), 4);
  auto [train, test] = split(ex, 0.7);
  const auto fit = train_forecaster(train, {}, small_config(3));
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& e : test) {
    scores.push_back(fit.model.predict_proba(e.window));
    labels.push_back(static_cast<int>(e.target.back()));
  }
  EXPECT_NEAR(auc_roc(scores, labels), 0.5, 0.05);
}

TEST(DeepIcpModel, LearnsPlantedFeatureSignal) {
  JointSpec s;
  s.n = 2000;
  s.seed = 4;
  const Dataset d = synth_joint(s);
  const auto ex = icp_examples(d, 0, d.size(), 4);
  auto [train, val] = split(ex, 0.8);
  const auto fit = train_deepicp(train, val, small_config(10));
  EXPECT_GE(icp_auc(fit.model, val), 0.85);
  EXPECT_GE(fit.history.best_epoch, 0);
  EXPECT_EQ(fit.history.train_loss.size(), static_cast<std::size_t>(fit.history.epochs_run));
}

TEST(DeepIcpModel, TrainingIsDeterministic) {
  JointSpec s;
  s.n = 400;
  s.seed = 5;
  const Dataset d = synth_joint(s);
  const auto ex = icp_examples(d, 0, d.size(), 4);
  auto [train, val] = split(ex, 0.8);
  const auto a = train_deepicp(train, val, small_config(3));
  const auto b = train_deepicp(train, val, small_config(3));
  EXPECT_EQ(to_json(a.model).dump(), to_json(b.model).dump());
  TrainConfig other = small_config(3);
  other.seed = 4;
  const auto c = train_deepicp(train, val, other);
  EXPECT_NE(to_json(a.model).dump(), to_json(c.model).dump());
}

TEST(DeepIcpModel, BatchPredictionMatchesSingle) {
  JointSpec s;
  s.n = 100;
  const Dataset d = synth_joint(s);
  const auto ex = icp_examples(d, 0, d.size(), 4);
  DeepIcpModel m(4, small_config());
  m.init(2);
  m.scaler = Standardizer::identity(4);
  const auto batch = m.predict(ex);
  for (std::size_t i = 0; i < ex.size(); ++i) EXPECT_EQ(batch[i], m.predict(ex[i]));
}

TEST(DeepIcpModel, EarlyStoppingRestoresBestEpoch) {
  JointSpec s;
  s.n = 300;
  s.seed = 6;
  const Dataset d = synth_joint(s);
  const auto ex = icp_examples(d, 0, d.size(), 4);
  auto [train, val] = split(ex, 0.7);
  TrainConfig c = small_config(40);
  c.early_stop_patience = 2;
  c.learning_rate = 5e-2;
  const auto fit = train_deepicp(train, val, c);
  const double best = fit.history.val_loss[static_cast<std::size_t>(fit.history.best_epoch)];
  for (double v : fit.history.val_loss) EXPECT_GE(v, best);
  if (fit.history.stopped_early) {
    EXPECT_EQ(fit.history.epochs_run, fit.history.best_epoch + 1 + c.early_stop_patience);
  }
}

TEST(DeepIcpModel, NonFiniteInputIsNumericFailure) {
  JointSpec s;
  s.n = 100;
  Dataset d = synth_joint(s);
  const auto ex = icp_examples(d, 0, d.size(), 4);
  auto bad = ex;
  bad[5].x[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    train_deepicp(bad, {}, small_config(1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNumericFailure);
  }
}

// Incremental update -------------------------------------------------------

struct Phases {
  std::vector<IcpExample> first, second, second_test;
};

// Two consecutive stretches; `flip` negates the label rule in the second.
Phases phases(bool flip, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  d.feature_names = {"a", "b"};
  for (int i = 0; i < 2400; ++i) {
    Changeset c;
    c.id = std::to_string(i);
    c.timestamp = i;
    c.features = {rng.normal(), rng.normal()};
    const double sign = flip && i >= 1200 ? -1.0 : 1.0;
    c.label = rng.bernoulli(nn::sigmoid(3.0 * sign * c.features[0])) ? 1 : 0;
    d.changesets.push_back(c);
  }
  const auto ex = icp_examples(d, 0, d.size(), 4);
  Phases p;
  p.first.assign(ex.begin(), ex.begin() + 1200);
  p.second.assign(ex.begin() + 1200, ex.begin() + 1800);
  p.second_test.assign(ex.begin() + 1800, ex.end());
  return p;
}

TEST(IncrementalUpdate, StationaryDataDoesNotDegrade) {
  const Phases p = phases(false, 11);
  const TrainConfig c = small_config(8);
  const auto base = train_deepicp(p.first, {}, c);
  const double before = icp_auc(base.model, p.second_test);
  const auto updated = incremental_update(base.model, p.second, {}, c);
  EXPECT_GE(icp_auc(updated.model, p.second_test), before - 0.02);
}

TEST(IncrementalUpdate, AdaptsToFlippedConcept) {
  const Phases p = phases(true, 12);
  const TrainConfig c = small_config(8);
  const auto base = train_deepicp(p.first, {}, c);
  const double before = icp_auc(base.model, p.second_test);
  const auto updated = incremental_update(base.model, p.second, {}, c);
  const double after = icp_auc(updated.model, p.second_test);
  EXPECT_LT(before, 0.5);
  EXPECT_GT(after, before + 0.2);
}

TEST(IncrementalUpdate, EmptySegmentIsInsufficientData) {
  DeepIcpModel m(2, small_config());
  m.init(1);
  m.scaler = Standardizer::identity(2);
  try {
    incremental_update(m, {}, {}, small_config());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInsufficientData);
  }
}

// Configuration and checkpoints -------------------------------------------

TEST(TrainConfig, ValidateRejectsBadValues) {
  auto rejects = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    try {
      c.validate();
      return false;
    } catch (const Error& e) {
      return e.code() == ErrorCode::kConfig;
    }
  };
  EXPECT_TRUE(rejects([](TrainConfig& c) { c.epochs = 0; }));
  EXPECT_TRUE(rejects([](TrainConfig& c) { c.batch_size = 0; }));
  EXPECT_TRUE(rejects([](TrainConfig& c) { c.dropout_rate = 1.0; }));
  EXPECT_TRUE(rejects([](TrainConfig& c) { c.learning_rate = -1.0; }));
  EXPECT_TRUE(rejects([](TrainConfig& c) { c.num_layers = 0; }));
  EXPECT_NO_THROW(TrainConfig{}.validate());
}

TEST(TrainConfig, JsonRoundTripAndUnknownKeys) {
  TrainConfig c = small_config();
  c.forecast_part = false;
  const TrainConfig back = train_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  nlohmann::json j = to_json(c);
  j["learning_rat"] = 0.1;
  EXPECT_THROW(train_config_from_json(j), Error);
}

TEST(Checkpoint, DoublesSurviveBase64) {
  const std::vector<double> v = {0.0, -0.0, 1.5, -3.25e-300, std::numeric_limits<double>::infinity(),
                                 std::numeric_limits<double>::denorm_min(), 1.0 / 3.0};
  const auto back = decode_doubles(encode_doubles(v));
  ASSERT_EQ(back.size(), v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_EQ(std::signbit(back[i]), std::signbit(v[i]));
    EXPECT_EQ(back[i], v[i]);
  }
  EXPECT_EQ(encode_doubles(std::vector<double>{1.0}), "AAAAAAAA8D8=");
  EXPECT_THROW(decode_doubles("abc"), Error);
}

TEST(Checkpoint, ModelsRoundTripExactly) {
  JointSpec s;
  s.n = 200;
  const Dataset d = synth_joint(s);
  const auto ex = icp_examples(d, 0, d.size(), 4);
  const auto fit = train_deepicp(ex, {}, small_config(1));
  const DeepIcpModel back = deepicp_model_from_json(nlohmann::json::parse(to_json(fit.model).dump()));
  EXPECT_EQ(back.predict(ex), fit.model.predict(ex));

  const auto fex = forecast_examples(d.feature_rows(), d.labels(), 4);
  const auto ffit = train_forecaster(fex, {}, small_config(1));
  const ForecastModel fback = forecast_model_from_json(to_json(ffit.model));
  EXPECT_EQ(fback.predict_next(fex[3].window), ffit.model.predict_next(fex[3].window));

  const LogisticModel lm{{0.1, -2.0}, 0.3};
  const LogisticModel lback = logistic_model_from_json(to_json(lm));
  EXPECT_EQ(lback.weights, lm.weights);
  EXPECT_EQ(lback.bias, lm.bias);

  nlohmann::json wrong = to_json(fit.model);
  wrong["kind"] = "forecast";
  EXPECT_THROW(deepicp_model_from_json(wrong), Error);
}

}  // namespace
}  // namespace cpijit
