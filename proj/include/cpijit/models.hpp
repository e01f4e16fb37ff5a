#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cpijit/nn.hpp"
#include "cpijit/principal_curve.hpp"

namespace cpijit {

struct TrainConfig {
  int epochs = 50;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  int early_stop_patience = 10;
  double dropout_rate = 0.2;
  std::size_t hidden_size = 32;
  std::size_t num_layers = 3;
  std::size_t lookback = 6;
  /// Hidden widths of the dense classifier; a single sigmoid unit follows.
  std::vector<std::size_t> dense_sizes = {32, 16};
  /// DeepICP with the forecasting branch; false leaves the single-step
  /// branch and the classifier only.
  bool forecast_part = true;
  double clip_norm = 5.0;

  /// Throws kConfig on non-positive sizes or rates.
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Per-column affine scaling to zero mean, unit variance. Constant columns
/// keep scale 1.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(std::span<const Point> rows);
  static Standardizer identity(std::size_t dim);
  Point apply(std::span<const double> row) const;
  std::size_t dim() const { return mean.size(); }
};

/// Window rows are Z vectors (features then label), oldest first. The target
/// is the Z vector of the changeset right after the window.
struct ForecastExample {
  std::vector<Point> window;
  Point target;
};

/// A changeset to classify together with the Z vectors of the changesets
/// that precede it.
struct IcpExample {
  std::vector<Point> window;
  Point x;
  int label = 0;
};

/// One example per position t in [lookback, n): the window holds Z_{t-lookback}
/// .. Z_{t-1} and the target is Z_t. Throws kInsufficientData for n <= lookback.
std::vector<ForecastExample> forecast_examples(std::span<const Point> features, std::span<const int> labels,
                                               std::size_t lookback);

/// Z vectors of the `lookback` rows before t; positions before the first row
/// are zero vectors.
std::vector<Point> preceding_window(std::span<const Point> features, std::span<const int> labels, std::size_t t,
                                    std::size_t lookback);

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  int best_epoch = -1;
  int epochs_run = 0;
  bool stopped_early = false;
};

/// LSTM over the Z window with a linear head predicting the next Z vector;
/// the last head output is the label logit.
class ForecastModel {
 public:
  ForecastModel() = default;
  ForecastModel(std::size_t feature_dim, const TrainConfig& config);

  void init(std::uint64_t seed);
  std::vector<nn::ParamRef> params();

  /// Loss on an example already passed through prepare(): MSE over feature
  /// dimensions plus BCE on the label logit.
  double loss(const ForecastExample& prepared, Rng* dropout_rng) const;
  /// Same, accumulating parameter gradients.
  double loss_and_grad(const ForecastExample& prepared, Rng* dropout_rng);

  ForecastExample prepare(const ForecastExample& raw) const;
  /// Probability that the changeset after the window is defect-inducing.
  double predict_proba(std::span<const Point> window) const;
  /// Forecast of the next Z vector: features in input units, then probability.
  Point predict_next(std::span<const Point> window) const;

  std::size_t feature_dim() const { return feature_dim_; }

  nn::LstmStack stack;
  nn::Dense head;
  std::size_t lookback = 6;
  Standardizer scaler;

 private:
  std::vector<double> forward(const std::vector<Point>& window, Rng* dropout_rng, nn::LstmStack::Cache* cache) const;
  std::vector<Point> prepare_window(std::span<const Point> window) const;

  std::size_t feature_dim_ = 0;
};

/// Part A: multi-step LSTM stack over the preceding Z window. Part B:
/// single-step LSTM stack over the changeset's own features. Their final
/// hidden states are concatenated and fed to a ReLU dense network ending in
/// one sigmoid unit.
class DeepIcpModel {
 public:
  DeepIcpModel() = default;
  DeepIcpModel(std::size_t feature_dim, const TrainConfig& config);

  void init(std::uint64_t seed);
  std::vector<nn::ParamRef> params();

  double loss(const IcpExample& prepared, Rng* dropout_rng) const;
  double loss_and_grad(const IcpExample& prepared, Rng* dropout_rng);

  IcpExample prepare(const IcpExample& raw) const;
  /// Probability in (0, 1), eval mode.
  double predict(const IcpExample& raw) const;
  std::vector<double> predict(std::span<const IcpExample> raw) const;

  std::size_t feature_dim() const { return feature_dim_; }
  bool forecast_part() const { return forecast_part_; }

  nn::LstmStack part_a;
  nn::LstmStack part_b;
  std::vector<nn::Dense> part_c;
  std::size_t lookback = 6;
  Standardizer scaler;

 private:
  struct Cache;
  double logit(const IcpExample& prepared, Rng* dropout_rng, Cache* cache) const;

  std::size_t feature_dim_ = 0;
  bool forecast_part_ = true;
};

struct LogisticModel {
  std::vector<double> weights;
  double bias = 0.0;
};

/// Penalised maximum likelihood by Newton iterations on standardized
/// features; the returned weights act on the raw features.
LogisticModel fit_logistic(std::span<const Point> features, std::span<const int> labels, double ridge = 1e-4,
                           int max_iter = 100);
double predict(const LogisticModel& model, std::span<const double> x);

template <typename Model>
struct Fit {
  Model model;
  TrainHistory history;
};

/// Minibatch Adam with early stopping on the validation loss; returns the
/// parameters of the best validation epoch. An empty validation set disables
/// early stopping.
Fit<ForecastModel> train_forecaster(std::span<const ForecastExample> train, std::span<const ForecastExample> val,
                                    const TrainConfig& config);
Fit<DeepIcpModel> train_deepicp(std::span<const IcpExample> train, std::span<const IcpExample> val,
                                const TrainConfig& config);
/// Warm-start retraining on a newer segment: same hyperparameters, fresh
/// optimizer moments, the model's own feature scaling.
Fit<DeepIcpModel> incremental_update(const DeepIcpModel& model, std::span<const IcpExample> train,
                                     std::span<const IcpExample> val, const TrainConfig& config);

nlohmann::json to_json(const ForecastModel& model);
nlohmann::json to_json(const DeepIcpModel& model);
nlohmann::json to_json(const LogisticModel& model);
ForecastModel forecast_model_from_json(const nlohmann::json& j);
DeepIcpModel deepicp_model_from_json(const nlohmann::json& j);
LogisticModel logistic_model_from_json(const nlohmann::json& j);

/// Little-endian IEEE-754 doubles, base64 encoded.
std::string encode_doubles(std::span<const double> values);
std::vector<double> decode_doubles(std::string_view text);

}  // namespace cpijit
