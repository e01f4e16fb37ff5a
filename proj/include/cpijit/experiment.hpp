#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cpijit/balancing.hpp"
#include "cpijit/changeset.hpp"
#include "cpijit/metrics.hpp"
#include "cpijit/models.hpp"
#include "cpijit/stats.hpp"

namespace cpijit {

/// Segment layout shared by the model experiments: the data is cut into
/// n_segments equal-count segments, the model trains on train_window
/// segments starting at train_start (last val_fraction held out, in arrival
/// order) and is tested on the segments test_offsets after the window.
struct ExperimentPlan {
  std::size_t n_segments = 20;
  std::size_t train_start = 8;
  std::size_t train_window = 4;
  double val_fraction = 0.1;
  std::vector<std::size_t> test_offsets = {0, 1, 2, 3};
  /// Independent repetitions; repetition r uses seed substream "repeat/<r>".
  std::size_t repeats = 1;

  /// Throws kInfeasiblePlan naming the violated constraint.
  void validate(std::size_t dataset_size) const;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  ExperimentPlan plan;
  TrainConfig train;
  SmotePcConfig balance;
  /// Forecast experiment: training repetitions, share of the windows used
  /// for training (the rest is the test set) and random-baseline repeats.
  std::size_t rq1_repeats = 50;
  double rq1_train_fraction = 0.7;
  int baseline_repeats = 50;
  double verdict_tolerance = 0.005;
  double threshold = 0.5;
  /// Worker threads across repetitions; every repetition is sequential.
  unsigned jobs = 1;
};

nlohmann::json to_json(const ExperimentPlan& plan);
nlohmann::json to_json(const SmotePcConfig& config);
nlohmann::json to_json(const ExperimentConfig& config);
ExperimentPlan plan_from_json(const nlohmann::json& j);
SmotePcConfig balance_config_from_json(const nlohmann::json& j);
/// Missing keys keep defaults; unknown keys throw kConfig.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

/// Hex FNV-1a digest of a JSON document's compact dump.
std::string digest(const nlohmann::json& j);
/// Digest of the canonical CSV serialisation.
std::string digest(const Dataset& d);

struct EvalReport {
  std::string project;
  std::string scenario;
  std::string segment;  // "t+0", "t+1", ...
  std::size_t segment_index = 0;
  std::optional<double> auc_roc;  // empty when the test segment has one class
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double accuracy = 0.0;
  bool degenerate = false;
  std::size_t n_test = 0;
  std::size_t n_pos = 0;
  std::uint64_t seed = 0;
  std::string config_digest;
};

nlohmann::json to_json(const EvalReport& r);

struct ComparisonRow {
  std::string project;
  std::string metric;
  double without = 0.0;
  double with = 0.0;
  char verdict = '=';
};

void write_comparison_csv(std::ostream& out, const std::vector<ComparisonRow>& rows);

struct Rq1Result {
  std::string project;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  BaselineAuc baseline;
  double forecast_mean = 0.0;
  double forecast_std = 0.0;
  std::vector<double> forecast_aucs;
  char verdict = '=';
};

nlohmann::json to_json(const Rq1Result& r);

/// Random baseline against the LSTM forecaster on the label of the next
/// changeset. Windows are split in arrival order; the last val_fraction of
/// the training windows drives early stopping.
Rq1Result run_rq1(const Dataset& d, const ExperimentConfig& config);

enum class Rq4Variant { kSmotePcAblation, kForecastAblation, kModelAge, kIncremental, kBaselineCompare };

std::string_view to_string(Rq4Variant v);
/// Accepts "rq4a".."rq4e" and the long names.
Rq4Variant rq4_variant_from_string(std::string_view name);

struct Rq4Result {
  Rq4Variant variant = Rq4Variant::kSmotePcAblation;
  std::vector<EvalReport> reports;
  std::vector<ComparisonRow> comparisons;
};

/// Runs one model experiment over plan.repeats repetitions.
///  - smotepc ablation: DeepICP trained on SMOTE vs SMOTE-PC balanced data
///  - forecast ablation: DeepICP without vs with the forecasting branch
///  - model age: one model scored on every test segment; comparisons hold
///    the first test segment against each later one
///  - incremental: frozen model vs the same model retrained on the first
///    test segment, both scored on the later segments
///  - baseline compare: logistic regression vs DeepICP, both on SMOTE-PC data
Rq4Result run_rq4(const Dataset& d, Rq4Variant variant, const ExperimentConfig& config);

/// DeepICP inputs for rows [begin, end) of d, each with its preceding window.
std::vector<IcpExample> icp_examples(const Dataset& d, std::size_t begin, std::size_t end, std::size_t lookback);

/// Balances training examples with SMOTE-PC (use_curve_gate) or plain SMOTE.
/// Synthetic rows inherit the preceding window of their base row. The fix
/// column, when present, is treated as binary.
std::vector<IcpExample> balance_examples(std::span<const IcpExample> train,
                                         const std::vector<std::string>& feature_names,
                                         const SmotePcConfig& config, bool use_curve_gate);

struct DriftReport {
  DriftSeries series;
  /// Defect share per time window (empty windows hold nullopt).
  std::vector<std::optional<double>> defect_ratio;
  std::vector<std::size_t> window_sizes;
  /// Curves of equal-count segments and their pairwise cosine similarity.
  std::vector<PrincipalCurve> segment_curves;
  std::vector<std::vector<double>> curve_similarity;
};

/// Time-windowed defect-pair and class-ratio series plus per-segment
/// principal curves (features and label).
DriftReport drift_characterization(const Dataset& d, std::int64_t window_seconds, std::size_t curve_segments,
                                   const CurveFitConfig& curve_config);

}  // namespace cpijit
