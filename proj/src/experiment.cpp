#include "cpijit/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <map>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "cpijit/csv.hpp"
#include "cpijit/error.hpp"
#include "cpijit/stats.hpp"

namespace cpijit {

namespace {

using json = nlohmann::json;

void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& body) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> workers;
  const unsigned count = static_cast<unsigned>(std::min<std::size_t>(jobs, n));
  for (unsigned w = 0; w < count; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

std::string offset_label(std::size_t offset) { return "t+" + std::to_string(offset); }

template <typename T>
void read_key(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

void reject_unknown(const json& j, const json& defaults, const std::string& where) {
  if (!j.is_object()) fail(ErrorCode::kConfig, where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) fail(ErrorCode::kConfig, "unknown key '" + key + "' in " + where);
  }
}

// Rows [begin, end) of the plan's training window, split for validation.
struct Layout {
  std::size_t train_begin = 0;
  std::size_t split = 0;  // first validation row
  std::size_t train_end = 0;
  std::vector<std::pair<std::size_t, std::pair<std::size_t, std::size_t>>> tests;  // offset -> rows
};

Layout make_layout(const Dataset& d, const ExperimentPlan& plan) {
  plan.validate(d.size());
  const auto segments = partition_equal(d, plan.n_segments);
  Layout l;
  l.train_begin = segments[plan.train_start].offset;
  const Segment& last = segments[plan.train_start + plan.train_window - 1];
  l.train_end = last.offset + last.size();
  const std::size_t n = l.train_end - l.train_begin;
  const auto n_val = static_cast<std::size_t>(std::floor(plan.val_fraction * static_cast<double>(n)));
  l.split = l.train_end - n_val;
  for (std::size_t off : plan.test_offsets) {
    const Segment& s = segments[plan.train_start + plan.train_window + off];
    l.tests.push_back({off, {s.offset, s.offset + s.size()}});
  }
  return l;
}

EvalReport score(const std::string& project, const std::string& scenario, std::size_t offset,
                 std::size_t segment_index, const std::vector<double>& scores, const std::vector<int>& labels,
                 std::uint64_t seed, const std::string& config_digest, double threshold) {
  EvalReport r;
  r.project = project;
  r.scenario = scenario;
  r.segment = offset_label(offset);
  r.segment_index = segment_index;
  r.n_test = labels.size();
  r.n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (r.n_pos > 0 && r.n_pos < r.n_test) r.auc_roc = auc_roc(scores, labels);
  const auto m = classification_metrics(scores, labels, threshold);
  r.f1 = m.f1;
  r.precision = m.precision;
  r.recall = m.recall;
  r.accuracy = m.accuracy;
  r.degenerate = m.degenerate;
  r.seed = seed;
  r.config_digest = config_digest;
  return r;
}

std::vector<int> labels_of(std::span<const IcpExample> ex) {
  std::vector<int> out;
  out.reserve(ex.size());
  for (const auto& e : ex) out.push_back(e.label);
  return out;
}

// Mean AUC and F1 per (scenario, segment) over repetitions.
struct Summary {
  std::map<std::pair<std::string, std::string>, std::vector<double>> auc, f1;

  explicit Summary(const std::vector<EvalReport>& reports) {
    for (const auto& r : reports) {
      if (r.auc_roc) auc[{r.scenario, r.segment}].push_back(*r.auc_roc);
      f1[{r.scenario, r.segment}].push_back(r.f1);
    }
  }
  double get(const std::string& metric, const std::string& scenario, const std::string& segment) const {
    const auto& table = metric == "auc_roc" ? auc : f1;
    auto it = table.find({scenario, segment});
    return it == table.end() ? std::nan("") : mean(it->second);
  }
};

std::vector<ComparisonRow> paired_rows(const Summary& s, const std::string& project, const std::string& without,
                                       const std::string& with, const std::vector<std::string>& segments,
                                       double tolerance) {
  std::vector<ComparisonRow> rows;
  for (const std::string metric : {"auc_roc", "f1"}) {
    std::vector<double> a, b;
    for (const auto& seg : segments) {
      ComparisonRow row{project, metric + ":" + seg, s.get(metric, without, seg), s.get(metric, with, seg), '='};
      if (std::isnan(row.without) || std::isnan(row.with)) continue;
      row.verdict = verdict(row.without, row.with, tolerance);
      a.push_back(row.without);
      b.push_back(row.with);
      rows.push_back(row);
    }
    if (!a.empty()) {
      rows.push_back({project, metric + ":avg", mean(a), mean(b), verdict(mean(a), mean(b), tolerance)});
    }
  }
  return rows;
}

}  // namespace

// Plans and configs -----------------------------------------------------------

void ExperimentPlan::validate(std::size_t dataset_size) const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorCode::kInfeasiblePlan, "infeasible plan: " + what);
  };
  need(n_segments > 0, "n_segments must be positive");
  need(train_window > 0, "train_window must be positive");
  need(!test_offsets.empty(), "test_offsets must not be empty");
  need(val_fraction >= 0.0 && val_fraction < 1.0, "val_fraction must lie in [0, 1)");
  need(repeats > 0, "repeats must be positive");
  const std::size_t max_offset = *std::max_element(test_offsets.begin(), test_offsets.end());
  need(train_start + train_window + max_offset < n_segments,
       "train_start + train_window + max test offset (" + std::to_string(train_start + train_window + max_offset) +
           ") must be below n_segments (" + std::to_string(n_segments) + ")");
  need(dataset_size >= n_segments, "dataset has " + std::to_string(dataset_size) +
                                       " changesets, fewer than n_segments (" + std::to_string(n_segments) + ")");
}

json to_json(const ExperimentPlan& p) {
  return {{"n_segments", p.n_segments},     {"train_start", p.train_start},
          {"train_window", p.train_window}, {"val_fraction", p.val_fraction},
          {"test_offsets", p.test_offsets}, {"repeats", p.repeats}};
}

json to_json(const SmotePcConfig& c) {
  return {{"similarity_threshold", c.similarity_threshold},
          {"max_rejects", c.max_rejects},
          {"batch_fraction", c.batch_fraction},
          {"similarity_points", c.similarity_points},
          {"k_neighbors", c.smote.k_neighbors},
          {"curve",
           {{"segments", c.curve.segments},
            {"max_iter", c.curve.max_iter},
            {"tol", c.curve.tol},
            {"smooth_span", c.curve.smooth_span}}}};
}

json to_json(const ExperimentConfig& c) {
  return {{"seed", c.seed},
          {"plan", to_json(c.plan)},
          {"train", to_json(c.train)},
          {"balance", to_json(c.balance)},
          {"rq1_repeats", c.rq1_repeats},
          {"rq1_train_fraction", c.rq1_train_fraction},
          {"baseline_repeats", c.baseline_repeats},
          {"verdict_tolerance", c.verdict_tolerance},
          {"threshold", c.threshold},
          {"jobs", c.jobs}};
}

ExperimentPlan plan_from_json(const json& j) {
  ExperimentPlan p;
  reject_unknown(j, to_json(p), "plan");
  try {
    read_key(j, "n_segments", p.n_segments);
    read_key(j, "train_start", p.train_start);
    read_key(j, "train_window", p.train_window);
    read_key(j, "val_fraction", p.val_fraction);
    read_key(j, "test_offsets", p.test_offsets);
    read_key(j, "repeats", p.repeats);
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("plan: ") + e.what());
  }
  return p;
}

SmotePcConfig balance_config_from_json(const json& j) {
  SmotePcConfig c;
  reject_unknown(j, to_json(c), "balance");
  try {
    read_key(j, "similarity_threshold", c.similarity_threshold);
    read_key(j, "max_rejects", c.max_rejects);
    read_key(j, "batch_fraction", c.batch_fraction);
    read_key(j, "similarity_points", c.similarity_points);
    read_key(j, "k_neighbors", c.smote.k_neighbors);
    if (j.contains("curve")) {
      const json& cj = j.at("curve");
      reject_unknown(cj, to_json(c).at("curve"), "balance.curve");
      read_key(cj, "segments", c.curve.segments);
      read_key(cj, "max_iter", c.curve.max_iter);
      read_key(cj, "tol", c.curve.tol);
      read_key(cj, "smooth_span", c.curve.smooth_span);
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("balance: ") + e.what());
  }
  return c;
}

ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig c;
  reject_unknown(j, to_json(c), "experiment config");
  try {
    read_key(j, "seed", c.seed);
    if (j.contains("plan")) c.plan = plan_from_json(j.at("plan"));
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
    if (j.contains("balance")) c.balance = balance_config_from_json(j.at("balance"));
    read_key(j, "rq1_repeats", c.rq1_repeats);
    read_key(j, "rq1_train_fraction", c.rq1_train_fraction);
    read_key(j, "baseline_repeats", c.baseline_repeats);
    read_key(j, "verdict_tolerance", c.verdict_tolerance);
    read_key(j, "threshold", c.threshold);
    read_key(j, "jobs", c.jobs);
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("experiment config: ") + e.what());
  }
  return c;
}

std::string digest(const json& j) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

std::string digest(const Dataset& d) {
  std::ostringstream out;
  write_csv(out, d);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(out.str())));
  return buf;
}

json to_json(const EvalReport& r) {
  return {{"project", r.project},
          {"scenario", r.scenario},
          {"segment", r.segment},
          {"segment_index", r.segment_index},
          {"auc_roc", r.auc_roc ? json(*r.auc_roc) : json(nullptr)},
          {"f1", r.f1},
          {"precision", r.precision},
          {"recall", r.recall},
          {"accuracy", r.accuracy},
          {"degenerate", r.degenerate},
          {"n_test", r.n_test},
          {"n_pos", r.n_pos},
          {"seed", r.seed},
          {"config_digest", r.config_digest}};
}

void write_comparison_csv(std::ostream& out, const std::vector<ComparisonRow>& rows) {
  out << "project,metric,without,with,verdict\n";
  char buf[64];
  for (const auto& r : rows) {
    out << csv::escape(r.project) << ',' << csv::escape(r.metric) << ',';
    std::snprintf(buf, sizeof buf, "%.6f,%.6f", r.without, r.with);
    out << buf << ',' << r.verdict << '\n';
  }
}

json to_json(const Rq1Result& r) {
  return {{"project", r.project},
          {"n_train", r.n_train},
          {"n_test", r.n_test},
          {"baseline", {{"mean", r.baseline.mean}, {"std", r.baseline.std}, {"repeats", r.baseline.repeats}}},
          {"forecast", {{"mean", r.forecast_mean}, {"std", r.forecast_std}, {"aucs", r.forecast_aucs}}},
          {"verdict", std::string(1, r.verdict)}};
}

// Experiments -----------------------------------------------------------------

Rq1Result run_rq1(const Dataset& d, const ExperimentConfig& config) {
  config.train.validate();
  if (config.rq1_repeats == 0) fail(ErrorCode::kConfig, "rq1_repeats must be positive");
  if (!(config.rq1_train_fraction > 0.0 && config.rq1_train_fraction < 1.0)) {
    fail(ErrorCode::kConfig, "rq1_train_fraction must lie in (0, 1)");
  }
  const auto rows = d.feature_rows();
  const auto labels = d.labels();
  const auto examples = forecast_examples(rows, labels, config.train.lookback);
  const auto n_train =
      static_cast<std::size_t>(std::floor(config.rq1_train_fraction * static_cast<double>(examples.size())));
  const auto n_val = static_cast<std::size_t>(std::floor(config.plan.val_fraction * static_cast<double>(n_train)));
  if (n_train - n_val < 1 || n_train >= examples.size()) {
    fail(ErrorCode::kInsufficientData, "too few changesets for a train/test split");
  }
  const std::span<const ForecastExample> all(examples);
  const auto train = all.subspan(0, n_train - n_val);
  const auto val = all.subspan(n_train - n_val, n_val);
  const auto test = all.subspan(n_train);
  std::vector<int> test_labels;
  for (const auto& ex : test) test_labels.push_back(static_cast<int>(ex.target.back()));

  Rq1Result out;
  out.project = d.project;
  out.n_train = n_train;
  out.n_test = test.size();
  out.baseline = random_baseline(test_labels, config.baseline_repeats, substream_seed(config.seed, "baseline"));
  out.forecast_aucs.assign(config.rq1_repeats, 0.0);
  parallel_for(config.rq1_repeats, config.jobs, [&](std::size_t r) {
    TrainConfig tc = config.train;
    tc.seed = substream_seed(config.seed, "rq1/" + std::to_string(r));
    const auto fit = train_forecaster(train, val, tc);
    std::vector<double> scores;
    scores.reserve(test.size());
    for (const auto& ex : test) scores.push_back(fit.model.predict_proba(ex.window));
    out.forecast_aucs[r] = auc_roc(scores, test_labels);
  });
  out.forecast_mean = mean(out.forecast_aucs);
  if (out.forecast_aucs.size() > 1) {
    double ss = 0.0;
    for (double a : out.forecast_aucs) ss += (a - out.forecast_mean) * (a - out.forecast_mean);
    out.forecast_std = std::sqrt(ss / static_cast<double>(out.forecast_aucs.size() - 1));
  }
  out.verdict = verdict(out.baseline.mean, out.forecast_mean, config.verdict_tolerance);
  return out;
}

std::string_view to_string(Rq4Variant v) {
  switch (v) {
    case Rq4Variant::kSmotePcAblation: return "smotepc_ablation";
    case Rq4Variant::kForecastAblation: return "forecast_ablation";
    case Rq4Variant::kModelAge: return "model_age";
    case Rq4Variant::kIncremental: return "incremental";
    case Rq4Variant::kBaselineCompare: return "baseline_compare";
  }
  return "unknown";
}

Rq4Variant rq4_variant_from_string(std::string_view name) {
  if (name == "rq4a" || name == "smotepc_ablation") return Rq4Variant::kSmotePcAblation;
  if (name == "rq4b" || name == "forecast_ablation") return Rq4Variant::kForecastAblation;
  if (name == "rq4c" || name == "model_age") return Rq4Variant::kModelAge;
  if (name == "rq4d" || name == "incremental") return Rq4Variant::kIncremental;
  if (name == "rq4e" || name == "baseline_compare") return Rq4Variant::kBaselineCompare;
  fail(ErrorCode::kArgument, "unknown experiment '" + std::string(name) + "'");
}

std::vector<IcpExample> icp_examples(const Dataset& d, std::size_t begin, std::size_t end, std::size_t lookback) {
  if (begin > end || end > d.size()) fail(ErrorCode::kArgument, "row range outside the dataset");
  const std::size_t first = begin > lookback ? begin - lookback : 0;
  std::vector<Point> rows;
  std::vector<int> labels;
  for (std::size_t i = first; i < end; ++i) {
    rows.push_back(d.changesets[i].features);
    labels.push_back(d.changesets[i].label);
  }
  std::vector<IcpExample> out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    IcpExample ex;
    ex.window = preceding_window(rows, labels, i - first, lookback);
    ex.x = d.changesets[i].features;
    ex.label = d.changesets[i].label;
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<IcpExample> balance_examples(std::span<const IcpExample> train,
                                         const std::vector<std::string>& feature_names,
                                         const SmotePcConfig& config, bool use_curve_gate) {
  std::vector<Point> features;
  std::vector<int> labels;
  for (const auto& ex : train) {
    features.push_back(ex.x);
    labels.push_back(ex.label);
  }
  SmotePcConfig c = config;
  c.smote.binary_columns.clear();
  for (std::size_t j = 0; j < feature_names.size(); ++j) {
    if (feature_names[j] == "fix") c.smote.binary_columns.push_back(j);
  }
  const BalancedSet set = use_curve_gate ? smote_pc(features, labels, c) : smote_balance(features, labels, c.smote);
  std::vector<IcpExample> out;
  out.reserve(set.rows.size());
  for (const auto& row : set.rows) {
    IcpExample ex;
    ex.x = row.features;
    ex.label = row.label;
    ex.window = train[row.source].window;
    out.push_back(std::move(ex));
  }
  return out;
}

Rq4Result run_rq4(const Dataset& d, Rq4Variant variant, const ExperimentConfig& config) {
  config.train.validate();
  const Layout layout = make_layout(d, config.plan);
  const std::size_t lookback = config.train.lookback;
  const auto train = icp_examples(d, layout.train_begin, layout.split, lookback);
  const auto val = icp_examples(d, layout.split, layout.train_end, lookback);
  std::vector<std::vector<IcpExample>> tests;
  for (const auto& [offset, range] : layout.tests) tests.push_back(icp_examples(d, range.first, range.second, lookback));
  json digest_source = to_json(config);
  digest_source.erase("jobs");
  const std::string config_digest = digest(digest_source);

  std::vector<std::vector<EvalReport>> per_repeat(config.plan.repeats);
  parallel_for(config.plan.repeats, config.jobs, [&](std::size_t r) {
    const std::uint64_t seed = substream_seed(config.seed, "repeat/" + std::to_string(r));
    TrainConfig tc = config.train;
    tc.seed = substream_seed(seed, "train");
    SmotePcConfig bc = config.balance;
    bc.smote.seed = substream_seed(seed, "smote");
    auto& reports = per_repeat[r];

    auto evaluate = [&](const std::string& scenario, const std::function<double(const IcpExample&)>& model,
                        std::size_t first_test) {
      for (std::size_t k = first_test; k < tests.size(); ++k) {
        std::vector<double> scores;
        for (const auto& ex : tests[k]) scores.push_back(model(ex));
        const std::size_t offset = layout.tests[k].first;
        reports.push_back(score(d.project, scenario, offset,
                                config.plan.train_start + config.plan.train_window + offset, scores,
                                labels_of(tests[k]), seed, config_digest, config.threshold));
      }
    };
    auto deepicp = [&](const DeepIcpModel& m) { return [&m](const IcpExample& ex) { return m.predict(ex); }; };

    const auto balanced_pc = balance_examples(train, d.feature_names, bc, true);
    switch (variant) {
      case Rq4Variant::kSmotePcAblation: {
        const auto balanced_smote = balance_examples(train, d.feature_names, bc, false);
        const auto without = train_deepicp(balanced_smote, val, tc);
        evaluate("smote", deepicp(without.model), 0);
        const auto with = train_deepicp(balanced_pc, val, tc);
        evaluate("smotepc", deepicp(with.model), 0);
        break;
      }
      case Rq4Variant::kForecastAblation: {
        TrainConfig ablated = tc;
        ablated.forecast_part = false;
        const auto without = train_deepicp(balanced_pc, val, ablated);
        evaluate("without_forecast", deepicp(without.model), 0);
        const auto with = train_deepicp(balanced_pc, val, tc);
        evaluate("with_forecast", deepicp(with.model), 0);
        break;
      }
      case Rq4Variant::kModelAge: {
        const auto fit = train_deepicp(balanced_pc, val, tc);
        evaluate("deepicp", deepicp(fit.model), 0);
        break;
      }
      case Rq4Variant::kIncremental: {
        if (tests.size() < 2) fail(ErrorCode::kInfeasiblePlan, "incremental update needs at least 2 test segments");
        const auto frozen = train_deepicp(balanced_pc, val, tc);
        evaluate("frozen", deepicp(frozen.model), 1);
        const auto& update = tests.front();
        const auto n_val =
            static_cast<std::size_t>(std::floor(config.plan.val_fraction * static_cast<double>(update.size())));
        const std::span<const IcpExample> upd(update);
        SmotePcConfig uc = bc;
        uc.smote.seed = substream_seed(seed, "smote-update");
        const auto upd_train = balance_examples(upd.first(update.size() - n_val), d.feature_names, uc, true);
        const auto updated = incremental_update(frozen.model, upd_train, upd.subspan(update.size() - n_val), tc);
        evaluate("updated", deepicp(updated.model), 1);
        break;
      }
      case Rq4Variant::kBaselineCompare: {
        std::vector<Point> x;
        std::vector<int> y;
        for (const auto& ex : balanced_pc) {
          x.push_back(ex.x);
          y.push_back(ex.label);
        }
        const LogisticModel logistic = fit_logistic(x, y);
        evaluate("logistic", [&](const IcpExample& ex) { return predict(logistic, ex.x); }, 0);
        const auto fit = train_deepicp(balanced_pc, val, tc);
        evaluate("deepicp", deepicp(fit.model), 0);
        break;
      }
    }
  });

  Rq4Result out;
  out.variant = variant;
  for (auto& v : per_repeat) out.reports.insert(out.reports.end(), v.begin(), v.end());
  const Summary summary(out.reports);
  std::vector<std::string> all_segments, later_segments;
  for (const auto& [offset, range] : layout.tests) all_segments.push_back(offset_label(offset));
  later_segments.assign(all_segments.begin() + 1, all_segments.end());
  const double tol = config.verdict_tolerance;
  switch (variant) {
    case Rq4Variant::kSmotePcAblation:
      out.comparisons = paired_rows(summary, d.project, "smote", "smotepc", all_segments, tol);
      break;
    case Rq4Variant::kForecastAblation:
      out.comparisons = paired_rows(summary, d.project, "without_forecast", "with_forecast", all_segments, tol);
      break;
    case Rq4Variant::kIncremental:
      out.comparisons = paired_rows(summary, d.project, "frozen", "updated", later_segments, tol);
      break;
    case Rq4Variant::kBaselineCompare:
      out.comparisons = paired_rows(summary, d.project, "logistic", "deepicp", all_segments, tol);
      break;
    case Rq4Variant::kModelAge:
      for (const std::string metric : {"auc_roc", "f1"}) {
        const double first = summary.get(metric, "deepicp", all_segments.front());
        std::vector<double> later;
        for (const auto& seg : later_segments) {
          const double v = summary.get(metric, "deepicp", seg);
          if (std::isnan(first) || std::isnan(v)) continue;
          later.push_back(v);
          out.comparisons.push_back({d.project, metric + ":" + seg, first, v, verdict(first, v, tol)});
        }
        if (!later.empty()) {
          out.comparisons.push_back({d.project, metric + ":avg", first, mean(later), verdict(first, mean(later), tol)});
        }
      }
      break;
  }
  return out;
}

DriftReport drift_characterization(const Dataset& d, std::int64_t window_seconds, std::size_t curve_segments,
                                   const CurveFitConfig& curve_config) {
  DriftReport out;
  out.series = drift_series(d, window_seconds);
  for (const auto& w : partition_window(d, window_seconds)) {
    out.window_sizes.push_back(w.size());
    if (w.size() == 0) {
      out.defect_ratio.emplace_back();
      continue;
    }
    std::size_t pos = 0;
    for (const auto& c : w.changesets) pos += c.label == 1 ? 1 : 0;
    out.defect_ratio.emplace_back(static_cast<double>(pos) / static_cast<double>(w.size()));
  }
  if (curve_segments > 0) {
    for (const auto& seg : partition_equal(d, curve_segments)) {
      const Dataset part = materialize(d, seg);
      out.segment_curves.push_back(fit_curve(curve_points(part, true), curve_config).curve);
    }
    const std::size_t k = out.segment_curves.size();
    out.curve_similarity.assign(k, std::vector<double>(k, 1.0));
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = a + 1; b < k; ++b) {
        const double s = curve_cosine_similarity(out.segment_curves[a], out.segment_curves[b]);
        out.curve_similarity[a][b] = out.curve_similarity[b][a] = s;
      }
    }
  }
  return out;
}

}  // namespace cpijit
