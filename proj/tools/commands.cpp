#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include <Eigen/Core>
#include <CLI11.hpp>

#include "cpijit/balancing.hpp"
#include "cpijit/csv.hpp"
#include "cpijit/error.hpp"
#include "cpijit/experiment.hpp"
#include "cpijit/models.hpp"
#include "cpijit/stats.hpp"
#include "cpijit/synth.hpp"

#ifndef CPIJIT_VERSION
#define CPIJIT_VERSION "0.0.0"
#endif

namespace cpijit::cli {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string num(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot read '" + p.string() + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}

  void text(const std::string& name, const std::string& content) {
    std::ofstream out(dir_ / name, std::ios::binary);
    out << content;
    if (!out) fail(ErrorCode::kIo, "cannot write '" + (dir_ / name).string() + "'");
    files_.push_back(name);
  }
  void json_file(const std::string& name, const json& j) { text(name, j.dump(2) + "\n"); }

  const std::vector<std::string>& files() const { return files_; }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  std::vector<std::string> files_;
};

void warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

std::vector<Dataset> load_inputs(const RunConfig& c, bool preprocess) {
  if (c.inputs.empty()) fail(ErrorCode::kConfig, "no input files (config 'inputs' or positional arguments)");
  std::vector<Dataset> out;
  for (const auto& p : c.inputs) {
    Dataset d = load_csv(p, c.schema, warn);
    if (preprocess && c.preprocess.log_transform) d = log_transform(d);
    if (preprocess && c.preprocess.remove_collinear) {
      d = remove_collinear(d, c.preprocess.collinearity_threshold, warn).dataset;
    }
    out.push_back(std::move(d));
  }
  return out;
}

void ensure_unique_projects(const std::vector<Dataset>& ds) {
  for (std::size_t a = 0; a < ds.size(); ++a) {
    for (std::size_t b = a + 1; b < ds.size(); ++b) {
      if (ds[a].project == ds[b].project) {
        fail(ErrorCode::kConfig, "two inputs share the project name '" + ds[a].project + "'");
      }
    }
  }
}

// Subcommands ------------------------------------------------------------------

void cmd_preprocess(const RunConfig& c, Outputs& out) {
  json summary = json::object();
  for (const auto& p : c.inputs) {
    Dataset d = load_csv(p, c.schema, warn);
    std::vector<std::string> removed;
    if (c.preprocess.log_transform) d = log_transform(d);
    if (c.preprocess.remove_collinear) {
      auto r = remove_collinear(d, c.preprocess.collinearity_threshold, warn);
      d = std::move(r.dataset);
      removed = std::move(r.removed);
    }
    std::ostringstream csv;
    write_csv(csv, d);
    out.text(d.project + ".csv", csv.str());
    summary[d.project] = {{"changesets", d.size()}, {"features", d.feature_names}, {"removed", removed}};
  }
  out.json_file("preprocess.json", summary);
}

void cmd_analyze_relationship(const RunConfig& c, Outputs& out) {
  const auto datasets = load_inputs(c, false);
  ensure_unique_projects(datasets);
  json report = json::object();
  std::ostringstream csv;
  csv << "project,n";
  for (const char* k : {"P000", "P001", "P010", "P011", "P100", "P101", "P110", "P111"}) csv << ',' << k;
  for (const char* k : {"P000", "P001", "P010", "P011", "P100", "P101", "P110", "P111"}) csv << ",ci_" << k;
  csv << '\n';
  for (const auto& d : datasets) {
    if (d.size() < 3) {
      fail(ErrorCode::kInsufficientData, d.project + ": relationship analysis needs at least 3 changesets, got " +
                                             std::to_string(d.size()));
    }
    const auto table = pair_table(d);
    const auto chi = chi_square_independence(table);
    const auto triplets = triplet_distribution(d, c.analysis.confidence);
    json entry = {{"changesets", d.size()},
                  {"pair_table", to_json(table)},
                  {"chi_square", {{"statistic", chi.statistic}, {"p_value", chi.p_value}}},
                  {"triplets", to_json(triplets)}};
    try {
      entry["intersecting_fraction"] = intersecting_fraction(d);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kUnsupportedDataset) throw;
      entry["intersecting_fraction"] = nullptr;
      entry["intersecting_note"] = e.what();
    }
    report[d.project] = entry;
    csv << csv::escape(d.project) << ',' << triplets.n;
    for (double p : triplets.p) csv << ',' << num(p);
    for (double h : triplets.ci_half_width) csv << ',' << num(h);
    csv << '\n';
  }
  out.json_file("relationship.json", report);
  out.text("triplets.csv", csv.str());
}

void cmd_analyze_drift(const RunConfig& c, Outputs& out) {
  const auto datasets = load_inputs(c, true);
  ensure_unique_projects(datasets);
  const std::int64_t width = c.analysis.window_days * 24 * 3600;
  for (const auto& d : datasets) {
    const DriftReport r = drift_characterization(d, width, c.analysis.curve_segments, c.curve);
    std::ostringstream csv;
    csv << "window_start,changesets,defect_ratio,defect_first_pairs,p_0_given_1,p_1_given_1\n";
    for (std::size_t w = 0; w < r.series.window_starts.size(); ++w) {
      csv << r.series.window_starts[w] << ',' << r.window_sizes[w] << ',' << num(r.defect_ratio[w]) << ','
          << r.series.defect_first_pairs[w] << ',' << num(r.series.p_0_given_1[w]) << ','
          << num(r.series.p_1_given_1[w]) << '\n';
    }
    out.text("drift_" + d.project + ".csv", csv.str());
    json curves = json::array();
    for (const auto& curve : r.segment_curves) curves.push_back(to_json(curve));
    out.json_file("curves_" + d.project + ".json",
                  {{"features", d.feature_names}, {"curves", curves}, {"similarity", r.curve_similarity}});
  }
}

void cmd_fit_curve(const RunConfig& c, Outputs& out) {
  const auto datasets = load_inputs(c, true);
  ensure_unique_projects(datasets);
  for (const auto& d : datasets) {
    const auto fit = fit_curve(curve_points(d, c.curve_include_label), c.curve);
    std::vector<std::string> coords = d.feature_names;
    if (c.curve_include_label) coords.emplace_back("label");
    const json report = {{"iterations", fit.report.iterations},
                         {"converged", fit.report.converged},
                         {"mean_sq_projection_distance", fit.report.final_mean_sq_projection_distance},
                         {"distance_history", fit.report.distance_history}};
    out.json_file("curve_" + d.project + ".json",
                  {{"coordinates", coords}, {"curve", to_json(fit.curve)}, {"report", report}});
    // Plot-ready view of the curve in the LA/NF plane, or the first two
    // coordinates when those metrics are absent.
    std::size_t ix = 0, iy = 1;
    if (auto la = d.feature_index("la"), nf = d.feature_index("nf"); la && nf) {
      ix = *la;
      iy = *nf;
    }
    std::ostringstream csv;
    csv << "arclength," << coords[ix] << ',' << coords[iy] << '\n';
    for (std::size_t v = 0; v < fit.curve.size(); ++v) {
      csv << num(fit.curve.arclength()[v]) << ',' << num(fit.curve.vertices()[v][ix]) << ','
          << num(fit.curve.vertices()[v][iy]) << '\n';
    }
    out.text("projection_" + d.project + ".csv", csv.str());
  }
}

SmotePcConfig balance_config(const RunConfig& c, const Dataset& d, std::uint64_t seed) {
  SmotePcConfig bc = c.experiment.balance;
  bc.smote.seed = substream_seed(seed, "smote");
  for (std::size_t j = 0; j < d.feature_names.size(); ++j) {
    if (d.feature_names[j] == "fix") bc.smote.binary_columns.push_back(j);
  }
  return bc;
}

void cmd_balance(const RunConfig& c, Outputs& out) {
  const auto datasets = load_inputs(c, true);
  ensure_unique_projects(datasets);
  for (const auto& d : datasets) {
    const auto rows = d.feature_rows();
    const auto labels = d.labels();
    const SmotePcConfig bc = balance_config(c, d, *c.seed);
    const BalancedSet set = smote_pc(rows, labels, bc);
    const BalanceReport report = balance_report(rows, labels, set, bc);
    std::ostringstream csv;
    for (const auto& f : d.feature_names) csv << f << ',';
    csv << "label,synthetic,source\n";
    for (const auto& r : set.rows) {
      for (double v : r.features) csv << num(v) << ',';
      csv << r.label << ',' << (r.synthetic ? 1 : 0) << ',' << r.source << '\n';
    }
    out.text("balanced_" + d.project + ".csv", csv.str());
    out.json_file("balance_" + d.project + ".json", {{"balance", to_json(set)}, {"curves", to_json(report)}});
  }
}

// Rows split 90/10 in arrival order.
template <typename T>
std::pair<std::span<const T>, std::span<const T>> ordered_split(const std::vector<T>& v, double val_fraction) {
  const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(v.size())));
  const std::span<const T> all(v);
  return {all.first(v.size() - n_val), all.subspan(v.size() - n_val)};
}

json history_json(const TrainHistory& h) {
  return {{"train_loss", h.train_loss},
          {"val_loss", h.val_loss},
          {"best_epoch", h.best_epoch},
          {"epochs_run", h.epochs_run},
          {"stopped_early", h.stopped_early}};
}

void cmd_train(const Invocation& inv, Outputs& out) {
  const RunConfig& c = inv.config;
  const auto datasets = load_inputs(c, true);
  ensure_unique_projects(datasets);
  TrainConfig tc = c.experiment.train;
  tc.seed = substream_seed(*c.seed, "train");
  const double val_fraction = c.experiment.plan.val_fraction;
  for (const auto& d : datasets) {
    json model, history = json::object();
    if (inv.model_kind == "forecast") {
      const auto ex = forecast_examples(d.feature_rows(), d.labels(), tc.lookback);
      const auto [train, val] = ordered_split(ex, val_fraction);
      const auto fit = train_forecaster(train, val, tc);
      model = to_json(fit.model);
      history = history_json(fit.history);
    } else {
      const auto ex = icp_examples(d, 0, d.size(), tc.lookback);
      const auto [train, val] = ordered_split(ex, val_fraction);
      const auto balanced = balance_examples(train, d.feature_names, balance_config(c, d, *c.seed), true);
      if (inv.model_kind == "logistic") {
        std::vector<Point> x;
        std::vector<int> y;
        for (const auto& e : balanced) {
          x.push_back(e.x);
          y.push_back(e.label);
        }
        model = to_json(fit_logistic(x, y));
      } else if (inv.model_kind == "deepicp") {
        const auto fit = train_deepicp(balanced, val, tc);
        model = to_json(fit.model);
        history = history_json(fit.history);
      } else {
        fail(ErrorCode::kArgument, "unknown model kind '" + inv.model_kind + "'");
      }
    }
    model["features"] = d.feature_names;
    out.json_file("model_" + d.project + ".json", model);
    out.json_file("history_" + d.project + ".json", history);
  }
}

void cmd_evaluate(const Invocation& inv, Outputs& out) {
  const RunConfig& c = inv.config;
  if (!inv.model_file) fail(ErrorCode::kArgument, "evaluate needs --model-file");
  json checkpoint;
  try {
    checkpoint = json::parse(read_file(*inv.model_file));
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, "model file is not valid JSON: " + std::string(e.what()));
  }
  const auto datasets = load_inputs(c, true);
  ensure_unique_projects(datasets);
  const std::string kind = checkpoint.value("kind", "");
  for (const auto& d : datasets) {
    if (checkpoint.contains("features") && checkpoint["features"].get<std::vector<std::string>>() != d.feature_names) {
      fail(ErrorCode::kDimensionMismatch, d.project + ": features differ from those the model was trained on");
    }
    std::vector<std::string> ids;
    std::vector<double> scores;
    std::vector<int> labels;
    if (kind == "forecast") {
      const ForecastModel m = forecast_model_from_json(checkpoint);
      const auto ex = forecast_examples(d.feature_rows(), d.labels(), m.lookback);
      for (std::size_t i = 0; i < ex.size(); ++i) {
        ids.push_back(d.changesets[i + m.lookback].id);
        scores.push_back(m.predict_proba(ex[i].window));
        labels.push_back(static_cast<int>(ex[i].target.back()));
      }
    } else if (kind == "deepicp") {
      const DeepIcpModel m = deepicp_model_from_json(checkpoint);
      const auto ex = icp_examples(d, 0, d.size(), m.lookback);
      scores = m.predict(ex);
      for (std::size_t i = 0; i < ex.size(); ++i) {
        ids.push_back(d.changesets[i].id);
        labels.push_back(ex[i].label);
      }
    } else if (kind == "logistic") {
      const LogisticModel m = logistic_model_from_json(checkpoint);
      for (const auto& ch : d.changesets) {
        ids.push_back(ch.id);
        scores.push_back(predict(m, ch.features));
        labels.push_back(ch.label);
      }
    } else {
      fail(ErrorCode::kConfig, "model file has unknown kind '" + kind + "'");
    }
    std::ostringstream csv;
    csv << "commit_id,label,score\n";
    for (std::size_t i = 0; i < ids.size(); ++i) {
      csv << csv::escape(ids[i]) << ',' << labels[i] << ',' << num(scores[i]) << '\n';
    }
    out.text("predictions_" + d.project + ".csv", csv.str());
    const auto m = classification_metrics(scores, labels, c.experiment.threshold);
    const auto pos = std::count(labels.begin(), labels.end(), 1);
    const bool both = pos > 0 && static_cast<std::size_t>(pos) < labels.size();
    out.json_file("metrics_" + d.project + ".json",
                  {{"auc_roc", both ? json(auc_roc(scores, labels)) : json(nullptr)},
                   {"f1", m.f1},
                   {"precision", m.precision},
                   {"recall", m.recall},
                   {"accuracy", m.accuracy},
                   {"degenerate", m.degenerate},
                   {"n_test", labels.size()},
                   {"n_pos", pos}});
  }
}

void cmd_experiment(const Invocation& inv, Outputs& out) {
  const RunConfig& c = inv.config;
  const auto datasets = load_inputs(c, true);
  ensure_unique_projects(datasets);
  std::ostringstream jsonl;
  std::vector<ComparisonRow> rows;
  if (inv.experiment == "rq1") {
    for (const auto& d : datasets) {
      const Rq1Result r = run_rq1(d, c.experiment);
      jsonl << to_json(r).dump() << '\n';
      rows.push_back({d.project, "auc_roc", r.baseline.mean, r.forecast_mean, r.verdict});
    }
  } else {
    const Rq4Variant v = rq4_variant_from_string(inv.experiment);
    for (const auto& d : datasets) {
      const Rq4Result r = run_rq4(d, v, c.experiment);
      for (const auto& rep : r.reports) jsonl << to_json(rep).dump() << '\n';
      rows.insert(rows.end(), r.comparisons.begin(), r.comparisons.end());
    }
  }
  out.text("reports.jsonl", jsonl.str());
  std::ostringstream csv;
  write_comparison_csv(csv, rows);
  out.text("comparison.csv", csv.str());
}

void cmd_synth(const RunConfig& c, Outputs& out) {
  if (!c.synth.is_object() || !c.synth.contains("kind")) {
    fail(ErrorCode::kConfig, "synth needs a 'synth' section with a 'kind' (or --kind)");
  }
  const Dataset d = synth_from_json(c.synth, *c.seed);
  std::ostringstream csv;
  write_csv(csv, d);
  out.text("synthetic.csv", csv.str());
  out.json_file("schema.json", synthetic_schema(d).to_json());
}

}  // namespace

fs::path run(const Invocation& inv) {
  const RunConfig& c = inv.config;
  json identity = c.to_json();
  identity.erase("out");
  identity["experiment"].erase("jobs");
  json inputs = json::array();
  for (const auto& p : c.inputs) {
    inputs.push_back({{"path", p.generic_string()}, {"digest", hex(fnv1a64(read_file(p)))}});
  }
  json args = {{"subcommand", inv.subcommand}};
  if (inv.subcommand == "experiment") args["experiment"] = inv.experiment;
  if (inv.subcommand == "train") args["model"] = inv.model_kind;
  if (inv.model_file) {
    args["model_file"] = {{"path", inv.model_file->generic_string()},
                          {"digest", hex(fnv1a64(read_file(*inv.model_file)))}};
  }
  json id_source = {{"args", args}, {"config", identity}, {"inputs", inputs}};
  for (auto& in : id_source["inputs"]) in.erase("path");
  const std::string config_digest = digest(identity);
  std::string run_id = inv.subcommand;
  if (inv.subcommand == "experiment") run_id += "-" + inv.experiment;
  run_id += "-" + digest(id_source).substr(0, 12);

  const fs::path dir = c.out / run_id;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create '" + dir.string() + "': " + ec.message());
  Outputs out(dir);

  if (inv.subcommand == "preprocess") {
    cmd_preprocess(c, out);
  } else if (inv.subcommand == "analyze-relationship") {
    cmd_analyze_relationship(c, out);
  } else if (inv.subcommand == "analyze-drift") {
    cmd_analyze_drift(c, out);
  } else if (inv.subcommand == "fit-curve") {
    cmd_fit_curve(c, out);
  } else if (inv.subcommand == "balance") {
    cmd_balance(c, out);
  } else if (inv.subcommand == "train") {
    cmd_train(inv, out);
  } else if (inv.subcommand == "evaluate") {
    cmd_evaluate(inv, out);
  } else if (inv.subcommand == "experiment") {
    cmd_experiment(inv, out);
  } else if (inv.subcommand == "synth") {
    cmd_synth(c, out);
  } else {
    fail(ErrorCode::kArgument, "unknown subcommand '" + inv.subcommand + "'");
  }

  const std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  json manifest = {{"run_id", run_id},
                   {"args", args},
                   {"seed", *c.seed},
                   {"config", c.to_json()},
                   {"config_digest", config_digest},
                   {"inputs", inputs},
                   {"outputs", out.files()},
                   {"versions",
                    {{"cpijit", CPIJIT_VERSION},
                     {"compiler", __VERSION__},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                   "." + std::to_string(EIGEN_MINOR_VERSION)},
                     {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                     {"cli11", CLI11_VERSION}}},
                   {"created_utc", stamp}};
  std::ofstream mf(dir / "manifest.json");
  mf << manifest.dump(2) << "\n";
  if (!mf) fail(ErrorCode::kIo, "cannot write manifest in '" + dir.string() + "'");
  return dir;
}

}  // namespace cpijit::cli
