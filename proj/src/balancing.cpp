#include "cpijit/balancing.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "cpijit/error.hpp"

namespace cpijit {

namespace {

struct ClassLayout {
  int majority_label = 0;
  std::size_t majority_count = 0;
  std::map<int, std::vector<std::size_t>> rows_by_label;
};

ClassLayout layout_classes(std::span<const Point> features, std::span<const int> labels) {
  if (features.size() != labels.size()) {
    fail(ErrorCode::kDimensionMismatch, "features and labels differ in length");
  }
  ClassLayout layout;
  for (std::size_t i = 0; i < labels.size(); ++i) layout.rows_by_label[labels[i]].push_back(i);
  if (layout.rows_by_label.size() < 2) {
    fail(ErrorCode::kInsufficientData, "balancing needs at least two classes");
  }
  // Ties go to the smallest label (std::map iterates in ascending order).
  for (const auto& [label, rows] : layout.rows_by_label) {
    if (rows.size() > layout.majority_count) {
      layout.majority_count = rows.size();
      layout.majority_label = label;
    }
  }
  return layout;
}

std::vector<Point> gather(std::span<const Point> features, const std::vector<std::size_t>& rows) {
  std::vector<Point> out;
  out.reserve(rows.size());
  for (std::size_t i : rows) out.push_back(features[i]);
  return out;
}

std::string class_stream(std::string_view prefix, int label) {
  return std::string(prefix) + "/" + std::to_string(label);
}

void append_original(BalancedSet& set, std::span<const Point> features, int label,
                     const std::vector<std::size_t>& rows) {
  for (std::size_t i : rows) set.rows.push_back({features[i], label, false, i});
}

void append_synthetic(BalancedSet& set, int label, const std::vector<std::size_t>& rows,
                      const std::vector<SyntheticSample>& samples) {
  for (const auto& s : samples) set.rows.push_back({s.point, label, true, rows[s.base]});
}

void finish_counts(BalancedSet& set) {
  set.per_class_counts.clear();
  for (const auto& r : set.rows) ++set.per_class_counts[r.label];
}

std::vector<Point> with_samples(const std::vector<Point>& base, const std::vector<SyntheticSample>& samples) {
  std::vector<Point> out = base;
  out.reserve(base.size() + samples.size());
  for (const auto& s : samples) out.push_back(s.point);
  return out;
}

}  // namespace

SmoteGenerator::SmoteGenerator(std::span<const Point> minority, const SmoteConfig& config)
    : minority_(minority.begin(), minority.end()),
      binary_columns_(config.binary_columns),
      rng_(config.seed) {
  if (minority_.size() < 2) {
    fail(ErrorCode::kCannotInterpolate, "SMOTE needs at least 2 minority samples");
  }
  if (config.k_neighbors < 1) fail(ErrorCode::kArgument, "k_neighbors must be positive");
  const std::size_t dim = minority_.front().size();
  is_binary_.assign(dim, false);
  for (std::size_t c : binary_columns_) {
    if (c >= dim) fail(ErrorCode::kArgument, "binary column index out of range");
    is_binary_[c] = true;
  }
  for (const auto& p : minority_) {
    if (p.size() != dim) fail(ErrorCode::kDimensionMismatch, "ragged minority rows");
  }
  const std::size_t n = minority_.size();
  k_ = std::min<std::size_t>(static_cast<std::size_t>(config.k_neighbors), n - 1);

  neighbors_.resize(n);
  std::vector<std::pair<double, std::size_t>> dist(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t w = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double d2 = 0.0;
      for (std::size_t c = 0; c < dim; ++c) {
        if (is_binary_[c]) continue;
        const double diff = minority_[i][c] - minority_[j][c];
        d2 += diff * diff;
      }
      dist[w++] = {d2, j};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k_), dist.end());
    neighbors_[i].reserve(k_);
    for (std::size_t r = 0; r < k_; ++r) neighbors_[i].push_back(dist[r].second);
  }
}

std::vector<SyntheticSample> SmoteGenerator::next(std::size_t count) {
  std::vector<SyntheticSample> out;
  out.reserve(count);
  const std::size_t dim = minority_.front().size();
  for (std::size_t s = 0; s < count; ++s) {
    const std::size_t base = cursor_;
    cursor_ = (cursor_ + 1) % minority_.size();
    const std::size_t nn = neighbors_[base][rng_.below(k_)];
    const double gap = rng_.uniform_closed();
    SyntheticSample sample{Point(dim), base, nn, gap};
    const Point& a = minority_[base];
    const Point& b = minority_[nn];
    for (std::size_t c = 0; c < dim; ++c) {
      sample.point[c] = is_binary_[c] ? a[c] : a[c] + gap * (b[c] - a[c]);
    }
    for (std::size_t c : binary_columns_) {
      double ones = a[c] != 0.0 ? 1.0 : 0.0;
      for (std::size_t j : neighbors_[base]) ones += minority_[j][c] != 0.0 ? 1.0 : 0.0;
      const double votes = static_cast<double>(k_ + 1);
      if (2.0 * ones > votes) sample.point[c] = 1.0;
      else if (2.0 * ones < votes) sample.point[c] = 0.0;
    }
    out.push_back(std::move(sample));
  }
  return out;
}

std::vector<SyntheticSample> smote_sample(std::span<const Point> minority, std::size_t k_needed,
                                          const SmoteConfig& config) {
  SmoteGenerator gen(minority, config);
  return gen.next(k_needed);
}

std::vector<Point> BalancedSet::feature_rows() const {
  std::vector<Point> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.features);
  return out;
}

std::vector<int> BalancedSet::labels() const {
  std::vector<int> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.label);
  return out;
}

BalancedSet smote_pc(std::span<const Point> features, std::span<const int> labels,
                     const SmotePcConfig& config) {
  if (!(config.batch_fraction > 0.0 && config.batch_fraction <= 1.0)) {
    fail(ErrorCode::kArgument, "batch_fraction must lie in (0, 1]");
  }
  if (config.max_rejects < 0) fail(ErrorCode::kArgument, "max_rejects must be nonnegative");
  const ClassLayout layout = layout_classes(features, labels);

  BalancedSet set;
  append_original(set, features, layout.majority_label, layout.rows_by_label.at(layout.majority_label));
  for (const auto& [label, rows] : layout.rows_by_label) {
    if (label == layout.majority_label) continue;
    const std::size_t deficit = layout.majority_count - rows.size();
    append_original(set, features, label, rows);
    ClassBalance cls;
    cls.label = label;
    cls.original = rows.size();
    cls.final_threshold = config.similarity_threshold;
    if (deficit == 0) {
      set.classes.push_back(cls);
      continue;
    }
    if (rows.size() < 2) {
      fail(ErrorCode::kCannotInterpolate, "class " + std::to_string(label) + " has fewer than 2 rows");
    }
    const std::vector<Point> minority = gather(features, rows);
    const PrincipalCurve reference = fit_curve(minority, config.curve).curve;

    SmoteConfig smote = config.smote;
    smote.seed = substream_seed(config.smote.seed, class_stream("smote", label));
    SmoteGenerator gen(minority, smote);
    const std::size_t batch = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(config.batch_fraction * static_cast<double>(deficit))));

    // The gate sees everything accepted so far plus the candidate, and the
    // last batch is trimmed to the remaining deficit, so the returned set is
    // exactly the last one that passed.
    std::vector<SyntheticSample> chosen;
    double threshold = config.similarity_threshold;
    int consecutive = 0;
    while (chosen.size() < deficit) {
      auto candidate = gen.next(std::min(batch, deficit - chosen.size()));
      std::vector<SyntheticSample> trial = chosen;
      trial.insert(trial.end(), candidate.begin(), candidate.end());
      const PrincipalCurve curve = fit_curve(with_samples(minority, trial), config.curve).curve;
      const double sim = curve_cosine_similarity(reference, curve, config.similarity_points);
      if (sim >= threshold) {
        chosen = std::move(trial);
        ++cls.accepted_batches;
        consecutive = 0;
      } else {
        ++cls.rejected_batches;
        if (++consecutive >= config.max_rejects) {
          threshold -= 0.01;
          cls.threshold_relaxed = true;
        }
      }
    }
    cls.final_threshold = threshold;

    const PrincipalCurve final_curve = fit_curve(with_samples(minority, chosen), config.curve).curve;
    cls.curve_similarity = curve_cosine_similarity(reference, final_curve, config.similarity_points);
    cls.synthesized = chosen.size();
    append_synthetic(set, label, rows, chosen);

    set.curve_similarity = std::min(set.curve_similarity, cls.curve_similarity);
    set.rejected_batches += cls.rejected_batches;
    set.threshold_relaxed = set.threshold_relaxed || cls.threshold_relaxed;
    set.classes.push_back(cls);
  }
  finish_counts(set);
  return set;
}

BalancedSet smote_balance(std::span<const Point> features, std::span<const int> labels,
                          const SmoteConfig& config) {
  const ClassLayout layout = layout_classes(features, labels);
  BalancedSet set;
  append_original(set, features, layout.majority_label, layout.rows_by_label.at(layout.majority_label));
  for (const auto& [label, rows] : layout.rows_by_label) {
    if (label == layout.majority_label) continue;
    append_original(set, features, label, rows);
    const std::size_t deficit = layout.majority_count - rows.size();
    ClassBalance cls;
    cls.label = label;
    cls.original = rows.size();
    if (deficit > 0) {
      SmoteConfig smote = config;
      smote.seed = substream_seed(config.seed, class_stream("smote", label));
      const auto samples = smote_sample(gather(features, rows), deficit, smote);
      append_synthetic(set, label, rows, samples);
      cls.synthesized = samples.size();
    }
    set.classes.push_back(cls);
  }
  finish_counts(set);
  return set;
}

BalanceReport balance_report(std::span<const Point> features, std::span<const int> labels,
                             const BalancedSet& smotepc, const SmotePcConfig& config) {
  if (features.empty()) fail(ErrorCode::kEmptyDataset, "balance_report on empty segment");
  auto labelled = [](std::span<const Point> rows, std::span<const int> ys) {
    std::vector<Point> out;
    out.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      Point p = rows[i];
      p.push_back(static_cast<double>(ys[i]));
      out.push_back(std::move(p));
    }
    return out;
  };
  const BalancedSet smote = smote_balance(features, labels, config.smote);

  BalanceReport report;
  report.raw_curve = fit_curve(labelled(features, labels), config.curve).curve;
  report.smote_curve = fit_curve(labelled(smote.feature_rows(), smote.labels()), config.curve).curve;
  report.smotepc_curve =
      fit_curve(labelled(smotepc.feature_rows(), smotepc.labels()), config.curve).curve;
  const std::size_t m = config.similarity_points;
  report.raw_vs_smote = curve_cosine_similarity(report.raw_curve, report.smote_curve, m);
  report.raw_vs_smotepc = curve_cosine_similarity(report.raw_curve, report.smotepc_curve, m);
  report.smote_vs_smotepc = curve_cosine_similarity(report.smote_curve, report.smotepc_curve, m);
  return report;
}

nlohmann::json to_json(const BalancedSet& set) {
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [label, n] : set.per_class_counts) counts[std::to_string(label)] = n;
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : set.classes) {
    classes.push_back({{"label", c.label},
                       {"original", c.original},
                       {"synthesized", c.synthesized},
                       {"curve_similarity", c.curve_similarity},
                       {"accepted_batches", c.accepted_batches},
                       {"rejected_batches", c.rejected_batches},
                       {"threshold_relaxed", c.threshold_relaxed},
                       {"final_threshold", c.final_threshold}});
  }
  return {{"per_class_counts", counts},
          {"curve_similarity", set.curve_similarity},
          {"rejected_batches", set.rejected_batches},
          {"threshold_relaxed", set.threshold_relaxed},
          {"classes", classes}};
}

nlohmann::json to_json(const BalanceReport& report) {
  return {{"raw_vs_smote", report.raw_vs_smote},
          {"raw_vs_smotepc", report.raw_vs_smotepc},
          {"smote_vs_smotepc", report.smote_vs_smotepc},
          {"raw_curve", to_json(report.raw_curve)},
          {"smote_curve", to_json(report.smote_curve)},
          {"smotepc_curve", to_json(report.smotepc_curve)}};
}

}  // namespace cpijit
