#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace cpijit {

/// The 14 change-level metrics plus the FIX flag, in canonical table order.
enum class Metric : std::size_t {
  kNs, kNd, kNf, kEntropy, kLa, kLd, kLt, kChurn, kFix, kNdev, kAge, kNuc, kExp, kRexp, kSexp,
};

inline constexpr std::size_t kMetricCount = 15;

inline constexpr std::array<std::string_view, kMetricCount> kCanonicalMetricNames = {
    "ns", "nd", "nf", "entropy", "la", "ld", "lt", "churn",
    "fix", "ndev", "age", "nuc", "exp", "rexp", "sexp"};

/// Canonical index of a metric name, or nullopt for unknown names.
std::optional<std::size_t> canonical_metric_index(std::string_view name);

/// 90 days, the width used for "3-month" windows.
inline constexpr std::int64_t kDefaultWindowSeconds = 90LL * 24 * 3600;

struct ChangeMetrics {
  std::array<double, kMetricCount> values{};

  double& operator[](Metric m) { return values[static_cast<std::size_t>(m)]; }
  double operator[](Metric m) const { return values[static_cast<std::size_t>(m)]; }
  bool fix() const { return (*this)[Metric::kFix] != 0.0; }
};

struct Changeset {
  std::string id;
  std::int64_t timestamp = 0;  // Unix seconds
  std::vector<double> features;  // aligned with Dataset::feature_names
  int label = 0;                 // 0 clean, 1 defect-inducing
  std::optional<std::vector<std::string>> modified_files;
};

struct Dataset {
  std::string project;
  std::vector<std::string> feature_names;
  std::vector<Changeset> changesets;

  std::size_t size() const { return changesets.size(); }
  bool empty() const { return changesets.empty(); }
  std::optional<std::size_t> feature_index(std::string_view name) const;
  std::vector<int> labels() const;
  std::vector<std::int64_t> timestamps() const;
  /// Column `j` of the feature matrix.
  std::vector<double> column(std::size_t j) const;
  /// Row-major feature rows.
  std::vector<std::vector<double>> feature_rows() const;
};

enum class SegmentKind { kCountEqual, kTimeWindow };

/// A contiguous view into a Dataset. The parent must outlive the segment.
struct Segment {
  std::size_t index = 0;
  SegmentKind kind = SegmentKind::kCountEqual;
  std::size_t offset = 0;           // position of the first changeset in the parent
  std::int64_t window_start = 0;    // time windows only
  std::span<const Changeset> changesets;

  std::size_t size() const { return changesets.size(); }
  bool empty() const { return changesets.empty(); }
};

/// Copies a segment (or a run of segments) out as a standalone dataset.
Dataset materialize(const Dataset& parent, const Segment& segment);
Dataset materialize(const Dataset& parent, std::span<const Segment> segments);
Dataset slice(const Dataset& parent, std::size_t begin, std::size_t end);

using WarningSink = std::function<void(const std::string&)>;

/// Maps canonical fields onto CSV column names.
struct SchemaMap {
  std::string id_column = "commit_id";
  std::string timestamp_column = "timestamp";
  std::string label_column = "label";
  std::string files_column;  // empty: no file lists
  /// canonical metric name -> CSV column; metrics absent here use their
  /// canonical name as the column name.
  std::map<std::string, std::string> metric_columns;
  /// Metrics to ingest, canonical names. Empty means all 15.
  std::vector<std::string> metrics;
  /// Empty: integer Unix seconds. Otherwise a strptime-style format, read as UTC.
  std::string timestamp_format;
  char delimiter = ',';
  char files_separator = ';';

  static SchemaMap from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Reads a changeset CSV and orders it by timestamp (ties keep input order).
/// Throws Error{kSchema} for missing columns, {kEmptyDataset} for a file with
/// no data rows and {kParse} naming the offending data row (1-based) and column.
Dataset load_csv(const std::filesystem::path& path, const SchemaMap& schema,
                 const WarningSink& warn = {});
Dataset read_csv(std::istream& in, const SchemaMap& schema, std::string project = {},
                 const WarningSink& warn = {});

/// Writes the canonical layout: commit_id,timestamp,<features>,label[,files].
void write_csv(std::ostream& out, const Dataset& d);

/// ln(x + 1) on every feature except fix.
Dataset log_transform(const Dataset& d);

struct CollinearityResult {
  Dataset dataset;
  std::vector<std::string> removed;
};

/// Greedy keep-first removal: walking features in order, a feature is dropped
/// when |Spearman rho| with an already kept feature exceeds `threshold`.
CollinearityResult remove_collinear(const Dataset& d, double threshold = 0.9,
                                    const WarningSink& warn = {});

/// Mid-ranks (1-based, ties averaged).
std::vector<double> average_ranks(std::span<const double> values);
/// Spearman rank correlation; 0 when either column is constant.
double spearman(std::span<const double> a, std::span<const double> b);

std::vector<Segment> partition_equal(const Dataset& d, std::size_t n_segments);
std::vector<Segment> partition_window(const Dataset& d,
                                      std::int64_t width_seconds = kDefaultWindowSeconds);

}  // namespace cpijit
