#include "cpijit/changeset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "cpijit/csv.hpp"
#include "cpijit/error.hpp"

namespace cpijit {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::optional<double> parse_double(std::string_view text) {
  const std::string s = csv::trim(text);
  if (s.empty()) return std::nullopt;
  double value = 0.0;
  const char* first = s.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    const std::string l = lower(s);
    if (l == "true") return 1.0;
    if (l == "false") return 0.0;
    return std::nullopt;
  }
  return value;
}

std::optional<int> parse_binary(std::string_view text) {
  const std::string l = lower(csv::trim(text));
  if (l == "1" || l == "true" || l == "1.0") return 1;
  if (l == "0" || l == "false" || l == "0.0") return 0;
  return std::nullopt;
}

std::optional<std::int64_t> parse_timestamp(std::string_view text, const std::string& format) {
  const std::string s = csv::trim(text);
  if (s.empty()) return std::nullopt;
  if (format.empty()) {
    std::int64_t value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return value;
  }
  std::tm tm{};
  std::istringstream in(s);
  in >> std::get_time(&tm, format.c_str());
  if (in.fail()) return std::nullopt;
  return static_cast<std::int64_t>(timegm(&tm));
}

std::string row_col(std::size_t row, std::string_view column) {
  return "row " + std::to_string(row) + ", column '" + std::string(column) + "'";
}

Dataset with_rows(const Dataset& parent, std::span<const Changeset> rows) {
  Dataset out;
  out.project = parent.project;
  out.feature_names = parent.feature_names;
  out.changesets.assign(rows.begin(), rows.end());
  return out;
}

}  // namespace

std::optional<std::size_t> canonical_metric_index(std::string_view name) {
  const std::string l = lower(name);
  for (std::size_t i = 0; i < kCanonicalMetricNames.size(); ++i) {
    if (kCanonicalMetricNames[i] == l) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> Dataset::feature_index(std::string_view name) const {
  for (std::size_t i = 0; i < feature_names.size(); ++i) {
    if (feature_names[i] == name) return i;
  }
  return std::nullopt;
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(changesets.size());
  for (const auto& c : changesets) out.push_back(c.label);
  return out;
}

std::vector<std::int64_t> Dataset::timestamps() const {
  std::vector<std::int64_t> out;
  out.reserve(changesets.size());
  for (const auto& c : changesets) out.push_back(c.timestamp);
  return out;
}

std::vector<double> Dataset::column(std::size_t j) const {
  std::vector<double> out;
  out.reserve(changesets.size());
  for (const auto& c : changesets) out.push_back(c.features.at(j));
  return out;
}

std::vector<std::vector<double>> Dataset::feature_rows() const {
  std::vector<std::vector<double>> out;
  out.reserve(changesets.size());
  for (const auto& c : changesets) out.push_back(c.features);
  return out;
}

Dataset materialize(const Dataset& parent, const Segment& segment) {
  return with_rows(parent, segment.changesets);
}

Dataset materialize(const Dataset& parent, std::span<const Segment> segments) {
  Dataset out = with_rows(parent, {});
  for (const auto& s : segments) {
    out.changesets.insert(out.changesets.end(), s.changesets.begin(), s.changesets.end());
  }
  return out;
}

Dataset slice(const Dataset& parent, std::size_t begin, std::size_t end) {
  if (begin > end || end > parent.size()) {
    fail(ErrorCode::kArgument, "slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                                   ") outside dataset of size " + std::to_string(parent.size()));
  }
  return with_rows(parent, std::span<const Changeset>(parent.changesets).subspan(begin, end - begin));
}

SchemaMap SchemaMap::from_json(const nlohmann::json& j) {
  SchemaMap s;
  if (j.contains("id_column")) s.id_column = j.at("id_column").get<std::string>();
  if (j.contains("timestamp_column")) s.timestamp_column = j.at("timestamp_column").get<std::string>();
  if (j.contains("label_column")) s.label_column = j.at("label_column").get<std::string>();
  if (j.contains("files_column")) s.files_column = j.at("files_column").get<std::string>();
  if (j.contains("metric_columns")) {
    s.metric_columns = j.at("metric_columns").get<std::map<std::string, std::string>>();
  }
  if (j.contains("metrics")) s.metrics = j.at("metrics").get<std::vector<std::string>>();
  if (j.contains("timestamp_format")) s.timestamp_format = j.at("timestamp_format").get<std::string>();
  if (j.contains("delimiter")) {
    const auto d = j.at("delimiter").get<std::string>();
    if (d.size() != 1) fail(ErrorCode::kConfig, "schema delimiter must be one character");
    s.delimiter = d[0];
  }
  if (j.contains("files_separator")) {
    const auto d = j.at("files_separator").get<std::string>();
    if (d.size() != 1) fail(ErrorCode::kConfig, "schema files_separator must be one character");
    s.files_separator = d[0];
  }
  for (const auto& [metric, column] : s.metric_columns) {
    if (!canonical_metric_index(metric)) fail(ErrorCode::kConfig, "unknown metric in schema: " + metric);
  }
  for (const auto& metric : s.metrics) {
    if (!canonical_metric_index(metric)) fail(ErrorCode::kConfig, "unknown metric in schema: " + metric);
  }
  return s;
}

nlohmann::json SchemaMap::to_json() const {
  return {{"id_column", id_column},
          {"timestamp_column", timestamp_column},
          {"label_column", label_column},
          {"files_column", files_column},
          {"metric_columns", metric_columns},
          {"metrics", metrics},
          {"timestamp_format", timestamp_format},
          {"delimiter", std::string(1, delimiter)},
          {"files_separator", std::string(1, files_separator)}};
}

Dataset load_csv(const std::filesystem::path& path, const SchemaMap& schema,
                 const WarningSink& warn) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  return read_csv(in, schema, path.stem().string(), warn);
}

Dataset read_csv(std::istream& in, const SchemaMap& schema, std::string project,
                 const WarningSink& warn) {
  const auto header_line = csv::next_line(in);
  if (!header_line) fail(ErrorCode::kEmptyDataset, "CSV has no header row");
  std::vector<std::string> header = csv::split_record(*header_line, schema.delimiter);
  for (auto& h : header) h = csv::trim(h);

  auto find_column = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    return std::nullopt;
  };
  auto require_column = [&](const std::string& name, std::string_view role) {
    auto idx = find_column(name);
    if (!idx) fail(ErrorCode::kSchema, "missing " + std::string(role) + " column '" + name + "'");
    return *idx;
  };

  const std::size_t id_col = require_column(schema.id_column, "id");
  const std::size_t ts_col = require_column(schema.timestamp_column, "timestamp");
  const std::size_t label_col = require_column(schema.label_column, "label");
  std::optional<std::size_t> files_col;
  if (!schema.files_column.empty()) files_col = require_column(schema.files_column, "files");

  std::vector<std::size_t> wanted;
  if (schema.metrics.empty()) {
    wanted.resize(kMetricCount);
    std::iota(wanted.begin(), wanted.end(), 0);
  } else {
    for (const auto& m : schema.metrics) wanted.push_back(*canonical_metric_index(m));
    std::sort(wanted.begin(), wanted.end());
    wanted.erase(std::unique(wanted.begin(), wanted.end()), wanted.end());
  }

  const auto la = static_cast<std::size_t>(Metric::kLa);
  const auto ld = static_cast<std::size_t>(Metric::kLd);
  const auto churn = static_cast<std::size_t>(Metric::kChurn);
  const bool wants_churn = std::find(wanted.begin(), wanted.end(), churn) != wanted.end();

  // Column index per canonical metric; churn may be derived from la + ld.
  std::array<std::optional<std::size_t>, kMetricCount> metric_col;
  auto column_name = [&](std::size_t metric) {
    const std::string canonical(kCanonicalMetricNames[metric]);
    auto it = schema.metric_columns.find(canonical);
    return it == schema.metric_columns.end() ? canonical : it->second;
  };
  for (std::size_t m : wanted) {
    if (m == churn) {
      metric_col[m] = find_column(column_name(m));
      continue;
    }
    metric_col[m] = require_column(column_name(m), "metric");
  }
  const bool derive_churn = wants_churn && !metric_col[churn];
  if (derive_churn) {
    if (!metric_col[la]) metric_col[la] = require_column(column_name(la), "metric");
    if (!metric_col[ld]) metric_col[ld] = require_column(column_name(ld), "metric");
  }
  if (wants_churn && metric_col[churn]) {
    // Consistency check needs la/ld even if they are not retained.
    if (!metric_col[la]) metric_col[la] = find_column(column_name(la));
    if (!metric_col[ld]) metric_col[ld] = find_column(column_name(ld));
  }

  Dataset d;
  d.project = std::move(project);
  for (std::size_t m : wanted) d.feature_names.emplace_back(kCanonicalMetricNames[m]);

  std::unordered_set<std::string> seen_ids;
  std::size_t row = 0;
  std::size_t churn_mismatches = 0;
  while (auto line = csv::next_line(in)) {
    ++row;
    const auto fields = csv::split_record(*line, schema.delimiter);
    if (fields.size() < header.size()) {
      fail(ErrorCode::kParse, "row " + std::to_string(row) + ": expected " +
                                  std::to_string(header.size()) + " fields, got " +
                                  std::to_string(fields.size()));
    }
    Changeset c;
    c.id = csv::trim(fields[id_col]);
    if (!seen_ids.insert(c.id).second) {
      fail(ErrorCode::kParse, row_col(row, header[id_col]) + ": duplicate id '" + c.id + "'");
    }
    const auto ts = parse_timestamp(fields[ts_col], schema.timestamp_format);
    if (!ts) fail(ErrorCode::kParse, row_col(row, header[ts_col]) + ": bad timestamp '" + fields[ts_col] + "'");
    c.timestamp = *ts;
    const auto label = parse_binary(fields[label_col]);
    if (!label) fail(ErrorCode::kParse, row_col(row, header[label_col]) + ": label not binary");
    c.label = *label;

    ChangeMetrics metrics;
    for (std::size_t m = 0; m < kMetricCount; ++m) {
      if (!metric_col[m]) continue;
      const auto v = parse_double(fields[*metric_col[m]]);
      if (!v || !std::isfinite(*v)) {
        fail(ErrorCode::kParse, row_col(row, header[*metric_col[m]]) + ": unparseable value '" +
                                    fields[*metric_col[m]] + "'");
      }
      metrics.values[m] = *v;
    }
    if (derive_churn) {
      metrics.values[churn] = metrics.values[la] + metrics.values[ld];
    } else if (wants_churn && metric_col[la] && metric_col[ld]) {
      const double expect = metrics.values[la] + metrics.values[ld];
      if (std::abs(metrics.values[churn] - expect) > 1e-9 * std::max(1.0, expect)) ++churn_mismatches;
    }
    c.features.reserve(wanted.size());
    for (std::size_t m : wanted) c.features.push_back(metrics.values[m]);

    if (files_col) {
      std::vector<std::string> files;
      std::string_view rest = fields[*files_col];
      while (!rest.empty()) {
        const auto cut = rest.find(schema.files_separator);
        const std::string f = csv::trim(rest.substr(0, cut));
        if (!f.empty()) files.push_back(f);
        if (cut == std::string_view::npos) break;
        rest.remove_prefix(cut + 1);
      }
      c.modified_files = std::move(files);
    }
    d.changesets.push_back(std::move(c));
  }
  if (d.changesets.empty()) fail(ErrorCode::kEmptyDataset, "CSV has a header but no data rows");
  if (churn_mismatches > 0 && warn) {
    warn(std::to_string(churn_mismatches) +
         " rows have churn != la + ld; the supplied churn values are kept");
  }

  std::stable_sort(d.changesets.begin(), d.changesets.end(),
                   [](const Changeset& a, const Changeset& b) { return a.timestamp < b.timestamp; });
  return d;
}

void write_csv(std::ostream& out, const Dataset& d) {
  const bool with_files = std::any_of(d.changesets.begin(), d.changesets.end(),
                                      [](const Changeset& c) { return c.modified_files.has_value(); });
  out << "commit_id,timestamp";
  for (const auto& f : d.feature_names) out << ',' << f;
  out << ",label";
  if (with_files) out << ",files";
  out << '\n';
  out << std::setprecision(17);
  for (const auto& c : d.changesets) {
    out << csv::escape(c.id) << ',' << c.timestamp;
    for (double v : c.features) out << ',' << v;
    out << ',' << c.label;
    if (with_files) {
      std::string joined;
      if (c.modified_files) {
        for (std::size_t i = 0; i < c.modified_files->size(); ++i) {
          if (i) joined.push_back(';');
          joined += (*c.modified_files)[i];
        }
      }
      out << ',' << csv::escape(joined);
    }
    out << '\n';
  }
}

Dataset log_transform(const Dataset& d) {
  Dataset out = d;
  const auto fix = d.feature_index("fix");
  for (std::size_t r = 0; r < out.changesets.size(); ++r) {
    auto& features = out.changesets[r].features;
    for (std::size_t j = 0; j < features.size(); ++j) {
      if (fix && j == *fix) continue;
      if (!(features[j] >= 0.0)) {
        fail(ErrorCode::kDomain, "log_transform: " + row_col(r, d.feature_names[j]) + " (id '" +
                                     d.changesets[r].id + "') has negative value " +
                                     std::to_string(features[j]));
      }
      features[j] = std::log1p(features[j]);
    }
  }
  return out;
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = mid;
    i = j;
  }
  return ranks;
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorCode::kDimensionMismatch, "spearman: length mismatch");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

CollinearityResult remove_collinear(const Dataset& d, double threshold, const WarningSink& warn) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    fail(ErrorCode::kArgument, "collinearity threshold must lie in (0, 1]");
  }
  if (d.size() < 2) fail(ErrorCode::kInsufficientData, "remove_collinear needs at least 2 rows");

  // Walk in canonical order regardless of the stored column order.
  std::vector<std::size_t> order(d.feature_names.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto ca = canonical_metric_index(d.feature_names[a]).value_or(kMetricCount);
    const auto cb = canonical_metric_index(d.feature_names[b]).value_or(kMetricCount);
    return ca < cb;
  });

  std::vector<std::vector<double>> columns;
  columns.reserve(d.feature_names.size());
  for (std::size_t j = 0; j < d.feature_names.size(); ++j) columns.push_back(d.column(j));

  std::vector<std::size_t> kept;
  std::vector<bool> keep(d.feature_names.size(), false);
  CollinearityResult result;
  for (std::size_t j : order) {
    const auto& col = columns[j];
    if (std::all_of(col.begin(), col.end(), [&](double v) { return v == col.front(); }) && warn) {
      warn("feature '" + d.feature_names[j] + "' is constant; its correlations are taken as 0");
    }
    bool dependent = false;
    for (std::size_t k : kept) {
      if (std::abs(spearman(columns[k], col)) > threshold) {
        dependent = true;
        break;
      }
    }
    if (dependent) {
      result.removed.push_back(d.feature_names[j]);
    } else {
      kept.push_back(j);
      keep[j] = true;
    }
  }

  Dataset& out = result.dataset;
  out.project = d.project;
  for (std::size_t j = 0; j < d.feature_names.size(); ++j) {
    if (keep[j]) out.feature_names.push_back(d.feature_names[j]);
  }
  out.changesets.reserve(d.size());
  for (const auto& c : d.changesets) {
    Changeset copy = c;
    copy.features.clear();
    for (std::size_t j = 0; j < c.features.size(); ++j) {
      if (keep[j]) copy.features.push_back(c.features[j]);
    }
    out.changesets.push_back(std::move(copy));
  }
  return result;
}

std::vector<Segment> partition_equal(const Dataset& d, std::size_t n_segments) {
  if (n_segments == 0) fail(ErrorCode::kArgument, "n_segments must be positive");
  if (n_segments > d.size()) {
    fail(ErrorCode::kArgument, "cannot split " + std::to_string(d.size()) + " changesets into " +
                                   std::to_string(n_segments) + " segments");
  }
  const std::size_t base = d.size() / n_segments;
  const std::size_t extra = d.size() % n_segments;
  std::vector<Segment> out;
  out.reserve(n_segments);
  std::size_t offset = 0;
  const std::span<const Changeset> all(d.changesets);
  for (std::size_t i = 0; i < n_segments; ++i) {
    const std::size_t len = base + (i < extra ? 1 : 0);
    Segment s;
    s.index = i;
    s.kind = SegmentKind::kCountEqual;
    s.offset = offset;
    s.window_start = d.changesets[offset].timestamp;
    s.changesets = all.subspan(offset, len);
    out.push_back(s);
    offset += len;
  }
  return out;
}

std::vector<Segment> partition_window(const Dataset& d, std::int64_t width_seconds) {
  if (d.empty()) fail(ErrorCode::kEmptyDataset, "partition_window on empty dataset");
  if (width_seconds <= 0) fail(ErrorCode::kArgument, "window width must be positive");
  const std::int64_t start = d.changesets.front().timestamp;
  const std::int64_t last = d.changesets.back().timestamp;
  const auto n_windows = static_cast<std::size_t>((last - start) / width_seconds + 1);
  std::vector<Segment> out;
  out.reserve(n_windows);
  const std::span<const Changeset> all(d.changesets);
  std::size_t offset = 0;
  for (std::size_t w = 0; w < n_windows; ++w) {
    const std::int64_t lo = start + static_cast<std::int64_t>(w) * width_seconds;
    const std::int64_t hi = lo + width_seconds;
    std::size_t end = offset;
    while (end < d.size() && d.changesets[end].timestamp < hi) ++end;
    Segment s;
    s.index = w;
    s.kind = SegmentKind::kTimeWindow;
    s.offset = offset;
    s.window_start = lo;
    s.changesets = all.subspan(offset, end - offset);
    out.push_back(s);
    offset = end;
  }
  return out;
}

}  // namespace cpijit
