#include "run_config.hpp"

#include <cstdlib>
#include <fstream>

#include "cpijit/error.hpp"
#include "cpijit/models.hpp"

namespace cpijit::cli {

namespace {

using json = nlohmann::json;

void known_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) fail(ErrorCode::kConfig, where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; })) {
      fail(ErrorCode::kConfig, "unknown key '" + key + "' in " + where);
    }
  }
}

std::uint64_t parse_seed(const std::string& text, const std::string& source) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(text, &used, 10);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    fail(ErrorCode::kConfig, source + ": seed '" + text + "' is not an unsigned integer");
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

json RunConfig::to_json() const {
  json inputs_json = json::array();
  for (const auto& p : inputs) inputs_json.push_back(p.generic_string());
  json exp = cpijit::to_json(experiment);
  exp.erase("seed");
  return {{"seed", seed ? json(*seed) : json(nullptr)},
          {"inputs", inputs_json},
          {"schema", schema.to_json()},
          {"preprocess",
           {{"log_transform", preprocess.log_transform},
            {"remove_collinear", preprocess.remove_collinear},
            {"collinearity_threshold", preprocess.collinearity_threshold}}},
          {"curve",
           {{"segments", curve.segments},
            {"max_iter", curve.max_iter},
            {"tol", curve.tol},
            {"smooth_span", curve.smooth_span},
            {"include_label", curve_include_label}}},
          {"analysis",
           {{"confidence", analysis.confidence},
            {"window_days", analysis.window_days},
            {"curve_segments", analysis.curve_segments}}},
          {"experiment", exp},
          {"synth", synth},
          {"out", out.generic_string()}};
}

RunConfig run_config_from_json(const json& j, const std::filesystem::path& base_dir) {
  known_keys(j, {"seed", "inputs", "schema", "preprocess", "curve", "analysis", "experiment", "synth", "out"},
             "config");
  RunConfig c;
  try {
    if (j.contains("seed") && !j.at("seed").is_null()) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("inputs")) {
      for (const auto& p : j.at("inputs")) c.inputs.push_back(resolve(base_dir, p.get<std::string>()));
    }
    if (j.contains("schema")) c.schema = SchemaMap::from_json(j.at("schema"));
    if (j.contains("preprocess")) {
      const json& p = j.at("preprocess");
      known_keys(p, {"log_transform", "remove_collinear", "collinearity_threshold"}, "preprocess");
      c.preprocess.log_transform = p.value("log_transform", c.preprocess.log_transform);
      c.preprocess.remove_collinear = p.value("remove_collinear", c.preprocess.remove_collinear);
      c.preprocess.collinearity_threshold = p.value("collinearity_threshold", c.preprocess.collinearity_threshold);
    }
    if (j.contains("curve")) {
      const json& p = j.at("curve");
      known_keys(p, {"segments", "max_iter", "tol", "smooth_span", "include_label"}, "curve");
      c.curve.segments = p.value("segments", c.curve.segments);
      c.curve.max_iter = p.value("max_iter", c.curve.max_iter);
      c.curve.tol = p.value("tol", c.curve.tol);
      c.curve.smooth_span = p.value("smooth_span", c.curve.smooth_span);
      c.curve_include_label = p.value("include_label", c.curve_include_label);
    }
    if (j.contains("analysis")) {
      const json& p = j.at("analysis");
      known_keys(p, {"confidence", "window_days", "curve_segments"}, "analysis");
      c.analysis.confidence = p.value("confidence", c.analysis.confidence);
      c.analysis.window_days = p.value("window_days", c.analysis.window_days);
      c.analysis.curve_segments = p.value("curve_segments", c.analysis.curve_segments);
    }
    if (j.contains("experiment")) c.experiment = experiment_config_from_json(j.at("experiment"));
    if (j.contains("synth")) c.synth = j.at("synth");
    if (j.contains("out")) c.out = resolve(base_dir, j.at("out").get<std::string>());
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("config: ") + e.what());
  }
  if (c.analysis.window_days <= 0) fail(ErrorCode::kConfig, "analysis.window_days must be positive");
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot read config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, "config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

Overrides env_overrides() {
  Overrides o;
  if (const char* s = std::getenv("CPIJIT_SEED"); s && *s) o.seed = parse_seed(s, "CPIJIT_SEED");
  if (const char* s = std::getenv("CPIJIT_JOBS"); s && *s) {
    o.jobs = static_cast<unsigned>(parse_seed(s, "CPIJIT_JOBS"));
  }
  if (const char* s = std::getenv("CPIJIT_OUT"); s && *s) o.out = s;
  if (const char* s = std::getenv("CPIJIT_SCHEMA"); s && *s) o.schema = s;
  return o;
}

void apply_overrides(RunConfig& config, const Overrides& env, const Overrides& flags) {
  for (const Overrides* o : {&env, &flags}) {
    if (o->seed) config.seed = o->seed;
    if (o->jobs) config.experiment.jobs = *o->jobs;
    if (o->out) config.out = *o->out;
    if (o->schema) {
      std::ifstream in(*o->schema);
      if (!in) fail(ErrorCode::kIo, "cannot read schema '" + o->schema->string() + "'");
      try {
        config.schema = SchemaMap::from_json(json::parse(in));
      } catch (const json::exception& e) {
        fail(ErrorCode::kConfig, "schema '" + o->schema->string() + "': " + e.what());
      }
    }
    if (!o->inputs.empty()) config.inputs = o->inputs;
  }
  if (!config.seed) fail(ErrorCode::kConfig, "no seed given (config 'seed', --seed or CPIJIT_SEED)");
  config.experiment.seed = *config.seed;
}

}  // namespace cpijit::cli
