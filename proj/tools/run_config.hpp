#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpijit/changeset.hpp"
#include "cpijit/experiment.hpp"
#include "cpijit/principal_curve.hpp"

namespace cpijit::cli {

struct PreprocessOptions {
  bool log_transform = true;
  bool remove_collinear = true;
  double collinearity_threshold = 0.9;
};

struct AnalysisOptions {
  double confidence = 0.95;
  std::int64_t window_days = 90;
  std::size_t curve_segments = 5;
};

/// Everything a run depends on. Paths in a config file resolve against the
/// file's directory.
struct RunConfig {
  std::optional<std::uint64_t> seed;
  std::vector<std::filesystem::path> inputs;
  SchemaMap schema;
  PreprocessOptions preprocess;
  CurveFitConfig curve;
  bool curve_include_label = true;
  AnalysisOptions analysis;
  ExperimentConfig experiment;
  nlohmann::json synth = nlohmann::json::object();
  std::filesystem::path out = "out";

  nlohmann::json to_json() const;
};

/// Throws kIo for unreadable files and kConfig for malformed content.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

/// Values from CPIJIT_SEED, CPIJIT_JOBS, CPIJIT_OUT override the config;
/// explicit flags override both.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> jobs;
  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> schema;
  std::vector<std::filesystem::path> inputs;
};

Overrides env_overrides();
/// Applies env first, then flags; fails with kConfig when no seed remains.
void apply_overrides(RunConfig& config, const Overrides& env, const Overrides& flags);

}  // namespace cpijit::cli
