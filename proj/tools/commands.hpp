#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "run_config.hpp"

namespace cpijit::cli {

struct Invocation {
  std::string subcommand;
  RunConfig config;
  std::string experiment;  // rq1, rq4a..rq4e
  std::string model_kind = "deepicp";
  std::optional<std::filesystem::path> model_file;
};

/// Runs one subcommand, writing its outputs and a manifest under
/// <out>/<run-id>/. Returns the run directory.
std::filesystem::path run(const Invocation& inv);

}  // namespace cpijit::cli
