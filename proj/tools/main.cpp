#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "cpijit/error.hpp"
#include "run_config.hpp"

namespace {

using cpijit::cli::Invocation;
using cpijit::cli::Overrides;

struct Flags {
  std::string config;
  std::vector<std::string> inputs;
  std::string experiment;
  std::string model_kind = "deepicp";
  std::string model_file;
  std::string synth_kind;
  std::vector<std::string> synth_params;
  Overrides overrides;
  std::string out, schema;
  std::uint64_t seed = 0;
  unsigned jobs = 1;
};

// key=value, value parsed as JSON when possible ("n=300", "rotation=0.26").
void apply_synth_params(nlohmann::json& spec, const std::vector<std::string>& params) {
  for (const auto& p : params) {
    const auto eq = p.find('=');
    if (eq == std::string::npos || eq == 0) {
      cpijit::fail(cpijit::ErrorCode::kArgument, "--param expects key=value, got '" + p + "'");
    }
    const std::string value = p.substr(eq + 1);
    nlohmann::json v = nlohmann::json::parse(value, nullptr, false);
    spec[p.substr(0, eq)] = v.is_discarded() ? nlohmann::json(value) : v;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Just-in-time defect prediction toolkit: changeset analyses, curve-gated balancing, "
               "LSTM models and experiment runners.",
               "cpijit"};
  app.require_subcommand(1);
  Flags f;
  app.add_option("--config", f.config, "JSON run configuration (env CPIJIT_CONFIG)");
  auto* seed_opt = app.add_option("--seed", f.seed, "root seed (env CPIJIT_SEED)");
  auto* jobs_opt = app.add_option("--jobs", f.jobs, "parallel experiment cells (env CPIJIT_JOBS)")
                       ->check(CLI::PositiveNumber);
  app.add_option("--out", f.out, "output root; runs go to <out>/<run-id>/ (env CPIJIT_OUT)");
  app.add_option("--schema", f.schema, "JSON column mapping (env CPIJIT_SCHEMA)");

  struct Sub {
    const char* name;
    const char* help;
  };
  const Sub subs[] = {
      {"preprocess", "log-transform and de-correlate metric CSVs"},
      {"analyze-relationship", "pair contingency, chi-square and triplet probabilities"},
      {"analyze-drift", "windowed defect-pair series and per-segment principal curves"},
      {"fit-curve", "fit a principal curve per input"},
      {"balance", "curve-gated SMOTE balancing"},
      {"train", "train a model on the full input"},
      {"evaluate", "score an input with a trained model"},
      {"synth", "write a synthetic dataset"},
  };
  for (const auto& s : subs) {
    auto* cmd = app.add_subcommand(s.name, s.help)->fallthrough();
    cmd->add_option("inputs", f.inputs, "changeset CSV files");
    if (std::string(s.name) == "train") {
      cmd->add_option("--model", f.model_kind, "deepicp, forecast or logistic")
          ->check(CLI::IsMember({"deepicp", "forecast", "logistic"}));
    }
    if (std::string(s.name) == "evaluate") {
      cmd->add_option("--model-file", f.model_file, "checkpoint written by train")->required();
    }
    if (std::string(s.name) == "synth") {
      cmd->add_option("--kind", f.synth_kind, "markov, manifold, joint or line");
      cmd->add_option("--param", f.synth_params, "generator field override key=value (repeatable)");
    }
  }
  auto* exp = app.add_subcommand("experiment", "run rq1 or rq4a..rq4e")->fallthrough();
  exp->add_option("name", f.experiment, "rq1, rq4a, rq4b, rq4c, rq4d or rq4e")
      ->required()
      ->check(CLI::IsMember({"rq1", "rq4a", "rq4b", "rq4c", "rq4d", "rq4e"}));
  exp->add_option("inputs", f.inputs, "changeset CSV files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "cpijit: " << e.what() << "\n";
    return e.get_exit_code() != 0 ? e.get_exit_code() : 2;
  }

  try {
    Invocation inv;
    inv.subcommand = app.get_subcommands().front()->get_name();
    std::string config_path = f.config;
    if (config_path.empty()) {
      if (const char* s = std::getenv("CPIJIT_CONFIG"); s && *s) config_path = s;
    }
    inv.config = config_path.empty() ? cpijit::cli::RunConfig{} : cpijit::cli::load_run_config(config_path);

    Overrides flags;
    if (*seed_opt) flags.seed = f.seed;
    if (*jobs_opt) flags.jobs = f.jobs;
    if (!f.out.empty()) flags.out = f.out;
    if (!f.schema.empty()) flags.schema = f.schema;
    for (const auto& p : f.inputs) flags.inputs.emplace_back(p);
    cpijit::cli::apply_overrides(inv.config, cpijit::cli::env_overrides(), flags);

    if (!f.synth_kind.empty()) inv.config.synth["kind"] = f.synth_kind;
    apply_synth_params(inv.config.synth, f.synth_params);
    inv.experiment = f.experiment;
    inv.model_kind = f.model_kind;
    if (!f.model_file.empty()) inv.model_file = f.model_file;

    std::cout << cpijit::cli::run(inv).string() << "\n";
    return 0;
  } catch (const cpijit::Error& e) {
    std::cerr << "cpijit: " << cpijit::to_string(e.code()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "cpijit: " << e.what() << "\n";
    return 1;
  }
}
