#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "clincon/pair_selection.hpp"
#include "clincon/pipeline.hpp"
#include "clincon/theory.hpp"

namespace clincon {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3 };

/// JSON run configuration shared by all subcommands. Command-line flags
/// override values read from a file.
struct RunConfig {
  HyperParams hyper;
  EncoderConfig encoder;
  AugmentPolicy augment;
  std::string loss = "cst+eye";
  std::string target = "multilabel";
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::vector<double> fractions = {0.25, 0.5, 0.75, 1.0};
  double distill_temperature = 1.0;
  std::map<std::string, std::string> paths;
  SweepConfig theory;
  std::vector<double> eps_levels = {0.0, 0.2, 0.4, 0.6, 0.8};
};

/// Throws ConfigError on unknown keys or ill-typed values.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::filesystem::path& path);

/// Runs the tool; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace clincon
