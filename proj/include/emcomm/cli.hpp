#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "emcomm/training.hpp"

namespace emcomm {

/// Stable exit codes for scripting.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Environment variable naming the default output root.
inline constexpr const char* kOutputRootEnv = "EMCOMM_OUTPUT_ROOT";

/// Contents of a flat "key = value" config file: experiment parameters plus
/// output and analysis options.
struct CliConfig {
  ExperimentConfig experiment;
  std::string output_dir;
  int probe_episodes = 1000;
  bool any_senders = false;
};

/// Blank lines and '#' comments are ignored; unknown keys are rejected with their line number.
CliConfig parse_cli_config(std::string_view text);

std::filesystem::path default_output_root();

/// Manifest header and one row per sweep run.
std::string manifest_header();
std::string manifest_row(const SweepResult& result, const std::filesystem::path& run_dir);

/// Entry point behind the `emcomm` binary. args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace emcomm
