#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace mosaic::lab {

enum ExitCode { kOk = 0, kUsage = 2, kFailure = 3 };

struct CommandContext {
  std::filesystem::path out;
  bool force = false;
  int jobs = 1;
  /// Executable used to spawn sweep workers; defaults to this process's image.
  std::filesystem::path self;
};

/// Runs a command from its resolved options (as recorded in a manifest).
/// Throws ConfigError/DataError for bad input and RuntimeFailure for failed computations.
int run_command(const std::string& command, const nlohmann::json& options, const CommandContext& ctx);

/// Full command-line entry point; maps exceptions to exit codes.
int run_cli(int argc, char** argv);

}  // namespace mosaic::lab
