#pragma once

// Command-line entry point: subcommand dispatch, configuration, artifacts.

#include <string>
#include <vector>

namespace mkvb::cli {

enum ExitCode : int {
  kSuccess = 0,
  kInternalError = 1,
  kConfigError = 2,
  kNumericalGuard = 3,
  kSelftestFailed = 4,
};

/// Runs one subcommand. args excludes the program name. Errors are written
/// to standard error as one JSON object per line.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace mkvb::cli
