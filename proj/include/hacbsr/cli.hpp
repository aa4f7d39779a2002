#pragma once

#include <string>
#include <vector>

namespace hacbsr {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitArgument = 2,
  kExitIo = 3,
  kExitDivergence = 4,
  kExitVerification = 5,
};

/// Entry point for the `hacbsr` tool; subcommands synth-data, run, eval,
/// verify-stability, plot-report and sample-kernels.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace hacbsr
