#pragma once

#include <string>
#include <vector>

namespace scgan {

enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitInvalid = 2 };

/// Entry point of the `scgan` tool. Returns 0 on success, 1 on runtime
/// errors and 2 on invalid input (bad arguments, invalid config, stage
/// preconditions).
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace scgan
