#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace asyncsgd::cli {

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitNotConverged = 2,
    kExitVerifyFailed = 3,
    kExitInternal = 4,
};

/// Entry point of the `asyncsgd` tool. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace asyncsgd::cli
