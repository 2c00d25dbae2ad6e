#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace afr::cli {

// Stable process exit codes.
enum ExitCode : int {
    kOk = 0,
    kConfigError = 2,
    kDataError = 3,
    kEpisodeFailures = 4,
    kGradcheckFailed = 5,
};

// Runs one invocation. args excludes the program name. Machine-readable
// payload goes to out, diagnostics to err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace afr::cli
