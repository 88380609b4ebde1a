#pragma once

#include <ostream>

namespace otmpc::cli {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kUserError = 1,
  kNotConverged = 2,
  kInternalFault = 3,
};

/// Runs the otmpc command line; `out` gets results, `err` diagnostics.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace otmpc::cli
