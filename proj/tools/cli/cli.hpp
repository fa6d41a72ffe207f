#pragma once

#include <exception>
#include <iosfwd>
#include <string>
#include <vector>

// The ccopt command-line tool: plan, certify, validate and compare.
//
// Exit codes: 0 success, 2 invalid input (unreadable or malformed files,
// bad flags, invalid problems), 3 planner did not reach a feasible plan,
// 4 numerical failure, 1 anything else.

namespace ccopt::cli {

enum ExitCode : int {
  kSuccess = 0,
  kInternalError = 1,
  kInvalidInput = 2,
  kInfeasible = 3,
  kNumericalFailure = 4,
};

/// Runs one command. `args` excludes the program name. JSON reports go to
/// `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Exit code for an exception escaping a command.
int exit_code_for(const std::exception& e);

/// RFC 4180 field: quoted when it contains a comma, quote or line break.
std::string csv_field(const std::string& value);

}  // namespace ccopt::cli
