#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace memvr::cli {

/// Exit statuses: 0 success, 1 configuration error, 2 data error,
/// 3 numerical divergence.
enum ExitCode : int { ok = 0, config_error = 1, data_error = 2, numerical_error = 3 };

/// Runs one invocation. `args` excludes the program name.
int execute(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace memvr::cli
