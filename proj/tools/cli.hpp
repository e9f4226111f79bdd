#pragma once

#include <string>
#include <vector>

namespace ovad::cli {

/// Exit codes of the driver.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,  ///< data, config or runtime error
  kUsage = 2,    ///< bad command line
};

/// Runs one `ovad` invocation. `args[0]` is the program name.
int run(const std::vector<std::string>& args);

}  // namespace ovad::cli
