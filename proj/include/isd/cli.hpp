#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace isd {

enum ExitCode : int {
  kExitOk = 0,
  kExitRuntime = 1,
  kExitUsage = 2,
  kExitConfig = 3,
  kExitData = 4,
  kExitCheckpoint = 5,
};

/// Command-line entry point. `args` excludes the program name. Diagnostics
/// go to `err` as one line; progress and summaries to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace isd
