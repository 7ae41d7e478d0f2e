#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ncre::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsageError = 2,
  kDataError = 3,
  kCollapseAbort = 4,
  kCheckpointError = 5,
};

/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ncre::cli
