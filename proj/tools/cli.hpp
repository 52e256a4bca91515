#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ultrasnn::cli {

enum ExitCode : int {
  kOk = 0,
  kCheckFailed = 1,
  kConfigError = 2,
  kIoError = 3,
  kNumericError = 4,
};

/// Runs one command line (without the program name). Never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ultrasnn::cli
