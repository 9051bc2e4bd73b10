#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace randix::cli {

enum ExitCode { Ok = 0, Usage = 1, Validation = 2, NumericalFailure = 3 };

/// args excludes the program name. Reports go to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace randix::cli
