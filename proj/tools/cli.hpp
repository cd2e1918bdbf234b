#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace hetlmm::cli {

enum ExitCode : int { kOk = 0, kInputError = 2, kNumericalError = 3 };

/// Run the command line with explicit arguments (args[0] is the program
/// name). Messages go to `out` and `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hetlmm::cli
