#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sepdetect::cli {

enum ExitCode : int { kOk = 0, kValidationError = 1, kIoError = 2 };

// Runs one subcommand. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, char** argv);

}  // namespace sepdetect::cli
