#pragma once

#include <ostream>

namespace dfres::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

// Parses argv and runs one command. Never throws; failures map to ExitCode
// with a message on `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dfres::cli
