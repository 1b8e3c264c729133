#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace auxvae::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitNumerical = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;

// Runs one command line (args excludes the program name). Progress goes to
// `log`, diagnostics to `err`. Never throws; errors map to exit codes.
int run(const std::vector<std::string>& args, std::ostream& log, std::ostream& err);

}  // namespace auxvae::cli
