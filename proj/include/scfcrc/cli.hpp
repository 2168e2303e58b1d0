#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace scfcrc {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitAbort = 3;

// Runs one command line (args[0] is the program name). Output goes to out/err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace scfcrc
