#ifndef SLMW_CLI_HPP
#define SLMW_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

#include "slmw/error.hpp"

namespace slmw::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitMissingFile = 2;
inline constexpr int kExitConfig = 3;
inline constexpr int kExitDivergence = 4;

int exit_code(ErrorCode code);

/// Runs one command; `args` excludes the program name. Summaries go to
/// `out`, diagnostics and errors (as JSON) to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace slmw::cli

#endif  // SLMW_CLI_HPP
