#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace intent {

/// Exit codes of the command-line tool.
namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int input_error = 1;
inline constexpr int config_error = 2;
inline constexpr int invariant_error = 3;
}  // namespace exit_code

/// Runs `intent <subcommand> ...`; args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run_cli(int argc, char** argv);

}  // namespace intent
