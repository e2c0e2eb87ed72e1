#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace topicmatch::cli {

// Exit codes: 0 ok, 1 other failure, 2 configuration or usage, 3 I/O, 4 numerical.
inline constexpr int kExitOk = 0;
inline constexpr int kExitOther = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIO = 3;
inline constexpr int kExitNumerical = 4;

// args excludes the program name. Subcommands: gen-data, train, match, eval,
// profile, viz-topics, covis-sweep.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace topicmatch::cli
