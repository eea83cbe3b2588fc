#pragma once

// Entry point of the `gpf` command-line tool, callable in-process.
//
// Exit codes:
//   0  success
//   1  configuration, argument or checkpoint error
//   2  training aborted on a non-finite value, or token self-check failure

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "gpf/tokenizer.hpp"

namespace gpf::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Serializes episodes to id lines and parses them back. Returns an empty
/// string when the round trip reproduces the input, otherwise a message.
std::string token_self_check(std::span<const EpisodeTokens> episodes, std::span<const std::string> lines);

}  // namespace gpf::cli
