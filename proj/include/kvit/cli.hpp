#pragma once

#include <iosfwd>

namespace kvit {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitIo = 3 };

/// Entry point of the `kvit` tool. Subcommands: gen-data, train, eval, mask,
/// patch-dump, attn-map, param-count. Messages go to `out` and `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace kvit
