#pragma once

#include <atomic>
#include <iosfwd>
#include <string>
#include <vector>

namespace promptlens::cli {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kUnexpected = 1,
  kUsage = 2,      // bad flags, bad config, unreadable or malformed input files
  kProvider = 3,   // the completion or embedding backend failed
  kPartial = 4,    // interrupted or some cells/records missing; partial outputs written
  kBudget = 5,     // refused before any provider call: the run exceeds --budget
};

/// Runs one command line (args excludes the program name). `cancel`, when given, is
/// polled by long runs; setting it produces partial outputs and kPartial.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const std::atomic<bool>* cancel = nullptr);

}  // namespace promptlens::cli
