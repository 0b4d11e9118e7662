#pragma once

#include <atomic>
#include <iosfwd>
#include <string>
#include <vector>

namespace twostage::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kBadData = 3,
  kInterrupted = 130,
};

/// Runs `twostage <subcommand> ...`. Completion records go to `out` as one JSON line,
/// progress and structured errors to `err`. `stop` (optional) interrupts long runs.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const std::atomic<bool>* stop = nullptr);

}  // namespace twostage::cli
