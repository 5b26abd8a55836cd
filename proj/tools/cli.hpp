#pragma once

#include <iosfwd>

namespace shellac::cli {

/// Exit codes of the command-line tool.
enum ExitCode : int {
    kOk = 0,
    kInternal = 1,
    kUsage = 2,
    kData = 3,
    kNumeric = 4,
};

/// Runs one command (train, sample, guided, variations, guide-synth, analyze, info).
/// Failures print a single "shellac: <module>: <reason>" line to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace shellac::cli
