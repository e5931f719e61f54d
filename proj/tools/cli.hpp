#pragma once

#include <iosfwd>

namespace baq::cli {

enum ExitCode : int {
    kExitOk = 0,
    kExitInputError = 1,
    kExitInternalError = 2,
};

// Entry point shared by the `baq` binary and the CLI tests.
int run(int argc, const char * const * argv, std::ostream & out, std::ostream & err);

} // namespace baq::cli
