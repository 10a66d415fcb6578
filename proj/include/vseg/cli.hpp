#pragma once

#include <iosfwd>

namespace vseg {

// Runs the `vseg` command line. Returns the process exit code; failures
// print a single line "error: <kind>: <message>" to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace vseg
