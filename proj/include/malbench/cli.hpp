#pragma once

#include <iosfwd>

namespace malbench {

/// Entry point for the malbench command line. Returns 0 on success, 2 on
/// usage errors and 1 on operational failures.
int run_subcommand(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace malbench
