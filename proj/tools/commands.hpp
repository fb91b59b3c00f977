#pragma once

#include <ostream>

namespace gmrft::cli {

/// Runs one subcommand. Returns the process exit status: 0 on success, 2 on
/// usage errors, 1 on any other failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gmrft::cli
