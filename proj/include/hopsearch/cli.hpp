#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace hopsearch {

/// Entry point behind the `hopsearch` executable. `args` excludes the program
/// name. Returns the process exit code; diagnostics go to `err`.
int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err);

} // namespace hopsearch
