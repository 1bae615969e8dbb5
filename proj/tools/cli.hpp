#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace kinet::cli {

/// Runs one command line. Returns 0 on success, 1 on domain errors and 2 on
/// usage errors. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kinet::cli
