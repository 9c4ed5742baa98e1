#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mplab::cli {

/// Runs the mplab command line. args[0] is the program name. Returns the
/// process exit code: 0 success, 1 usage or config error, 2 stagnated,
/// 3 numeric breakdown.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mplab::cli
