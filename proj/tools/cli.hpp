#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace usb::cli {

/// Runs one command line (argv[0] is the program name) and returns the exit
/// code: 0 success, 2 config error, 3 numeric failure, 4 I/O error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace usb::cli
