#pragma once

#include <string>
#include <vector>

namespace xmodal::cli {

// Runs one command line (args[0] is the program name). Errors are printed
// to stderr as "<CODE>: <message>" and turned into a nonzero return value.
int run(const std::vector<std::string>& args);

}  // namespace xmodal::cli
