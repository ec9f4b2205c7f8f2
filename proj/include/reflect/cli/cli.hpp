#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace reflect::cli {

// Runs one command line (args[0] is the program name). Returns 0 on
// success, 2 on usage errors, 1 when the command fails; failures print one
// JSON line {"error": kind, "message": ...} to err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace reflect::cli
