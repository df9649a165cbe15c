#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace planloc {

// Runs the command line (args[0] is the program name). Returns 0 on
// success, 1 for pipeline errors (message printed to err) and 2 for usage
// errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace planloc
