#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace clippo {

// Runs one subcommand (render, train, embed, eval, tokstats, analyze,
// selfcheck). Returns 0 on success, 1 on a domain error and 2 on a usage
// error. args excludes the program name.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, char** argv);

}  // namespace clippo
