#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hmmseq {

// Parses and executes one subcommand. Returns the process exit status; every
// failure is reported as a single "hmmseq <module>: <message>" line on `err`.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_command(int argc, char** argv);

} // namespace hmmseq
