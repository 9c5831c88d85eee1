#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gsml::cli {

// Runs the command line `args` (args[0] is the program name) and returns the
// process exit code. Diagnostics go to `err`, summaries to `out`.
int run(std::vector<std::string> args, std::ostream& out, std::ostream& err);

// Reads a flat `key = value` file into `--key=value` arguments. Blank lines,
// `#` comments and `[section]` headers are skipped; quotes and list brackets
// around values are stripped.
std::vector<std::string> config_file_args(const std::string& path);

}  // namespace gsml::cli
