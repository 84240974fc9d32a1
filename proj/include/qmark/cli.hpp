#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace qmark::cli {

/// Entry point of the `qmark` tool. Returns the process exit code; failures
/// print a one-line JSON error object on `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace qmark::cli
