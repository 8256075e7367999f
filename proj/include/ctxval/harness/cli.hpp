#pragma once

#include <string>
#include <vector>

namespace ctxval::harness {

/// Entry point of the `ctxval` command line; args[0] is the program name.
/// Returns the process exit code: 0 success, 2 configuration error, 3
/// generator or embedding endpoint failure, 4 data error, 1 anything else.
int run_cli(const std::vector<std::string>& args);

}  // namespace ctxval::harness
