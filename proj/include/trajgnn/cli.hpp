#pragma once

#include <string>
#include <vector>

namespace trajgnn {

/// Parses and runs one CLI invocation (args excludes the program name).
/// Returns the process exit status; failures print a one-line diagnostic.
int run_cli(const std::vector<std::string>& args);

/// "0..9", "3", or "0,2,5" -> seed list.
std::vector<std::uint64_t> parse_seed_list(const std::string& spec);

}  // namespace trajgnn
