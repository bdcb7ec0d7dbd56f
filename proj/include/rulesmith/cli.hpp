#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rulesmith {

/// Entry point of the `rulesmith` tool. Returns the process exit status:
/// 0 on success, 1 on a runtime failure (a JSON error object is written to
/// `err`), 2 on a usage error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rulesmith
