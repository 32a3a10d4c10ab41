#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace derand {

// Exit codes: 0 success, 1 usage / I/O / validation error, 2 bad rows under
// --strict (or a failed cross-check for verify).
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace derand
