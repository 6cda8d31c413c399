#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace van {

// Runs one CLI invocation. Returns 0 on success, 1 on usage or input errors,
// 2 when a gradient check fails. `args` excludes the program name.
int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace van
