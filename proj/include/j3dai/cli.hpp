#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace j3dai::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kValidation = 3, kRuntime = 4 };

// Runs one `j3dai` invocation. args[0] is the program name. Diagnostics go to
// `err`, help text to `out`; artifacts are written only to files.
int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace j3dai::cli
