#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace glyphgen {

/// Runs one CLI workflow (make-corpus, train, generate, evaluate).
/// `args` excludes the program name. Returns the process exit code: 0 on
/// success, otherwise exit_code() of the failure category, which is also
/// printed as `error[<category>]: <message>` on `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, char** argv);

}  // namespace glyphgen
