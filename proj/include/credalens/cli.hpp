#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "credalens/core.hpp"

namespace credalens::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

// Input and configuration problems map to 1; failures while computing or
// writing map to 2.
int exit_code_for(ErrorKind kind);

// `args` excludes the program name. Failures print one JSON object
// {"error", "message", "exit_code"} to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace credalens::cli
