#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace elsa {

// Environment variable holding the default --seed.
inline constexpr const char* kSeedEnv = "ELSA_SEED";

/// Runs one command line (args excludes the program name). Returns the
/// process exit code: 0 ok, 2 usage, 3 validation, 4 IO, 5 numeric.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace elsa
