#pragma once

#include <string>
#include <vector>

namespace token2vec::cli {

// Exit codes: 0 success, 1 internal/numeric failure, 2 usage/input error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUsage = 2;

int run(int argc, char** argv);
// args excludes the program name.
int run(const std::vector<std::string>& args);

}  // namespace token2vec::cli
