#pragma once

#include <string>
#include <vector>

namespace lqt::cli {

// Exit codes: 0 success, 1 usage/config error, 2 numerical failure, 3 I/O error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitNumerical = 2;
inline constexpr int kExitIo = 3;

int run(const std::vector<std::string>& args);
int run(int argc, const char* const* argv);

}  // namespace lqt::cli
