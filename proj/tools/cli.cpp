#include "cli.hpp"

#include <iostream>

namespace lqt::cli {

int run(const std::vector<std::string>& args) {
  (void)args;
  std::cerr << "not yet wired\n";
  return kExitConfig;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace lqt::cli
