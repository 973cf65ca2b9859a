#include "lqt/version.hpp"

namespace lqt {

const char* version() { return "0.1.0"; }

const char* build_info() {
#if defined(__clang__)
  return "clang " __clang_version__;
#elif defined(__GNUC__)
  return "gcc " __VERSION__;
#else
  return "unknown compiler";
#endif
}

}  // namespace lqt
