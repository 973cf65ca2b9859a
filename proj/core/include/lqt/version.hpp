#pragma once

namespace lqt {

const char* version();

// Compiler and build configuration, recorded into reports and run stamps.
const char* build_info();

}  // namespace lqt
