#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lqt/graph.hpp"
#include "lqt/rng.hpp"

namespace lqt::test {

inline Array<double> random_array(std::vector<std::size_t> shape, std::uint64_t seed,
                                  double lo = -1.0, double hi = 1.0) {
  rng::Counter rc(seed);
  Array<double> a(std::move(shape));
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = lo + (hi - lo) * rc.next_uniform();
  }
  return a;
}

inline Parameter<double> random_param(const std::string& name, std::vector<std::size_t> shape,
                                      std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  return Parameter<double>(name, random_array(std::move(shape), seed, lo, hi));
}

}  // namespace lqt::test
