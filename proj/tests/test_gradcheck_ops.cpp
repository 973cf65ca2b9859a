#include <doctest.h>

#include "lqt/gradcheck.hpp"
#include "lqt/lptb.hpp"
#include "lqt/ops.hpp"
#include "support/test_util.hpp"

using namespace lqt;

// Every registered op is checked against central finite differences at random
// inputs in 64-bit, elementwise tolerance 1e-5 with denominators floored at
// 1e-8. The weighting array makes the upstream gradient non-uniform.

namespace {

const double kTol = 1e-5;

Var<double> weighted_sum(Graph<double>& g, const Var<double>& y, std::uint64_t seed) {
  auto w = g.constant(test::random_array(y.v().shape(), seed, 0.2, 1.4));
  return ops::sum(ops::mul(y, w));
}

}  // namespace

TEST_CASE("gradcheck binary elementwise") {
  Parameter<double> a = test::random_param("a", {4, 3}, 101);
  Parameter<double> b = test::random_param("b", {4, 3}, 102, 0.5, 1.5);
  Parameter<double> s = test::random_param("s", {1}, 103, 0.5, 1.5);

  auto check = [&](auto opfn, const char* name) {
    auto rep = gradcheck({&a, &b}, [&](Graph<double>& g) {
      return weighted_sum(g, opfn(g.leaf(a), g.leaf(b)), 900);
    });
    INFO(name);
    CHECK(rep.max_rel <= kTol);
    // scalar broadcast path
    auto rep2 = gradcheck({&a, &s}, [&](Graph<double>& g) {
      return weighted_sum(g, opfn(g.leaf(a), g.leaf(s)), 901);
    });
    CHECK(rep2.max_rel <= kTol);
  };
  check([](auto x, auto y) { return ops::add(x, y); }, "add");
  check([](auto x, auto y) { return ops::sub(x, y); }, "sub");
  check([](auto x, auto y) { return ops::mul(x, y); }, "mul");
  check([](auto x, auto y) { return ops::div(x, y); }, "div");
  check([](auto x, auto y) { return ops::minimum(x, y); }, "minimum");
  check([](auto x, auto y) { return ops::maximum(x, y); }, "maximum");
}

TEST_CASE("gradcheck unary elementwise") {
  Parameter<double> x = test::random_param("x", {5, 4}, 111);
  auto check = [&](auto opfn, const char* name) {
    auto rep = gradcheck({&x}, [&](Graph<double>& g) {
      return weighted_sum(g, opfn(g.leaf(x)), 910);
    });
    INFO(name);
    CHECK(rep.max_rel <= kTol);
  };
  check([](auto v) { return ops::neg(v); }, "neg");
  check([](auto v) { return ops::exp(v); }, "exp");
  check([](auto v) { return ops::sigmoid(v); }, "sigmoid");
  check([](auto v) { return ops::softplus(v); }, "softplus");
  check([](auto v) { return ops::relu(v); }, "relu");
  check([](auto v) { return ops::mul_scalar(v, 1.7); }, "mul_scalar");
  check([](auto v) { return ops::add_scalar(v, -0.4); }, "add_scalar");
}

TEST_CASE("gradcheck layer_norm") {
  Parameter<double> x = test::random_param("x", {6, 5}, 121);
  Parameter<double> gamma = test::random_param("gamma", {5}, 122, 0.5, 1.5);
  Parameter<double> beta = test::random_param("beta", {5}, 123);
  auto rep = gradcheck({&x, &gamma, &beta}, [&](Graph<double>& g) {
    return weighted_sum(g, ops::layer_norm(g.leaf(x), g.leaf(gamma), g.leaf(beta), 1e-5), 920);
  });
  CHECK(rep.max_rel <= kTol);
}

TEST_CASE("gradcheck conv1d_depthwise and depthwise_window") {
  Parameter<double> x = test::random_param("x", {9, 3}, 131);
  Parameter<double> k = test::random_param("k", {5, 3}, 132);
  auto rep = gradcheck({&x, &k}, [&](Graph<double>& g) {
    return weighted_sum(g, ops::conv1d_depthwise(g.leaf(x), g.leaf(k)), 930);
  });
  CHECK(rep.max_rel <= kTol);

  Parameter<double> win = test::random_param("win", {5, 3}, 133);
  auto rep2 = gradcheck({&win, &k}, [&](Graph<double>& g) {
    return weighted_sum(g, ops::depthwise_window(g.leaf(win), g.leaf(k)), 931);
  });
  CHECK(rep2.max_rel <= kTol);
}

TEST_CASE("gradcheck linear_per_timestep") {
  Parameter<double> x = test::random_param("x", {7, 4}, 141);
  Parameter<double> w = test::random_param("w", {4, 3}, 142);
  Parameter<double> b = test::random_param("b", {3}, 143);
  auto rep = gradcheck({&x, &w, &b}, [&](Graph<double>& g) {
    return weighted_sum(g, ops::linear_per_timestep(g.leaf(x), g.leaf(w), g.leaf(b)), 940);
  });
  CHECK(rep.max_rel <= kTol);
}

TEST_CASE("gradcheck dropout with fixed mask") {
  Parameter<double> x = test::random_param("x", {8, 4}, 151);
  auto rep = gradcheck({&x}, [&](Graph<double>& g) {
    return weighted_sum(g, ops::dropout(g.leaf(x), 0.4, 777, true), 950);
  });
  CHECK(rep.max_rel <= kTol);
}

TEST_CASE("gradcheck maxpool, slices, stack") {
  Parameter<double> x = test::random_param("x", {8, 3}, 161);
  auto rep = gradcheck({&x}, [&](Graph<double>& g) {
    return weighted_sum(g, ops::maxpool_rows(g.leaf(x), 2), 960);
  });
  CHECK(rep.max_rel <= kTol);

  auto rep2 = gradcheck({&x}, [&](Graph<double>& g) {
    return weighted_sum(g, ops::slice_rows(g.leaf(x), 2, 6), 961);
  });
  CHECK(rep2.max_rel <= kTol);

  auto rep3 = gradcheck({&x}, [&](Graph<double>& g) {
    return weighted_sum(g, ops::slice_cols(g.leaf(x), 1, 3), 962);
  });
  CHECK(rep3.max_rel <= kTol);

  auto rep4 = gradcheck({&x}, [&](Graph<double>& g) {
    auto v = g.leaf(x);
    std::vector<Var<double>> rows;
    for (std::size_t t = 0; t < 8; ++t) rows.push_back(ops::slice_rows(v, t, t + 1));
    std::swap(rows[0], rows[5]);
    return weighted_sum(g, ops::stack_rows(rows), 963);
  });
  CHECK(rep4.max_rel <= kTol);
}

TEST_CASE("gradcheck blend_channels") {
  Parameter<double> x = test::random_param("x", {6, 4}, 171);
  Parameter<double> s = test::random_param("s", {6, 4}, 172);
  Parameter<double> a_scalar = test::random_param("a", {1}, 173, 0.2, 0.8);
  Parameter<double> a_chan = test::random_param("ac", {4}, 174, 0.2, 0.8);

  auto rep = gradcheck({&x, &s, &a_scalar}, [&](Graph<double>& g) {
    return weighted_sum(g, blend_channels(g.leaf(x), g.leaf(s), g.leaf(a_scalar)), 970);
  });
  CHECK(rep.max_rel <= kTol);

  auto rep2 = gradcheck({&x, &s, &a_chan}, [&](Graph<double>& g) {
    return weighted_sum(g, blend_channels(g.leaf(x), g.leaf(s), g.leaf(a_chan)), 971);
  });
  CHECK(rep2.max_rel <= kTol);
}

TEST_CASE("gradcheck detects a corrupted backward rule") {
  // Negative control: an op with a deliberately wrong derivative must trip the
  // finite-difference harness.
  Parameter<double> x = test::random_param("x", {3, 3}, 181);
  auto bad_square = [](const Var<double>& v) {
    return ops::unary_op<double>(
        "bad_square", v, [](double a) { return a * a; },
        [](double u, double a, double) { return u * a; });  // missing factor 2
  };
  auto rep = gradcheck({&x}, [&](Graph<double>& g) {
    return weighted_sum(g, bad_square(g.leaf(x)), 980);
  });
  CHECK(rep.max_rel > 1e-2);
}
