#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lis/root.hpp"

using lis::newton_bisect;

TEST_CASE("finds the cube root of two") {
  auto fn = [](double x) { return std::pair{x * x * x - 2, 3 * x * x}; };
  const auto r = newton_bisect<double>(fn, 0.0, 3.0, 1.0, 1e-15, 0.0);
  REQUIRE(r);
  CHECK(r->x == doctest::Approx(std::cbrt(2.0)).epsilon(1e-14));
}

TEST_CASE("decreasing functions are handled") {
  auto fn = [](double x) { return std::pair{1.0 - std::exp(x - 0.7), -std::exp(x - 0.7)}; };
  const auto r = newton_bisect<double>(fn, 0.0, 5.0, 4.9, 1e-14, 1e-15);
  REQUIRE(r);
  CHECK(r->x == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("bad derivative falls back to bisection") {
  // Derivative deliberately wrong in sign: Newton steps leave the bracket.
  auto fn = [](double x) { return std::pair{x - 0.3, -1.0}; };
  const auto r = newton_bisect<double>(fn, 0.0, 1.0, 0.9, 1e-13, 0.0, 200);
  REQUIRE(r);
  CHECK(r->x == doctest::Approx(0.3).epsilon(1e-11));
}

TEST_CASE("stiff exponential residual converges from a far guess") {
  // Shape of a Butler-Volmer sum: 2 sinh(40 (x - 2.1)) - 0.5.
  auto fn = [](double x) {
    const double g = 40 * (x - 2.1);
    return std::pair{-2 * std::sinh(g) + 0.5, -80 * std::cosh(g)};
  };
  const auto r = newton_bisect<double>(fn, 0.0, 5.0, 4.5, 1e-14, 1e-13);
  REQUIRE(r);
  CHECK(r->x == doctest::Approx(2.1 + std::asinh(0.25) / 40).epsilon(1e-12));
  CHECK(r->iterations < 100);
}

TEST_CASE("missing bracket and non-finite values are reported") {
  auto pos = [](double x) { return std::pair{x * x + 1, 2 * x}; };
  CHECK_FALSE(newton_bisect<double>(pos, -1.0, 1.0, 0.0, 1e-12, 0.0));
  auto nan_end = [](double x) { return std::pair{x < 1 ? x - 0.5 : NAN, 1.0}; };
  CHECK_FALSE(newton_bisect<double>(nan_end, 0.0, 1.0, 0.2, 1e-12, 0.0));
}

TEST_CASE("roots on the bracket ends are returned directly") {
  auto fn = [](double x) { return std::pair{x - 1, 1.0}; };
  const auto r = newton_bisect<double>(fn, 1.0, 2.0, 1.5, 1e-12, 0.0);
  REQUIRE(r);
  CHECK(r->x == 1.0);
  CHECK(r->iterations == 0);
}
