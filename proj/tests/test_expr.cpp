#include <cmath>
#include <numbers>
#include <random>

#include "cgb/expr.hpp"
#include "doctest.h"

using namespace cgb;

TEST_CASE("parse builds the expected tree shape") {
  const Expr e = Expr::parse("x^2 + y^2", {"x", "y"});
  CHECK(e.root().kind == NodeKind::Add);
  const auto& n = e.nodes();
  CHECK(n[e.root().lhs].kind == NodeKind::Power);
  CHECK(n[e.root().rhs].kind == NodeKind::Power);
  CHECK(n[e.root().lhs].integer_exponent == 2);

  const Expr h = Expr::parse("z - (x*y)/2", {"x", "y", "z"});
  CHECK(h({1.0, 2.0, 3.0}) == doctest::Approx(2.0));
}

TEST_CASE("parse errors") {
  try {
    Expr::parse("sin(", {"x"});
    FAIL("expected SyntaxError");
  } catch (const SyntaxError& err) {
    CHECK(err.position() == 4);
  }
  CHECK_THROWS_AS(Expr::parse("x + q", {"x"}), UnknownIdentifier);
  CHECK_THROWS_AS(Expr::parse("abs(x)", {"x"}), NonSmoothPrimitive);
  CHECK_THROWS_AS(Expr::parse("floor(x)", {"x"}), NonSmoothPrimitive);
  CHECK_THROWS_AS(Expr::parse("sign(x)", {"x"}), NonSmoothPrimitive);
  CHECK_THROWS_AS(Expr::parse("(x", {"x"}), SyntaxError);
  CHECK_THROWS_AS(Expr::parse("x y", {"x", "y"}), SyntaxError);
  CHECK_THROWS_AS(Expr::parse("", {"x"}), SyntaxError);
  CHECK_THROWS_AS(Expr::parse("x", {"x", "x"}), InvalidArgument);
}

TEST_CASE("numbers, constants and precedence") {
  CHECK(Expr::parse("1.5e2", {})({}) == 150.0);
  CHECK(Expr::parse(".25", {})({}) == 0.25);
  CHECK(Expr::parse("2^3^2", {})({}) == 512.0);
  CHECK(Expr::parse("-2^2", {})({}) == -4.0);
  CHECK(Expr::parse("2^-1", {})({}) == 0.5);
  CHECK(Expr::parse("8/4/2", {})({}) == 1.0);
  CHECK(Expr::parse("pi", {})({}) == std::numbers::pi);
  const Expr r = Expr::parse("x^0.5", {"x"});
  CHECK_FALSE(r.notes().empty());
  CHECK(r({4.0}) == doctest::Approx(2.0));
  CHECK_THROWS_AS(r({-1.0}), DomainError);
}

TEST_CASE("round trip through the printer") {
  const std::vector<std::string> vars{"x", "y", "z"};
  for (const char* src : {"x^2 + y^2", "z - (x*y)/2", "-(x + y)*z", "x - (y - z)", "x/(y/z)", "(-x)^2",
                          "-x^2", "x^(y + 1)", "sin(x)*cos(y) + exp(-z)", "atan(x/2)^3", "2^3^2",
                          "(x^2)^3", "x*(y*z)", "sqrt(1 + x^2) - log(2 + y)", "1e-3*x"}) {
    const Expr a = Expr::parse(src, vars);
    const Expr b = Expr::parse(a.to_string(), vars);
    CHECK_MESSAGE(a.structurally_equal(b), src << " -> " << a.to_string());
  }
}

TEST_CASE("eval_jet oracles") {
  const Jet sq = eval_jet(Expr::parse("x^2", {"x"}), std::vector{3.0}, 2);
  CHECK(sq.value() == 9.0);
  CHECK(sq.derivative({1}) == 6.0);
  CHECK(sq.derivative({2}) == 2.0);

  const Jet s = eval_jet(Expr::parse("sin(x)", {"x"}), std::vector{0.0}, 3);
  CHECK(s.derivative({0}) == 0.0);
  CHECK(s.derivative({1}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(s.derivative({2}) == doctest::Approx(0.0));
  CHECK(s.derivative({3}) == doctest::Approx(-1.0).epsilon(1e-15));

  const Jet e = eval_jet(Expr::parse("exp(x*y)", {"x", "y"}), std::vector{1.0, 1.0}, 2);
  CHECK(e.derivative({1, 1}) == doctest::Approx(2.0 * std::numbers::e).epsilon(1e-14));
  CHECK(e.derivative_along({0, 1}) == e.derivative_along({1, 0}));

  CHECK_THROWS_AS(eval_jet(Expr::parse("x", {"x"}), std::vector{0.0}, 4), OrderUnsupported);
  CHECK_THROWS_AS(eval_jet(Expr::parse("log(x)", {"x"}), std::vector{0.0}, 1), DomainError);
  CHECK_THROWS_AS(eval_jet(Expr::parse("sqrt(x)", {"x"}), std::vector{-1.0}, 1), DomainError);
  CHECK_THROWS_AS(eval_jet(Expr::parse("x", {"x"}), std::vector{0.0, 1.0}, 1), InvalidArgument);
}

TEST_CASE("third-order mixed partials") {
  // f = sin(u), u = xyz. f_x = yz cos u; f_xy = z cos u - x y z^2 sin u;
  // f_xyz = cos u - xyz sin u - 2xyz sin u - x^2y^2z^2 cos u. At 1: cos1 - 3 sin1 - cos1 = -3 sin 1.
  const Jet j = eval_jet(Expr::parse("sin(x*y*z)", {"x", "y", "z"}), std::vector{1.0, 1.0, 1.0}, 3);
  CHECK(j.derivative({1, 1, 1}) == doctest::Approx(-3.0 * std::sin(1.0)).epsilon(1e-14));
  // atan third derivative at 0 is -2
  const Jet a = eval_jet(Expr::parse("atan(x)", {"x"}), std::vector{0.0}, 3);
  CHECK(a.derivative({3}) == doctest::Approx(-2.0));
}

TEST_CASE("finite difference cross-check") {
  CHECK(finite_diff_check(Expr::parse("x^3", {"x"}), std::vector{2.0}, 2, 1e-4) < 1e-6);
  CHECK(finite_diff_check(Expr::parse("sin(x)*cos(y)", {"x", "y"}), std::vector{0.3, 0.7}, 2, 1e-4) < 1e-6);
  CHECK(finite_diff_check(Expr::parse("1", {"x", "y"}), std::vector{0.3, 0.7}, 3, 1e-3) == 0.0);
  CHECK_THROWS_AS(finite_diff_check(Expr::parse("x", {"x"}), std::vector{1.0}, 1, 0.0), InvalidArgument);
}

TEST_CASE("jets agree with finite differences at random points") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const std::vector<std::string> vars{"x", "y", "z"};
  for (const char* src : {"exp(x*y) - z^3", "sin(x + 2*y)*cos(z)", "atan(x*y + z)", "sqrt(2 + x^2 + y*z)",
                          "log(3 + x + y^2) / (2 + z^2)", "(1 + x^2)*(x*y - y*x)/2 + z"}) {
    const Expr e = Expr::parse(src, vars);
    for (int i = 0; i < 100; ++i) {
      const std::vector<double> p{U(rng), U(rng), U(rng)};
      CHECK(finite_diff_check(e, p, 2, 1e-4, true) < 1e-5);
      CHECK(finite_diff_check(e, p, 3, 2e-3, true) < 1e-4);
    }
  }
}
