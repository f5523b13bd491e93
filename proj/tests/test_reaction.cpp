#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "rdsim/expression.hpp"
#include "rdsim/reaction.hpp"

using namespace rdsim;

namespace {

double eval(const std::string& src, std::vector<double> u = {}, double x = 0, double y = 0, double t = 0) {
  const auto e = Expression::parse(src, u.size());
  return e.evaluate(ExpressionContext{u, x, y, t});
}

StateSampler small_sampler(std::size_t draws = 500) {
  SamplerOptions o;
  o.draws_per_radius = draws;
  return StateSampler(o);
}

}  // namespace

TEST(Expression, ArithmeticAndPrecedence) {
  EXPECT_DOUBLE_EQ(eval("1 + 2*3"), 7.0);
  EXPECT_DOUBLE_EQ(eval("-2^2"), -4.0);
  EXPECT_DOUBLE_EQ(eval("2^3^2"), 512.0);
  EXPECT_DOUBLE_EQ(eval("(1 + 2) / 4"), 0.75);
  EXPECT_DOUBLE_EQ(eval("1e-3 * 2"), 2e-3);
}

TEST(Expression, VariablesAndFunctions) {
  EXPECT_DOUBLE_EQ(eval("u1*u2 - u2^2", {2.0, 3.0}), -3.0);
  EXPECT_DOUBLE_EQ(eval("x + 10*y + 100*t", {}, 1, 2, 3), 321.0);
  EXPECT_DOUBLE_EQ(eval("step(x - 0.5)", {}, 0.7), 1.0);
  EXPECT_DOUBLE_EQ(eval("step(x - 0.5)", {}, 0.2), 0.0);
  EXPECT_DOUBLE_EQ(eval("min(3, max(1, 2))"), 2.0);
  EXPECT_NEAR(eval("sin(pi*x)", {}, 0.5), 1.0, 1e-15);
  EXPECT_NEAR(eval("cos(pi)"), -1.0, 1e-15);
  EXPECT_NEAR(eval("exp(log(2)) + sqrt(4) + abs(-1)"), 5.0, 1e-15);
}

TEST(Expression, Errors) {
  EXPECT_THROW(Expression::parse("u3", 2), ConfigError);
  EXPECT_THROW(Expression::parse("1 +", 1), ConfigError);
  EXPECT_THROW(Expression::parse("foo(1)", 1), ConfigError);
  EXPECT_THROW(Expression::parse("(1", 1), ConfigError);
}

TEST(Truncation, FormulaAndBound) {
  const std::vector<double> f{3.0, -1.0};
  const auto g = truncate(f, TruncationParam(0.5));
  EXPECT_DOUBLE_EQ(g[0], 1.0);
  EXPECT_DOUBLE_EQ(g[1], -1.0 / 3.0);

  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> mag(-12.0, 12.0);
  std::uniform_real_distribution<double> sgn(-1.0, 1.0);
  for (double eps : {1.0, 1e-2, 1e-4}) {
    for (int k = 0; k < 2000; ++k) {
      std::vector<double> v(3);
      for (auto& x : v) x = std::copysign(std::pow(10.0, mag(rng)), sgn(rng));
      for (double x : truncate(v, TruncationParam(eps))) EXPECT_LE(std::abs(x), 1.0 / eps);
    }
  }
}

TEST(Truncation, RejectsNonPositiveEpsilon) {
  EXPECT_THROW(TruncationParam(0.0), InvalidArgument);
  EXPECT_THROW(TruncationParam(-1.0), InvalidArgument);
}

TEST(Truncation, InactiveForTinyEpsilon) {
  const std::vector<double> f{0.25, -0.5};
  const auto g = truncate(f, TruncationParam(1e-300));
  EXPECT_EQ(g, f);
}

TEST(Sampler, DeterministicAndCoversFaces) {
  const auto s = small_sampler(100);
  const auto a = s.samples(3, 1);
  const auto b = s.samples(3, 1);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k].u, b[k].u);
  for (const auto& x : s.face_samples(3, 0, 2)) EXPECT_EQ(x.u[2], 0.0);
  for (const auto& x : a) {
    for (double v : x.u) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, s.radius(1));
    }
  }
}

TEST(Checkers, ReversibleBuiltinPassesAll) {
  const auto sys = builtin_reversible_reaction();
  const auto sampler = small_sampler();
  EXPECT_TRUE(check_quasi_positivity(sys, sampler).passed());
  EXPECT_TRUE(check_mass_control(sys, sampler).passed());
  EXPECT_TRUE(check_intermediate_sum(sys, sampler).passed());
  EXPECT_TRUE(check_polynomial_growth(sys, sampler).passed());
}

TEST(Checkers, QuasiPositivityViolationFound) {
  auto s = ReactionStructure::defaults(1);
  const auto sys = expression_system({"-1"}, s);
  const auto rep = check_quasi_positivity(sys, small_sampler());
  EXPECT_FALSE(rep.passed());
  EXPECT_EQ(rep.violations.front().u[0], 0.0);
}

TEST(Checkers, MassControlUsesConstants) {
  auto s = ReactionStructure::defaults(1);
  const auto growth = expression_system({"u1"}, s);
  EXPECT_FALSE(check_mass_control(growth, small_sampler()).passed());
  s.K1 = 1.0;
  EXPECT_TRUE(check_mass_control(growth.with_structure(s), small_sampler()).passed());
}

TEST(Checkers, CubicFailsIntermediateSumOfOrderTwo) {
  auto s = ReactionStructure::defaults(1);
  s.intermediate_order = 2.0;
  s.growth_order = 3.0;
  const auto sys = expression_system({"u1^3"}, s);
  EXPECT_FALSE(check_intermediate_sum(sys, small_sampler()).passed());
  EXPECT_TRUE(check_polynomial_growth(sys, small_sampler()).passed());
}

TEST(Checkers, LinearDecayPassesWithUnitOrders) {
  const auto sys = builtin_linear(2, -0.5);
  const auto sampler = small_sampler();
  EXPECT_TRUE(check_quasi_positivity(sys, sampler).passed());
  EXPECT_TRUE(check_mass_control(sys, sampler).passed());
  EXPECT_TRUE(check_intermediate_sum(sys, sampler).passed());
  EXPECT_TRUE(check_polynomial_growth(sys, sampler).passed());
}

TEST(Checkers, PlateauRule) {
  EXPECT_TRUE(ratio_plateaued(std::vector<double>{1.0, 1.02, 1.03}));
  EXPECT_FALSE(ratio_plateaued(std::vector<double>{1.0, 2.0, 4.0}));
  EXPECT_TRUE(ratio_plateaued(std::vector<double>{-1.0, -2.0}));
}

TEST(ReactionSystem, StructureValidation) {
  auto s = ReactionStructure::defaults(2);
  s.sum_matrix(0, 1) = 1.0;
  EXPECT_THROW(expression_system({"0", "0"}, s), InvalidArgument);
  s = ReactionStructure::defaults(2);
  s.mass_weights[0] = 0.0;
  EXPECT_THROW(expression_system({"0", "0"}, s), InvalidArgument);
}
