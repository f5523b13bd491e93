#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "rdsim/assembly.hpp"
#include "rdsim/integrator.hpp"

using namespace rdsim;

namespace {

TransportProblem make_problem(const StructuredGrid& g, ReactionSystem sys, BoundaryCondition bc, double d = 0.1,
                              std::array<double, 2> drift = {0.0, 0.0}) {
  const std::size_t m = sys.species();
  return {g, CoefficientSchedule(CoefficientField::constant(g, m, d, drift)), BoundarySpec(m, bc), std::move(sys)};
}

SimState random_state(const StructuredGrid& g, std::size_t m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  SimState s;
  s.fields.assign(m, ScalarField(g.size()));
  for (auto& f : s.fields)
    for (auto& v : f) v = u(rng);
  return s;
}

double total(const std::vector<ScalarField>& fields, const StructuredGrid& g) {
  double acc = 0.0;
  for (const auto& f : fields) acc += integrate(f, g);
  return acc;
}

SolverConfig config(double dt, double t_end, double out = 0.0) {
  SolverConfig c;
  c.dt = dt;
  c.t_end = t_end;
  c.output_interval = out;
  return c;
}

}  // namespace

TEST(Integrator, ZeroReactionConservesMass) {
  const auto g = StructuredGrid::uniform_1d(128);
  const auto problem = make_problem(g, builtin_zero(1), BoundaryCondition::no_flux(), 0.05, {0.3, 0.0});
  const auto init = random_state(g, 1, 1);
  const auto traj = run(init, config(0.01, 1.0, 0.1), problem);
  for (const auto& rec : traj.records) EXPECT_NEAR(total(rec.fields, g), total(init.fields, g), 1e-10);
  EXPECT_GE(traj.min_value, -1e-12);
}

TEST(Integrator, ReversibleReactionConservesMass) {
  const auto g = StructuredGrid::uniform_2d(12, 10);
  const auto problem = make_problem(g, builtin_reversible_reaction(), BoundaryCondition::no_flux(), 0.02);
  const auto init = random_state(g, 2, 2);
  const auto traj = run(init, config(0.01, 2.0, 0.25), problem);
  for (const auto& rec : traj.records) EXPECT_NEAR(total(rec.fields, g), total(init.fields, g), 1e-8);
  EXPECT_GE(traj.min_value, -1e-12);
}

TEST(Integrator, DiffusionIsMaxNormContractive) {
  const auto g = StructuredGrid::uniform_2d(10, 10);
  auto problem = make_problem(g, builtin_zero(1), BoundaryCondition::no_flux(), 0.01);
  problem.boundary.set(0, Side::XHigh, BoundaryCondition::dirichlet());
  SimState s = random_state(g, 1, 3);
  TransportOperators ops(problem);
  const auto cfg = config(0.05, 1.0);
  for (int n = 0; n < 20; ++n) {
    const double before = *std::max_element(s.fields[0].begin(), s.fields[0].end());
    auto [next, rep] = step(s, cfg, ops, problem, cfg.dt);
    const double after = *std::max_element(next.fields[0].begin(), next.fields[0].end());
    EXPECT_LE(after, before * (1 + 1e-12));
    EXPECT_GE(rep.min_value, -1e-12);
    s = std::move(next);
  }
}

TEST(Integrator, AdvectionDiffusionIsL1Contractive) {
  // Conservative drift can pile mass against a wall, so the sup norm may
  // grow; the L1 norm of a difference of solutions cannot.
  const auto g = StructuredGrid::uniform_2d(10, 10);
  auto problem = make_problem(g, builtin_zero(1), BoundaryCondition::no_flux(), 0.01, {0.5, -0.2});
  problem.boundary.set(0, Side::XHigh, BoundaryCondition::dirichlet());
  SimState a = random_state(g, 1, 3);
  SimState b = random_state(g, 1, 4);
  TransportOperators ops(problem);
  const auto cfg = config(0.05, 1.0);
  auto l1_gap = [&] {
    ScalarField d(g.size());
    for (std::size_t c = 0; c < d.size(); ++c) d[c] = a.fields[0][c] - b.fields[0][c];
    return discrete_norm(d, g, 1.0);
  };
  for (int n = 0; n < 20; ++n) {
    const double before = l1_gap();
    a = step(a, cfg, ops, problem, cfg.dt).first;
    b = step(b, cfg, ops, problem, cfg.dt).first;
    EXPECT_LE(l1_gap(), before * (1 + 1e-9));
    EXPECT_GE(a.min_value(), -1e-12);
  }
}

TEST(Integrator, ImplicitStepMatchesDenseSolve) {
  // One step on three cells: (I/dt + A) u1 = u0/dt + F(u0) with F = -u.
  const StructuredGrid g({{1.0, 1.0, 1.0}}, {0.0});
  const auto problem = make_problem(g, builtin_linear(1, -1.0), BoundaryCondition::dirichlet(), 1.0);
  SimState s;
  s.fields = {{1.0, 2.0, 3.0}};
  s.epsilon = TruncationParam(1e-300);
  TransportOperators ops(problem);
  const auto cfg = config(0.5, 1.0);
  const auto [next, rep] = step(s, cfg, ops, problem, 0.5);
  // Matrix [5,-1,0;-1,4,-1;0,-1,5], rhs 2u0 - u0 = u0.
  const double a = 5, b = -1, c = 4;
  const double det = a * (c * a - 1) - b * (b * a);
  const double x0 = (1 * (c * a - 1) - b * (2 * a + 3)) / det;
  EXPECT_NEAR(next.fields[0][0], x0, 1e-12);
  const double x1 = (2 + x0 + next.fields[0][2]) / c;
  EXPECT_NEAR(next.fields[0][1], x1, 1e-12);
  EXPECT_NEAR(5 * next.fields[0][2] - next.fields[0][1], 3.0, 1e-12);
}

TEST(Integrator, StiffDecayTriggersHalvingNotClamping) {
  const auto g = StructuredGrid::uniform_1d(8);
  const auto problem = make_problem(g, builtin_linear(1, -500.0), BoundaryCondition::no_flux(), 0.01);
  const auto init = random_state(g, 1, 4);
  const auto traj = run(init, config(0.01, 0.05), problem);
  EXPECT_GT(traj.total_halvings, 0);
  EXPECT_GE(traj.min_value, -1e-12);
  EXPECT_NEAR(traj.back().t, 0.05, 1e-12);
}

TEST(Integrator, HalvingLimitIsASolverError) {
  const auto g = StructuredGrid::uniform_1d(4);
  const auto problem = make_problem(g, builtin_linear(1, -1e6), BoundaryCondition::no_flux(), 0.01);
  auto cfg = config(1.0, 1.0);
  cfg.max_halvings = 2;
  EXPECT_THROW(run(random_state(g, 1, 5), cfg, problem), SolverError);
}

TEST(Integrator, RecordsLandOnOutputTimesAndSwitches) {
  const auto g = StructuredGrid::uniform_1d(8);
  auto problem = make_problem(g, builtin_zero(1), BoundaryCondition::no_flux(), 0.1);
  problem.coefficients.add(0.33, CoefficientField::constant(g, 1, 0.5));
  auto init = random_state(g, 1, 6);
  init.t = 1.0;
  const auto traj = run(init, config(0.07, 1.0, 0.25), problem);
  const std::vector<double> want{1.0, 1.25, 1.5, 1.75, 2.0};
  ASSERT_EQ(traj.records.size(), want.size());
  for (std::size_t k = 0; k < want.size(); ++k) EXPECT_DOUBLE_EQ(traj.records[k].t, want[k]);
  traj.validate();
}

TEST(Integrator, StepIntegralsCloseTheBudget) {
  const auto g = StructuredGrid::uniform_1d(16);
  const auto problem = make_problem(g, builtin_linear(2, 0.7), BoundaryCondition::no_flux(), 0.1);
  auto init = random_state(g, 2, 7);
  init.epsilon = TruncationParam(1e-300);
  const auto traj = run(init, config(0.02, 1.0, 0.1), problem);
  for (const auto& rec : traj.records) {
    for (std::size_t k = 0; k < 2; ++k) {
      const double change = integrate(rec.fields[k], g) - integrate(init.fields[k], g);
      EXPECT_NEAR(change, rec.reaction_integral[k], 1e-10);
      EXPECT_NEAR(rec.reaction_integral[k], 0.7 * rec.time_integral[k], 1e-12);
    }
  }
}

TEST(Integrator, HeatEquationMatchesSeparableSolution) {
  const double pi = std::acos(-1.0);
  const auto g = StructuredGrid::uniform_1d(64);
  const auto problem = make_problem(g, builtin_zero(1), BoundaryCondition::dirichlet(), 1.0);
  SimState s;
  s.fields.assign(1, ScalarField(g.size()));
  for (std::size_t c = 0; c < g.size(); ++c) s.fields[0][c] = std::sin(pi * g.center(0, c));
  const auto traj = run(s, config(1e-4, 0.1), problem);
  double err = 0.0;
  for (std::size_t c = 0; c < g.size(); ++c) {
    const double exact = std::sin(pi * g.center(0, c)) * std::exp(-pi * pi * 0.1);
    err = std::max(err, std::abs(traj.back().fields[0][c] - exact));
  }
  EXPECT_LT(err, 2e-3);
}

TEST(Integrator, Deterministic) {
  const auto g = StructuredGrid::uniform_2d(8, 8);
  const auto problem = make_problem(g, builtin_reversible_reaction(), BoundaryCondition::robin(0.2), 0.05, {0.1, 0.2});
  const auto init = random_state(g, 2, 8);
  const auto a = run(init, config(0.05, 0.5, 0.1), problem);
  const auto b = run(init, config(0.05, 0.5, 0.1), problem);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t r = 0; r < a.records.size(); ++r) EXPECT_EQ(a.records[r].fields, b.records[r].fields);
}

TEST(Integrator, RejectsNegativeInitialData) {
  const auto g = StructuredGrid::uniform_1d(4);
  const auto problem = make_problem(g, builtin_zero(1), BoundaryCondition::no_flux());
  SimState s;
  s.fields = {{1.0, -0.1, 0.0, 0.0}};
  EXPECT_THROW(run(s, config(0.1, 1.0), problem), InvalidArgument);
}

TEST(EpsilonStudy, InactiveTruncationGivesIdenticalRuns) {
  const auto g = StructuredGrid::uniform_1d(16);
  const auto problem = make_problem(g, builtin_linear(1, -0.5), BoundaryCondition::no_flux(), 0.05);
  const auto study = epsilon_refinement_study(problem, random_state(g, 1, 9), config(0.05, 1.0, 0.1), {1e-200, 1e-250});
  ASSERT_EQ(study.distances.size(), 1u);
  EXPECT_EQ(study.distances[0], 0.0);
}

TEST(EpsilonStudy, LipschitzBoundedReactionScalesLinearly) {
  // F = -u on data bounded by 2: the truncation error is O(eps).
  const auto g = StructuredGrid::uniform_1d(16);
  const auto problem = make_problem(g, builtin_linear(1, -1.0), BoundaryCondition::no_flux(), 0.05);
  const auto study =
      epsilon_refinement_study(problem, random_state(g, 1, 10), config(0.02, 1.0, 0.1), {1e-1, 1e-2, 1e-3, 1e-4});
  EXPECT_TRUE(study.monotone_shrinking());
  for (std::size_t k = 1; k < study.distances.size(); ++k) {
    EXPECT_NEAR(study.distances[k] / study.distances[k - 1], 0.1, 0.03);
  }
}
