#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "rdsim/diagnostics.hpp"

using namespace rdsim;

namespace {

// A trajectory whose single cell follows the given values at the given times.
Trajectory synthetic(const std::vector<double>& t, const std::vector<double>& v) {
  Trajectory traj;
  traj.grid = StructuredGrid::uniform_1d(1);
  for (std::size_t k = 0; k < t.size(); ++k) traj.records.push_back({t[k], {{v[k]}}, {0.0}, {0.0}});
  return traj;
}

TransportProblem closed_problem(const StructuredGrid& g, ReactionSystem sys, double d) {
  const std::size_t m = sys.species();
  return {g, CoefficientSchedule(CoefficientField::constant(g, m, d)), BoundarySpec(m, BoundaryCondition::no_flux()),
          std::move(sys)};
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

SolverConfig config(double dt, double t_end, double out) {
  SolverConfig c;
  c.dt = dt;
  c.t_end = t_end;
  c.output_interval = out;
  return c;
}

}  // namespace

TEST(NormSeries, AppendsSupNormAndMatchesNaiveSums) {
  const auto g = StructuredGrid::uniform_1d(4);
  Trajectory traj;
  traj.grid = g;
  traj.records.push_back({0.0, {{1.0, 2.0, 3.0, 4.0}}, {0.0}, {0.0}});
  const auto ns = norm_series(traj, {1.0, 2.0});
  ASSERT_EQ(ns.p.size(), 3u);
  EXPECT_TRUE(std::isinf(ns.p.back()));
  EXPECT_DOUBLE_EQ(ns.series(0, 1.0)[0], 2.5);
  EXPECT_NEAR(ns.series(0, 2.0)[0], std::sqrt(30.0 / 4.0), 1e-15);
  EXPECT_DOUBLE_EQ(ns.series(0, kInfinity)[0], 4.0);
  EXPECT_THROW(ns.series(0, 3.0), InvalidArgument);
}

TEST(Energy, UnitThetaOrderOneIsTotalMass) {
  const auto g = StructuredGrid::uniform_2d(5, 4);
  const auto s = random_state(g, 3, 1);
  double mass = 0.0;
  for (const auto& f : s.fields) mass += discrete_norm(f, g, 1.0);
  EXPECT_NEAR(energy_functional(s.fields, g, EnergySpec(1, ThetaVector::ones(3))), mass, 1e-13 * mass);
}

TEST(Energy, OrderPUnitThetaIsPowerOfSumIntegrated) {
  const auto g = StructuredGrid::uniform_1d(7);
  const auto s = random_state(g, 2, 2);
  double want = 0.0;
  for (std::size_t c = 0; c < g.size(); ++c) want += g.volume(c) * std::pow(s.fields[0][c] + s.fields[1][c], 3);
  EXPECT_NEAR(energy_functional(s.fields, g, EnergySpec(3, ThetaVector::ones(2))), want, 1e-12 * want);
}

TEST(Envelope, RecoversPlateauOfRisingRelaxation) {
  const double delta = 0.5, plateau = 2.0, L0 = 0.5;
  std::vector<double> t, v;
  for (int k = 0; k <= 100; ++k) {
    t.push_back(0.1 * k);
    v.push_back(plateau + (L0 - plateau) * std::exp(-delta * t.back()));
  }
  const auto fit = fit_envelope(t, v);
  ASSERT_TRUE(fit.fitted);
  EXPECT_NEAR(fit.plateau, plateau, 0.05 * plateau);
  for (std::size_t k = 0; k + 1 < v.size(); ++k) {
    const double e = std::exp(-fit.delta * (t[k + 1] - t[k]));
    EXPECT_LE(v[k + 1], v[k] * e + fit.plateau * (1 - e) + 1e-12);
  }
}

TEST(Envelope, DecayNeedsNoSource) {
  std::vector<double> t, v;
  for (int k = 0; k <= 100; ++k) {
    t.push_back(0.1 * k);
    v.push_back(2.0 + 8.0 * std::exp(-0.5 * t.back()));
  }
  const auto fit = fit_envelope(t, v);
  ASSERT_TRUE(fit.fitted);
  EXPECT_EQ(fit.C, 0.0);
  for (std::size_t k = 0; k + 1 < v.size(); ++k) {
    EXPECT_LE(v[k + 1], v[k] * std::exp(-fit.delta * (t[k + 1] - t[k])) + 1e-12);
  }
}

TEST(Envelope, GrowthGivesHighPlateau) {
  std::vector<double> t, v;
  for (int k = 0; k <= 50; ++k) {
    t.push_back(0.1 * k);
    v.push_back(std::exp(t.back()));
  }
  const auto fit = fit_envelope(t, v);
  EXPECT_GT(fit.plateau, v.back());
}

TEST(EnergyTrace, BoundedForDissipativeRunAndNotForGrowth) {
  const auto g = StructuredGrid::uniform_1d(16);
  const auto closed = run(random_state(g, 2, 3), config(0.05, 8.0, 0.25),
                          closed_problem(g, builtin_reversible_reaction(), 0.05));
  const auto calm = energy_trace(closed, {EnergySpec(2, ThetaVector::ones(2))});
  ASSERT_EQ(calm.series.size(), 1u);
  EXPECT_TRUE(calm.series[0].bounded);
  for (double v : calm.series[0].values) EXPECT_GE(v, 0.0);

  const auto grow = run(random_state(g, 1, 4), config(0.05, 8.0, 0.25), closed_problem(g, builtin_linear(1, 1.0), 0.05));
  const auto hot = energy_trace(grow, {EnergySpec(2, ThetaVector::ones(1))});
  EXPECT_FALSE(hot.series[0].bounded);
}

TEST(WindowedSup, WindowsAndNoGrowth) {
  std::vector<double> t, flat, rising;
  for (int k = 0; k <= 80; ++k) {
    t.push_back(0.125 * k);
    flat.push_back(1.0 + 0.5 * std::sin(t.back()));
    rising.push_back(std::exp(0.2 * t.back()));
  }
  const auto w = windowed_sup(synthetic(t, flat));
  EXPECT_EQ(w.starts.front(), 0.0);
  EXPECT_EQ(w.starts.back(), 8.0);
  EXPECT_EQ(w.starts.size(), 9u);
  // Window (0, 2]: max of 1 + 0.5 sin t is 1.5 at t = pi/2.
  EXPECT_NEAR(w.values[0][0], 1.0 + 0.5 * std::sin(1.625), 1e-12);
  EXPECT_TRUE(w.no_growth(0.05));
  EXPECT_FALSE(windowed_sup(synthetic(t, rising)).no_growth(0.05));
}

TEST(WindowedSup, ShortTrajectoryRejected) {
  EXPECT_THROW(windowed_sup(synthetic({0.0, 1.0}, {1.0, 1.0})), InvalidArgument);
}

TEST(Budget, StepExactClosesLinearGrowthBudget) {
  const auto g = StructuredGrid::uniform_1d(16);
  const auto sys = builtin_linear(2, 0.5);
  auto init = random_state(g, 2, 5);
  init.epsilon = TruncationParam(1e-300);
  const auto traj = run(init, config(0.05, 2.0, 0.25), closed_problem(g, sys, 0.1));
  for (double r : mass_budget(traj, sys, Quadrature::StepExact)) EXPECT_NEAR(r, 0.0, 1e-10);
  // The trapezoid rule over records misses the explicit-step lag.
  double worst = 0.0;
  for (double r : mass_budget(traj, sys, Quadrature::Trapezoid)) worst = std::max(worst, std::abs(r));
  EXPECT_GT(worst, 1e-6);
  for (double r : transport_residual(traj, {1.0, 1.0})) EXPECT_NEAR(r, 0.0, 1e-10);
}

TEST(Budget, CumulativeTrapezoidOnKnownCurve) {
  std::vector<double> t{0.0, 1.0, 3.0};
  const auto traj = synthetic(t, {1.0, 3.0, 5.0});
  const auto c = cumulative_time_integral(traj, 0, Quadrature::Trapezoid);
  EXPECT_DOUBLE_EQ(c[1], 2.0);
  EXPECT_DOUBLE_EQ(c[2], 10.0);
}

TEST(Budget, ConstantSourceTerm) {
  const auto traj = synthetic({0.0, 2.0}, {1.0, 3.0});
  BudgetSpec spec{{1.0}, {0.0}, 1.0, Quadrature::Trapezoid};
  const auto r = budget_residual(traj, spec);
  EXPECT_DOUBLE_EQ(r[1], 0.0);
}

TEST(Apriori, ThresholdsAndNorms) {
  const auto traj = synthetic({0.0, 1.0, 2.0}, {1.0, 2.0, 1.0});
  const auto la = apriori_hypothesis_monitor(traj, AprioriMode::La, 2.0);
  EXPECT_DOUBLE_EQ(la.r_threshold, 5.0);
  EXPECT_DOUBLE_EQ(la.max_norm, 2.0);
  const auto lb = apriori_hypothesis_monitor(traj, AprioriMode::Lb, 2.0);
  EXPECT_DOUBLE_EQ(lb.r_threshold, 1.0 + 4.0 / 3.0);
  // Trapezoid of u^2: (1 + 4)/2 + (4 + 1)/2 = 5.
  EXPECT_NEAR(lb.max_norm, std::sqrt(5.0), 1e-15);
  const auto cap = apriori_hypothesis_monitor(traj, AprioriMode::La, kInfinity);
  EXPECT_EQ(cap.exponent, kSupExponentCap);
  EXPECT_THROW(apriori_hypothesis_monitor(traj, AprioriMode::La, 0.5), InvalidArgument);
}
