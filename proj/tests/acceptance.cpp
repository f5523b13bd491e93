// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "rdsim/rdsim.hpp"

using namespace rdsim;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Smallest value seen in any state produced by any run below.
double g_global_min = std::numeric_limits<double>::infinity();
int g_runs = 0;
int g_halvings = 0;

Trajectory tracked_run(const SimState& init, const SolverConfig& cfg, const TransportProblem& problem) {
  Trajectory t = run(init, cfg, problem);
  g_global_min = std::min(g_global_min, t.min_value);
  g_halvings += t.total_halvings;
  ++g_runs;
  return t;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), std::numeric_limits<double>::min()); }

// 1 -------------------------------------------------------------------------
Outcome multinomial_reduction() {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> unit(0.0, 4.0);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const std::size_t m = 1 + k % 5;
    const int p = 1 + (k / 5) % 8;
    std::vector<double> u(m);
    double s = 0.0;
    for (auto& v : u) s += (v = unit(rng));
    worst = std::max(worst, rel(energy_density(u, EnergySpec(p, ThetaVector::ones(m))), std::pow(s, p)));
  }
  return {worst <= 1e-12, "max rel err " + fmt(worst) + " over 1000 draws (tol 1e-12)"};
}

// 2 -------------------------------------------------------------------------
Outcome derivative_identity() {
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> pos(0.5, 2.0);
  std::uniform_real_distribution<double> dir(-1.0, 1.0);
  const double h = 1e-5;
  double worst_fd = 0.0;
  double worst_closed = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const std::size_t m = 1 + k % 5;
    const int p = 1 + (k / 5) % 8;
    std::vector<double> u(m), du(m), adu(m), th(m), up(m), um(m);
    for (std::size_t i = 0; i < m; ++i) {
      u[i] = pos(rng);
      du[i] = dir(rng);
      adu[i] = std::abs(du[i]);
      th[i] = pos(rng);
      up[i] = u[i] + h * du[i];
      um[i] = u[i] - h * du[i];
    }
    const EnergySpec spec(p, ThetaVector(th));
    const double an = energy_time_derivative(u, du, spec);
    const double fd = (energy_density(up, spec) - energy_density(um, spec)) / (2.0 * h);
    // Relative to the derivative along |du|, the size of the summed terms.
    const double scale = energy_time_derivative(u, adu, spec);
    worst_fd = std::max(worst_fd, std::abs(an - fd) / scale);

    const EnergySpec ones(p, ThetaVector::ones(m));
    double s = 0.0, ds = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      s += u[i];
      ds += du[i];
    }
    const double closed = p * std::pow(s, p - 1) * ds;
    const double closed_scale = p * std::pow(s, p - 1) * std::max(std::abs(ds), 1e-300);
    worst_closed = std::max(worst_closed, std::abs(energy_time_derivative(u, du, ones) - closed) / closed_scale);
  }
  const bool pass = worst_fd <= 1e-6 && worst_closed <= 1e-12;
  return {pass, "finite-difference rel err " + fmt(worst_fd) + " (tol 1e-6), unit-theta rel err " + fmt(worst_closed) +
                    " (tol 1e-12)"};
}

// 3 -------------------------------------------------------------------------
Outcome gradient_identity() {
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> pos(0.2, 1.5);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const std::size_t m = 1 + k % 4;
    const int p = 2 + (k / 4) % 5;
    const std::size_t n = 1 + (k / 20) % 3;
    std::vector<double> u(m), th(m);
    std::vector<std::vector<double>> grad(m, std::vector<double>(n));
    std::vector<DenseMatrix> A;
    for (std::size_t s = 0; s < m; ++s) {
      u[s] = pos(rng);
      th[s] = pos(rng);
      for (auto& g : grad[s]) g = sym(rng);
      DenseMatrix L(n, n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) L(i, j) = sym(rng);
      DenseMatrix S(n, n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          double acc = i == j ? 0.1 : 0.0;
          for (std::size_t l = 0; l < n; ++l) acc += L(i, l) * L(j, l);
          S(i, j) = acc;
        }
      A.push_back(S);
    }
    const auto sides = ibp_identity_sides(u, grad, A, EnergySpec(p, ThetaVector(th)));
    worst = std::max(worst, std::abs(sides.lhs - sides.rhs) / std::max(std::abs(sides.lhs), std::abs(sides.rhs)));
  }
  return {worst <= 1e-10, "max rel |lhs - rhs| " + fmt(worst) + " over 1000 instances (tol 1e-10)"};
}

// 4 -------------------------------------------------------------------------
Outcome pd_gate() {
  const std::vector<DenseMatrix> D{DenseMatrix::identity(2), DenseMatrix::identity(2)};
  bool pass = true;
  std::string detail;
  for (double t : {0.5, 0.99, 1.01, 2.0}) {
    const auto B = assemble_btilde(D, ThetaVector({t, t}));
    const auto ev = symmetric_eigenvalues(B.matrix);
    const double lo = ev.front(), hi = ev.back();
    const bool ok = std::abs(lo - (t * t - 1)) <= 1e-10 && std::abs(hi - (t * t + 1)) <= 1e-10 &&
                    (min_eigenvalue(B) > 0.0) == (t > 1.0) && is_positive_definite(B.matrix) == (t > 1.0);
    pass = pass && ok;
    detail += "t=" + fmt(t) + " min " + fmt(lo) + (ok ? "" : " (mismatch)") + "; ";
  }
  return {pass, detail + "expected t^2 - 1 and t^2 + 1"};
}

// 5 -------------------------------------------------------------------------
Outcome truncation_bound() {
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> mag(-10.0, 12.0);
  std::uniform_real_distribution<double> sgn(-1.0, 1.0);
  const auto reversible = builtin_reversible_reaction();
  double worst = 0.0;
  for (double eps : {1.0, 1e-2, 1e-4}) {
    for (int k = 0; k < 10000; ++k) {
      std::vector<double> f(4);
      for (auto& v : f) v = std::copysign(std::pow(10.0, mag(rng)), sgn(rng));
      for (double v : truncate(f, TruncationParam(eps))) worst = std::max(worst, std::abs(v) * eps);
      // Same bound through a real system evaluated on large states.
      const std::vector<double> u{std::pow(10.0, std::abs(mag(rng))), std::pow(10.0, std::abs(mag(rng)))};
      for (double v : truncate(reversible.evaluate(ReactionPoint{}, u), TruncationParam(eps))) {
        worst = std::max(worst, std::abs(v) * eps);
      }
    }
  }
  return {worst <= 1.0, "max eps |F^eps| = " + fmt(worst) + " over 3 x 10^4 draws (bound 1)"};
}

// 6 -------------------------------------------------------------------------
Outcome interface_exactness() {
  const StructuredGrid g({{0.05, 0.1, 0.05, 0.1, 0.2, 0.1, 0.15, 0.05, 0.2}}, {0.0});
  const double a = 0.3, d1 = 5.0, d2 = 0.02, left = 2.0, right = 0.5;
  SpeciesCoefficients s = SpeciesCoefficients::constant(g.size(), d1);
  for (std::size_t c = 0; c < g.size(); ++c) {
    if (g.center(0, c) > a) s.diffusion[c] = {d2, d2};
  }
  const CoefficientField coeff({s});
  const BoundarySpec bc(1, BoundaryCondition::dirichlet());
  const auto A = assemble_diffusion(g, coeff, bc, 0);
  const auto x = linear_solve(A, dirichlet_lift(g, coeff, bc, 0, {left, right, 0.0, 0.0})).x;
  const double q = (left - right) / (a / d1 + (1.0 - a) / d2);
  double worst = 0.0;
  for (std::size_t c = 0; c < g.size(); ++c) {
    const double xc = g.center(0, c);
    const double exact = xc < a ? left - q * xc / d1 : right + q * (1.0 - xc) / d2;
    worst = std::max(worst, std::abs(x[c] - exact));
  }
  return {worst <= 1e-10, "max cell-center error " + fmt(worst) + " (tol 1e-10)"};
}

// 7 -------------------------------------------------------------------------
Outcome mass_budget_closure() {
  const auto g = StructuredGrid::uniform_1d(128);
  std::mt19937_64 rng(707);
  std::uniform_real_distribution<double> unit(0.0, 2.0);
  SolverConfig cfg;
  cfg.dt = 1e-3;
  cfg.t_end = 1.0;
  cfg.output_interval = 0.1;

  SpeciesCoefficients rough = SpeciesCoefficients::constant(g.size(), 1e-2, {0.2, 0.0});
  for (std::size_t c = 0; c < g.size(); ++c) {
    if (g.center(0, c) > 0.5) rough.diffusion[c] = {1e-3, 1e-3};
  }
  const TransportProblem zero{g, CoefficientSchedule(CoefficientField({rough})),
                              BoundarySpec(1, BoundaryCondition::no_flux()), builtin_zero(1)};
  SimState s1;
  s1.fields.assign(1, ScalarField(g.size()));
  for (auto& v : s1.fields[0]) v = unit(rng);
  const auto t1 = tracked_run(s1, cfg, zero);
  double worst_zero = 0.0;
  for (const auto& rec : t1.records) {
    worst_zero = std::max(worst_zero, std::abs(integrate(rec.fields[0], g) - integrate(s1.fields[0], g)));
  }

  const auto sys = builtin_reversible_reaction();
  const TransportProblem rev{g,
                             CoefficientSchedule(CoefficientField({SpeciesCoefficients::constant(g.size(), 1e-2),
                                                                   SpeciesCoefficients::constant(g.size(), 5e-3)})),
                             BoundarySpec(2, BoundaryCondition::no_flux()), sys};
  SimState s2;
  s2.fields.assign(2, ScalarField(g.size()));
  for (auto& f : s2.fields)
    for (auto& v : f) v = unit(rng);
  const auto t2 = tracked_run(s2, cfg, rev);
  const auto& c = sys.structure().mass_weights;
  auto weighted = [&](const std::vector<ScalarField>& f) { return c[0] * integrate(f[0], g) + c[1] * integrate(f[1], g); };
  double worst_rev = 0.0;
  for (const auto& rec : t2.records) worst_rev = std::max(worst_rev, std::abs(weighted(rec.fields) - weighted(s2.fields)));

  const bool pass = worst_zero <= 1e-8 && worst_rev <= 1e-8;
  return {pass, "transport-only drift " + fmt(worst_zero) + ", reversible weighted mass drift " + fmt(worst_rev) +
                    " (tol 1e-8)"};
}

// 9 -------------------------------------------------------------------------
Outcome energy_boundedness() {
  const auto g = StructuredGrid::uniform_1d(32);
  SpeciesCoefficients u1 = SpeciesCoefficients::constant(g.size(), 0.01);
  for (std::size_t c = 0; c < g.size(); ++c) {
    if (g.center(0, c) > 0.5) u1.diffusion[c] = {0.1, 0.1};
  }
  const auto sys = builtin_reversible_reaction();
  const TransportProblem problem{g, CoefficientSchedule(CoefficientField({u1, SpeciesCoefficients::constant(g.size(), 0.05)})),
                                 BoundarySpec(2, BoundaryCondition::no_flux()), sys};

  std::vector<DiffusionSample> samples;
  for (std::size_t c = 0; c < g.size(); c += 4) {
    DiffusionSample d;
    for (std::size_t k = 0; k < 2; ++k) d.push_back(DenseMatrix(1, 1, problem.coefficients.at(0.0)[k].diffusion[c][0]));
    samples.push_back(std::move(d));
  }
  SamplerOptions so;
  so.draws_per_radius = 5000;
  const auto sel = select_theta(sys, samples, 4, StateSampler(so));

  SimState s;
  s.fields.assign(2, ScalarField(g.size()));
  for (std::size_t c = 0; c < g.size(); ++c) {
    const double x = g.center(0, c);
    s.fields[0][c] = 1.0 + 0.5 * std::cos(std::acos(-1.0) * x);
    s.fields[1][c] = x > 0.5 ? 1.5 : 0.5;
  }
  SolverConfig cfg;
  cfg.dt = 0.01;
  cfg.t_end = 40.0;
  cfg.output_interval = 0.1;
  const auto traj = tracked_run(s, cfg, problem);
  const auto trace = energy_trace(traj, {EnergySpec(4, sel.theta)});
  const auto& series = trace.series.front();
  const double sup = *std::max_element(series.values.begin(), series.values.end());
  const double cap = std::max(series.values.front(), series.fit.plateau) * (1.0 + 1e-6);
  const auto ws = windowed_sup(traj, 2.0);
  const bool pass = series.fit.fitted && sup <= cap && ws.no_growth(0.05);
  std::string th;
  for (double t : sel.theta.entries()) th += (th.empty() ? "" : ",") + fmt(t);
  return {pass, "theta=(" + th + ") sup L4 " + fmt(sup) + " <= " + fmt(cap) + ", windowed sup " +
                    fmt(ws.combined().front()) + " -> " + fmt(ws.combined().back()) + " over " +
                    std::to_string(ws.starts.size()) + " windows (tol 0.05)"};
}

// 10 ------------------------------------------------------------------------
Outcome sirb_desk_run() {
  const auto sc = desk_scenario(64, 200.0);
  const auto sys = build_epi_system(sc.params);
  const auto traj = tracked_run(sc.initial, sc.solver, sys.problem(sc.params.grid));
  const auto rep = decay_report(traj, sc.params, {1.0});

  double worst_cons = 0.0;
  for (double r : rep.conservation) worst_cons = std::max(worst_cons, std::abs(r));
  const double cons_rel = worst_cons / rep.initial_mass;

  double worst_frac = 0.0;
  for (const auto& d : rep.decay) worst_frac = std::max(worst_frac, d.final_fraction.front());

  const double s_final = integrate(traj.back().fields[kS], traj.grid);
  const double s_rel = std::abs(s_final - rep.s_inf.estimate) / rep.s_inf.estimate;

  const bool pass = cons_rel <= 1e-6 && worst_frac <= 0.01 && s_rel <= 1e-2;
  return {pass, "(a) conservation " + fmt(cons_rel) + " x initial mass (tol 1e-6); (b) worst final/peak L1 of i,r,b " +
                    fmt(worst_frac) + " (tol 1e-2); (c) |int s(T) - s_inf| / s_inf " + fmt(s_rel) + " (tol 1e-2)"};
}

// 11 ------------------------------------------------------------------------
Outcome epsilon_robustness() {
  const auto sc = desk_scenario(64, 200.0);
  const auto sys = build_epi_system(sc.params);
  const auto problem = sys.problem(sc.params.grid);
  std::vector<Trajectory> runs;
  const std::vector<double> eps{1e-2, 1e-3, 1e-4};
  for (double e : eps) {
    SimState s = sc.initial;
    s.epsilon = TruncationParam(e);
    runs.push_back(tracked_run(s, sc.solver, problem));
  }
  const double d01 = l2_spacetime_distance(runs[0], runs[1]);
  const double d12 = l2_spacetime_distance(runs[1], runs[2]);
  const bool pass = d12 < d01 && d12 <= 0.2 * d01;
  return {pass, "d(1e-2,1e-3) " + fmt(d01) + ", d(1e-3,1e-4) " + fmt(d12) + ", ratio " + fmt(d12 / d01) +
                    " (need < 1 and <= 0.2)"};
}

// 12 ------------------------------------------------------------------------
Outcome heat_convergence() {
  const double pi = std::acos(-1.0);
  const double T = 0.1;
  std::vector<double> errors;
  for (std::size_t n : {16, 32, 64}) {
    const auto g = StructuredGrid::uniform_1d(n);
    const TransportProblem problem{g, CoefficientSchedule(CoefficientField::constant(g, 1, 1.0)),
                                   BoundarySpec(1, BoundaryCondition::dirichlet()), builtin_zero(1)};
    SimState s;
    s.fields.assign(1, ScalarField(n));
    for (std::size_t c = 0; c < n; ++c) s.fields[0][c] = std::sin(pi * g.center(0, c));
    const double h = 1.0 / static_cast<double>(n);
    SolverConfig cfg;
    cfg.dt = 0.25 * h * h;
    cfg.t_end = T;
    const auto traj = tracked_run(s, cfg, problem);
    ScalarField err(n);
    for (std::size_t c = 0; c < n; ++c) {
      err[c] = traj.back().fields[0][c] - std::sin(pi * g.center(0, c)) * std::exp(-pi * pi * T);
    }
    errors.push_back(discrete_norm(err, g, 2.0));
  }
  const double o1 = std::log2(errors[0] / errors[1]);
  const double o2 = std::log2(errors[1] / errors[2]);
  const bool pass = o1 >= 1.8 && o2 >= 1.8;
  return {pass, "L2 errors " + fmt(errors[0]) + ", " + fmt(errors[1]) + ", " + fmt(errors[2]) + "; observed orders " +
                    fmt(o1) + ", " + fmt(o2) + " (need >= 1.8)"};
}

// 8 -------------------------------------------------------------------------
Outcome positivity() {
  const bool pass = g_global_min >= -1e-12;
  return {pass, "min over " + std::to_string(g_runs) + " runs " + fmt(g_global_min) + " (tol -1e-12); step halvings " +
                    std::to_string(g_halvings) + ", clamping never applied"};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> body;
  };
  // Criterion 8 aggregates the runs of all others, so it reports last.
  const std::vector<Criterion> criteria{
      {1, "multinomial reduction", multinomial_reduction},
      {2, "energy time-derivative identity", derivative_identity},
      {3, "energy gradient identity", gradient_identity},
      {4, "positive-definiteness gate", pd_gate},
      {5, "truncation bound", truncation_bound},
      {6, "interface exactness", interface_exactness},
      {7, "discrete mass budget", mass_budget_closure},
      {9, "L4 energy boundedness", energy_boundedness},
      {10, "SIR-B desk run", sirb_desk_run},
      {11, "epsilon robustness", epsilon_robustness},
      {12, "heat convergence order", heat_convergence},
      {8, "positivity", positivity},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.body();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failures;
    std::printf("%s criterion %d (%s): %s [%.2fs]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
