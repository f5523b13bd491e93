#pragma once

// Host-pathogen SIR-B model: susceptible s, infected i, recovered r and an
// environmental pathogen density b that diffuses and drifts with velocity c.
// Parameter validation, system construction, the conservation law for
// s + i + r and the asymptotic susceptible mass.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "rdsim/assembly.hpp"
#include "rdsim/diagnostics.hpp"
#include "rdsim/error.hpp"
#include "rdsim/grid.hpp"
#include "rdsim/integrator.hpp"
#include "rdsim/reaction.hpp"

namespace rdsim {

enum EpiSpecies : std::size_t { kS = 0, kI = 1, kR = 2, kB = 3 };

inline constexpr std::array<const char*, 4> kEpiSpeciesNames{"s", "i", "r", "b"};

using CellVectors = std::vector<std::array<double, 2>>;

struct EpiParams {
  StructuredGrid grid;
  /// Per-cell diagonal diffusion tensors for s, i, r, b.
  std::array<CellVectors, 4> diffusion;
  /// Pathogen drift velocity: (start time, per-cell vector) pairs.
  std::vector<std::pair<double, CellVectors>> drift;
  std::vector<double> sigma_I;
  std::vector<double> sigma_B;
  std::vector<double> phi;
  double gamma = 0.1;
  double lambda = 0.2;
  double alpha = 0.3;
  double delta = 0.5;
  /// Declared bounds checked by validate_params: d_* for diffusion, c* for
  /// drift, [sigma_*, sigma^*] for the infection rates.
  double diffusion_lower = 0.0;
  double drift_upper = std::numeric_limits<double>::infinity();
  double sigma_lower = 0.0;
  double sigma_upper = std::numeric_limits<double>::infinity();

  /// Spatially uniform parameters on `grid`.
  static EpiParams uniform(const StructuredGrid& grid, std::array<double, 4> d, std::array<double, 2> c, double sigma_i,
                           double sigma_b, double phi) {
    EpiParams p;
    p.grid = grid;
    const std::size_t n = grid.size();
    for (std::size_t k = 0; k < 4; ++k) p.diffusion[k].assign(n, {d[k], d[k]});
    p.drift.push_back({0.0, CellVectors(n, c)});
    p.sigma_I.assign(n, sigma_i);
    p.sigma_B.assign(n, sigma_b);
    p.phi.assign(n, phi);
    return p;
  }
};

struct AssumptionViolation {
  std::string assumption;
  std::ptrdiff_t cell = -1;
  std::string detail;
};

struct EpiValidation {
  std::vector<AssumptionViolation> violations;

  bool ok() const noexcept { return violations.empty(); }
  bool violates(const std::string& assumption) const {
    return std::any_of(violations.begin(), violations.end(),
                       [&](const AssumptionViolation& v) { return v.assumption == assumption; });
  }
};

/// Checks (D) uniform diffusion floor, (C) bounded drift, (sigma) bounded
/// positive infection rates and (cond_phi) 0 <= phi <= alpha, cell by cell.
inline EpiValidation validate_params(const EpiParams& p) {
  EpiValidation out;
  const std::size_t n = p.grid.size();
  auto add = [&](const char* a, std::ptrdiff_t cell, std::string detail) {
    out.violations.push_back({a, cell, std::move(detail)});
  };
  auto sized = [&](std::size_t got, const char* what) {
    if (got != n) throw InvalidArgument(std::string("EpiParams: ") + what + " must have one entry per cell");
  };
  for (const auto& d : p.diffusion) sized(d.size(), "diffusion");
  sized(p.sigma_I.size(), "sigma_I");
  sized(p.sigma_B.size(), "sigma_B");
  sized(p.phi.size(), "phi");
  if (p.drift.empty()) throw InvalidArgument("EpiParams: drift schedule is empty");
  for (const auto& [start, c] : p.drift) sized(c.size(), "drift");

  for (double v : {p.gamma, p.lambda, p.alpha, p.delta}) {
    if (!(v > 0.0) || !std::isfinite(v)) throw InvalidArgument("EpiParams: gamma, lambda, alpha, delta must be > 0");
  }

  const int dim = p.grid.dim();
  for (std::size_t c = 0; c < n; ++c) {
    const auto cell = static_cast<std::ptrdiff_t>(c);
    for (std::size_t k = 0; k < 4; ++k) {
      for (int a = 0; a < dim; ++a) {
        const double d = p.diffusion[k][c][a];
        if (!(d > 0.0) || !(d >= p.diffusion_lower) || !std::isfinite(d)) {
          add("D", cell, std::string("diffusivity of ") + kEpiSpeciesNames[k] + " is " + std::to_string(d));
        }
      }
    }
    for (const auto& [start, vel] : p.drift) {
      double n2 = 0.0;
      for (int a = 0; a < dim; ++a) n2 += vel[c][a] * vel[c][a];
      if (!std::isfinite(n2) || !(std::sqrt(n2) < p.drift_upper)) {
        add("C", cell, "drift magnitude " + std::to_string(std::sqrt(n2)) + " at t >= " + std::to_string(start));
      }
    }
    for (double s : {p.sigma_I[c], p.sigma_B[c]}) {
      if (!(s > 0.0) || s < p.sigma_lower || s > p.sigma_upper || !std::isfinite(s)) {
        add("sigma", cell, "infection rate " + std::to_string(s) + " outside bounds");
      }
    }
    if (!(p.phi[c] >= 0.0)) add("cond_phi", cell, "shedding rate " + std::to_string(p.phi[c]) + " is negative");
    if (p.phi[c] > p.alpha) {
      add("cond_phi", cell, "shedding rate " + std::to_string(p.phi[c]) + " exceeds alpha = " + std::to_string(p.alpha));
    }
  }
  return out;
}

/// Throws HypothesisError naming the first violated assumption.
inline void require_valid(const EpiParams& p) {
  const auto v = validate_params(p);
  if (!v.ok()) {
    const auto& first = v.violations.front();
    throw HypothesisError(first.assumption, "cell " + std::to_string(first.cell) + ": " + first.detail + " (" +
                                                std::to_string(v.violations.size()) + " violations)");
  }
}

struct EpiSystem {
  ReactionSystem system;
  BoundarySpec boundary;
  CoefficientSchedule coefficients;

  TransportProblem problem(const StructuredGrid& grid) const { return {grid, coefficients, boundary, system}; }
};

/// Reaction terms (s, i, r, b order):
///   F_s = -sI s i - sB s b + gamma r
///   F_i =  sI s i + sB s b - (lambda + alpha) i
///   F_r =  lambda i - gamma r
///   F_b =  phi i - delta b
/// All sides are no-flux; for b the zero flux is the total flux
/// D_B grad b + c b, i.e. drift -c in the div(B u) convention.
inline EpiSystem build_epi_system(const EpiParams& p) {
  require_valid(p);
  const auto grid = p.grid;
  auto f = [p](const ReactionPoint& at, std::span<const double> u, std::span<double> out) {
    const std::size_t c = at.cell >= 0 ? static_cast<std::size_t>(at.cell) : p.grid.locate(at.x);
    const double s = u[kS], i = u[kI], r = u[kR], b = u[kB];
    const double infection = p.sigma_I[c] * s * i + p.sigma_B[c] * s * b;
    out[kS] = -infection + p.gamma * r;
    out[kI] = infection - (p.lambda + p.alpha) * i;
    out[kR] = p.lambda * i - p.gamma * r;
    out[kB] = p.phi[c] * i - p.delta * b;
  };

  ReactionStructure st = ReactionStructure::defaults(4);
  st.mass_weights = {1.0, 1.0, 1.0, 1.0};
  st.K1 = 0.0;
  st.K2 = 0.0;
  st.sum_matrix = DenseMatrix(4, 4);
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = 0; b <= a; ++b) st.sum_matrix(a, b) = 1.0;
  st.intermediate_order = 1.0;
  st.growth_order = 2.0;
  double smax = 0.0;
  for (std::size_t c = 0; c < grid.size(); ++c) smax = std::max({smax, p.sigma_I[c], p.sigma_B[c]});
  st.growth_constant = std::max({1.0, 2.0 * smax, p.gamma + p.lambda + p.alpha + p.delta});

  EpiSystem out{ReactionSystem("sir-b", 4, f, std::move(st)), BoundarySpec(4, BoundaryCondition::no_flux()), {}};

  const std::size_t n = grid.size();
  for (std::size_t e = 0; e < p.drift.size(); ++e) {
    std::vector<SpeciesCoefficients> species(4);
    for (std::size_t k = 0; k < 4; ++k) {
      species[k].diffusion = p.diffusion[k];
      species[k].drift.assign(n, {0.0, 0.0});
    }
    for (std::size_t c = 0; c < n; ++c) {
      species[kB].drift[c] = {-p.drift[e].second[c][0], -p.drift[e].second[c][1]};
    }
    if (e == 0) {
      out.coefficients = CoefficientSchedule(CoefficientField(std::move(species)));
    } else {
      out.coefficients.add(p.drift[e].first, CoefficientField(std::move(species)));
    }
  }
  return out;
}

/// int (s + i + r)(t) + alpha int_0^t int i - int (s0 + i0 + r0).
inline std::vector<double> conservation_residual(const Trajectory& traj, const EpiParams& p,
                                                 Quadrature quadrature = Quadrature::StepExact) {
  BudgetSpec spec{{1.0, 1.0, 1.0, 0.0}, {0.0, -p.alpha, 0.0, 0.0}, 0.0, quadrature};
  return budget_residual(traj, spec);
}

struct SInfinity {
  double estimate = 0.0;
  /// alpha * int i(T) * tau with tau the fitted decay time of int i.
  double tail_bound = std::numeric_limits<double>::infinity();
  double decay_time = std::numeric_limits<double>::infinity();
  bool decay_fitted = false;
  std::string note;
};

/// Least-squares fit of log y = a - t / tau over the given records; returns
/// tau, or +inf when y does not decay.
inline double fit_decay_time(const std::vector<double>& t, const std::vector<double>& y) {
  double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (!(y[k] > 0.0)) continue;
    const double ly = std::log(y[k]);
    st += t[k];
    sy += ly;
    stt += t[k] * t[k];
    sty += t[k] * ly;
    ++n;
  }
  if (n < 2) return std::numeric_limits<double>::infinity();
  const double dn = static_cast<double>(n);
  const double den = dn * stt - st * st;
  if (den <= 0.0) return std::numeric_limits<double>::infinity();
  const double slope = (dn * sty - st * sy) / den;
  return slope < 0.0 ? -1.0 / slope : std::numeric_limits<double>::infinity();
}

/// s_inf = int (s0 + i0 + r0) - alpha int_0^T int i, with a tail bound from an
/// exponential fit of int i over the last quarter of the records.
inline SInfinity s_infinity(const Trajectory& traj, const EpiParams& p, Quadrature quadrature = Quadrature::StepExact) {
  SInfinity out;
  double initial = 0.0;
  for (std::size_t k : {kS, kI, kR}) initial += integrate(traj.front().fields[k], traj.grid);
  const auto cum_i = cumulative_time_integral(traj, kI, quadrature);
  out.estimate = std::max(0.0, initial - p.alpha * cum_i.back());

  const double final_i = integrate(traj.back().fields[kI], traj.grid);
  if (final_i == 0.0) {
    out.tail_bound = 0.0;
    out.decay_time = 0.0;
    out.decay_fitted = true;
    return out;
  }
  const std::size_t count = traj.records.size();
  const std::size_t start = count - count / 4;
  if (count / 4 < 4) {
    out.note = "trajectory too short for a decay fit";
    return out;
  }
  std::vector<double> t, y;
  for (std::size_t r = start; r < count; ++r) {
    t.push_back(traj.records[r].t);
    y.push_back(integrate(traj.records[r].fields[kI], traj.grid));
  }
  out.decay_time = fit_decay_time(t, y);
  if (std::isfinite(out.decay_time)) {
    out.decay_fitted = true;
    out.tail_bound = p.alpha * final_i * out.decay_time;
  } else {
    out.note = "infected mass is not decaying over the final quarter";
  }
  return out;
}

struct DecaySeries {
  std::string name;
  /// norms[p index][record]
  std::vector<std::vector<double>> norms;
  /// Final value over trajectory maximum, per p.
  std::vector<double> final_fraction;
  /// Non-increasing after the maximum, per p.
  std::vector<bool> monotone_after_peak;
};

struct EpiReport {
  std::vector<double> times;
  std::vector<double> p;
  /// i, r, b
  std::vector<DecaySeries> decay;
  /// ||s - mean(s)||_{L2}
  std::vector<double> s_deviation;
  std::vector<double> conservation;
  SInfinity s_inf;
  double initial_mass = 0.0;

  bool decayed(double fraction = 0.01) const {
    for (const auto& d : decay)
      for (double f : d.final_fraction)
        if (!(f <= fraction)) return false;
    return true;
  }
};

inline EpiReport decay_report(const Trajectory& traj, const EpiParams& params, std::vector<double> p_list = {1.0, 2.0}) {
  if (traj.species() != 4) throw InvalidArgument("decay_report: expected an s, i, r, b trajectory");
  EpiReport rep;
  rep.p = p_list;
  for (const auto& rec : traj.records) rep.times.push_back(rec.t);
  for (std::size_t k : {kI, kR, kB}) {
    DecaySeries d;
    d.name = kEpiSpeciesNames[k];
    for (double p : p_list) {
      std::vector<double> v;
      for (const auto& rec : traj.records) v.push_back(discrete_norm(rec.fields[k], traj.grid, p));
      const auto peak = std::max_element(v.begin(), v.end());
      d.final_fraction.push_back(*peak > 0.0 ? v.back() / *peak : 0.0);
      bool mono = true;
      for (auto it = peak; it + 1 != v.end(); ++it) {
        if (*(it + 1) > *it * (1.0 + 1e-9)) mono = false;
      }
      d.monotone_after_peak.push_back(mono);
      d.norms.push_back(std::move(v));
    }
    rep.decay.push_back(std::move(d));
  }
  const double measure = traj.grid.measure();
  for (const auto& rec : traj.records) {
    const double mean = integrate(rec.fields[kS], traj.grid) / measure;
    ScalarField dev(rec.fields[kS]);
    for (double& v : dev) v -= mean;
    rep.s_deviation.push_back(discrete_norm(dev, traj.grid, 2.0));
  }
  for (std::size_t k : {kS, kI, kR}) rep.initial_mass += integrate(traj.front().fields[k], traj.grid);
  rep.conservation = conservation_residual(traj, params);
  rep.s_inf = s_infinity(traj, params);
  return rep;
}

struct EpiScenario {
  EpiParams params;
  SimState initial;
  SolverConfig solver;
};

/// Desk-scale fixture: 64 cells on [0, 1], diffusivity 1e-2 on the left half
/// and 1e-3 on the right, constant pathogen drift 0.05, a small infected
/// patch on [0.1, 0.3] in a fully susceptible population.
inline EpiScenario desk_scenario(std::size_t cells = 64, double t_end = 200.0, double epsilon = 1e-8) {
  const auto grid = StructuredGrid::uniform_1d(cells);
  EpiScenario sc;
  sc.params = EpiParams::uniform(grid, {1e-2, 1e-2, 1e-2, 1e-2}, {0.05, 0.0}, 1.0, 1.0, 0.25);
  for (auto& d : sc.params.diffusion) {
    for (std::size_t c = 0; c < cells; ++c) {
      if (grid.center(0, c) > 0.5) d[c] = {1e-3, 1e-3};
    }
  }
  sc.initial.t = 0.0;
  sc.initial.epsilon = TruncationParam(epsilon);
  sc.initial.fields.assign(4, ScalarField(cells, 0.0));
  for (std::size_t c = 0; c < cells; ++c) {
    const double x = grid.center(0, c);
    sc.initial.fields[kS][c] = 1.0;
    if (x > 0.1 && x < 0.3) sc.initial.fields[kI][c] = 0.05;
  }
  sc.solver.dt = 0.01;
  sc.solver.t_end = t_end;
  sc.solver.output_interval = 0.5;
  return sc;
}

}  // namespace rdsim
