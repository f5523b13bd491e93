#pragma once

// IMEX time stepping of the truncated system: backward Euler on transport,
// explicit truncated reaction evaluated at the old state, and step halving
// whenever the new state leaves the non-negative orthant.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rdsim/assembly.hpp"
#include "rdsim/error.hpp"
#include "rdsim/grid.hpp"
#include "rdsim/linear_solve.hpp"
#include "rdsim/reaction.hpp"
#include "rdsim/sparse.hpp"

namespace rdsim {

struct SimState {
  double t = 0.0;
  std::vector<ScalarField> fields;
  TruncationParam epsilon{1e-8};

  std::size_t species() const noexcept { return fields.size(); }

  double min_value() const {
    double lo = std::numeric_limits<double>::infinity();
    for (const auto& f : fields)
      for (double v : f) lo = std::min(lo, v);
    return lo;
  }
};

struct SolverConfig {
  double dt = 1e-3;
  double t_end = 1.0;
  double linear_tolerance = 1e-10;
  int max_linear_iterations = 2000;
  double positivity_tolerance = 1e-12;
  int max_halvings = 20;
  /// Record spacing in time; <= 0 records every step.
  double output_interval = 0.0;

  void validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("SolverConfig: dt must be > 0");
    if (!(t_end >= 0.0) || !std::isfinite(t_end)) throw InvalidArgument("SolverConfig: t_end must be >= 0");
    if (!(linear_tolerance > 0.0)) throw InvalidArgument("SolverConfig: linear tolerance must be > 0");
    if (!(positivity_tolerance > 0.0)) throw InvalidArgument("SolverConfig: positivity tolerance must be > 0");
    if (max_linear_iterations < 1) throw InvalidArgument("SolverConfig: max linear iterations must be >= 1");
    if (max_halvings < 0) throw InvalidArgument("SolverConfig: max halvings must be >= 0");
  }
};

struct StepReport {
  double t = 0.0;
  double dt = 0.0;
  int linear_iterations = 0;
  int halvings = 0;
  double min_value = 0.0;
  /// max over cells of |F_k^eps| at the old state.
  std::vector<double> reaction_magnitude;
  /// Spatial integral of F_k^eps at the old state.
  std::vector<double> reaction_integral;
};

/// Everything that defines the transport-reaction problem apart from the
/// initial state and the step controls.
struct TransportProblem {
  StructuredGrid grid;
  CoefficientSchedule coefficients;
  BoundarySpec boundary;
  ReactionSystem system;

  void validate() const {
    const std::size_t m = system.species();
    coefficients.validate(grid, m);
    if (boundary.species() != m) throw InvalidArgument("TransportProblem: boundary spec species mismatch");
  }
};

/// Assembled per-species transport operators, cached per coefficient
/// schedule entry and per step size.
class TransportOperators {
 public:
  explicit TransportOperators(const TransportProblem& problem) : problem_(&problem) {}

  /// Diffusion plus advection for the coefficients active at time t.
  const std::vector<SparseOperator>& transport(double t) {
    const std::size_t idx = problem_->coefficients.active_index(t);
    if (!transport_ || transport_index_ != idx) {
      const auto& coeff = problem_->coefficients.entries()[idx].second;
      std::vector<SparseOperator> ops;
      for (std::size_t k = 0; k < problem_->system.species(); ++k) {
        ops.push_back(assemble_diffusion(problem_->grid, coeff, problem_->boundary, k) +
                      assemble_advection(problem_->grid, coeff, problem_->boundary, k));
      }
      transport_ = std::move(ops);
      transport_index_ = idx;
      implicit_.reset();
    }
    return *transport_;
  }

  /// I/dt + transport(t).
  const std::vector<SparseOperator>& implicit(double t, double dt) {
    const auto& ops = transport(t);
    if (!implicit_ || implicit_dt_ != dt) {
      std::vector<SparseOperator> m;
      for (const auto& A : ops) m.push_back(A.shifted(1.0 / dt));
      implicit_ = std::move(m);
      implicit_dt_ = dt;
    }
    return *implicit_;
  }

 private:
  const TransportProblem* problem_;
  std::optional<std::vector<SparseOperator>> transport_;
  std::size_t transport_index_ = 0;
  std::optional<std::vector<SparseOperator>> implicit_;
  double implicit_dt_ = 0.0;
};

/// Truncated reaction F^eps(u) per species and cell.
inline std::vector<ScalarField> truncated_reaction(const TransportProblem& problem, const SimState& state) {
  const std::size_t m = problem.system.species();
  const std::size_t n = problem.grid.size();
  std::vector<ScalarField> out(m, ScalarField(n, 0.0));
  std::vector<double> u(m), f(m);
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t k = 0; k < m; ++k) u[k] = state.fields[k][c];
    const ReactionPoint at{problem.grid.cell_center(c), state.t, static_cast<std::ptrdiff_t>(c)};
    problem.system.evaluate(at, u, f);
    truncate_in_place(f, state.epsilon);
    for (std::size_t k = 0; k < m; ++k) out[k][c] = f[k];
  }
  return out;
}

namespace detail {

inline void check_state(const TransportProblem& problem, const SimState& state) {
  if (state.fields.size() != problem.system.species()) {
    throw InvalidArgument("SimState: expected " + std::to_string(problem.system.species()) + " species");
  }
  for (const auto& f : state.fields) problem.grid.check_field(f, "SimState");
}

}  // namespace detail

/// Advances by at most `dt`. The accepted step is dt / 2^halvings.
inline std::pair<SimState, StepReport> step(const SimState& state, const SolverConfig& cfg,
                                            TransportOperators& operators, const TransportProblem& problem,
                                            double dt) {
  detail::check_state(problem, state);
  const std::size_t m = problem.system.species();
  const std::size_t n = problem.grid.size();
  const auto reaction = truncated_reaction(problem, state);

  StepReport report;
  report.t = state.t;
  report.reaction_magnitude.assign(m, 0.0);
  report.reaction_integral.assign(m, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    for (double v : reaction[k]) report.reaction_magnitude[k] = std::max(report.reaction_magnitude[k], std::abs(v));
    report.reaction_integral[k] = integrate(reaction[k], problem.grid);
  }

  LinearSolveOptions lopt{cfg.linear_tolerance, cfg.max_linear_iterations, true};
  double trial = dt;
  for (int h = 0; h <= cfg.max_halvings; ++h) {
    const auto& ops = operators.implicit(state.t, trial);
    SimState next{state.t + trial, std::vector<ScalarField>(m), state.epsilon};
    int iterations = 0;
    std::vector<double> rhs(n);
    for (std::size_t k = 0; k < m; ++k) {
      for (std::size_t c = 0; c < n; ++c) rhs[c] = state.fields[k][c] / trial + reaction[k][c];
      auto solved = linear_solve(ops[k], rhs, lopt, state.fields[k]);
      iterations += solved.iterations;
      next.fields[k] = std::move(solved.x);
    }
    const double lo = next.min_value();
    if (lo >= -cfg.positivity_tolerance) {
      report.dt = trial;
      report.halvings = h;
      report.linear_iterations = iterations;
      report.min_value = lo;
      return {std::move(next), std::move(report)};
    }
    trial *= 0.5;
  }
  throw SolverError("step at t=" + std::to_string(state.t) + ": state stays negative after " +
                    std::to_string(cfg.max_halvings) + " step halvings");
}

struct TrajectoryRecord {
  double t = 0.0;
  std::vector<ScalarField> fields;
  /// Cumulative integral over [t0, t] of the spatial integral of u_k,
  /// accumulated step by step with the state at the start of each step.
  std::vector<double> time_integral;
  /// Cumulative integral over [t0, t] of the spatial integral of F_k^eps,
  /// accumulated the same way; together with time_integral these close the
  /// discrete mass budget exactly.
  std::vector<double> reaction_integral;
};

struct Trajectory {
  StructuredGrid grid;
  std::vector<TrajectoryRecord> records;
  std::vector<StepReport> steps;
  double min_value = std::numeric_limits<double>::infinity();
  int total_halvings = 0;
  std::string config_echo;

  std::size_t species() const { return records.empty() ? 0 : records.front().fields.size(); }
  const TrajectoryRecord& front() const { return records.front(); }
  const TrajectoryRecord& back() const { return records.back(); }

  void validate() const {
    for (std::size_t k = 1; k < records.size(); ++k) {
      if (!(records[k].t > records[k - 1].t)) throw InvalidArgument("Trajectory: record times must increase strictly");
    }
  }
};

/// Runs from `initial` to cfg.t_end. Steps are shortened to land exactly on
/// record times and coefficient switch times.
inline Trajectory run(const SimState& initial, const SolverConfig& cfg, const TransportProblem& problem) {
  cfg.validate();
  problem.validate();
  detail::check_state(problem, initial);
  if (initial.min_value() < 0.0) throw InvalidArgument("run: initial data must be non-negative");

  const std::size_t m = problem.system.species();
  TransportOperators operators(problem);
  Trajectory traj;
  traj.grid = problem.grid;
  traj.min_value = initial.min_value();

  std::vector<double> time_integral(m, 0.0);
  std::vector<double> reaction_integral(m, 0.0);
  traj.records.push_back({initial.t, initial.fields, time_integral, reaction_integral});

  const double t0 = initial.t;
  const double t_end = t0 + cfg.t_end;
  const double time_eps = 1e-12 * std::max(1.0, std::abs(t_end));
  std::size_t next_record = 1;
  auto record_time = [&](std::size_t k) {
    return cfg.output_interval > 0.0 ? std::min(t0 + static_cast<double>(k) * cfg.output_interval, t_end) : t_end;
  };

  SimState state = initial;
  while (state.t < t_end - time_eps) {
    double target = std::min({state.t + cfg.dt, t_end, problem.coefficients.next_switch(state.t)});
    bool hit_record = false;
    if (cfg.output_interval > 0.0 && record_time(next_record) <= target + time_eps) {
      target = record_time(next_record);
      hit_record = true;
    }
    auto [next, report] = step(state, cfg, operators, problem, target - state.t);
    const bool full = report.halvings == 0;
    // Snap to the target to keep record times exact.
    if (full) next.t = target;
    for (std::size_t k = 0; k < m; ++k) {
      time_integral[k] += report.dt * integrate(state.fields[k], problem.grid);
      reaction_integral[k] += report.dt * report.reaction_integral[k];
    }
    traj.min_value = std::min(traj.min_value, report.min_value);
    traj.total_halvings += report.halvings;
    traj.steps.push_back(std::move(report));
    state = std::move(next);

    const bool at_end = state.t >= t_end - time_eps;
    if ((full && hit_record) || cfg.output_interval <= 0.0 || at_end) {
      if (at_end) state.t = t_end;
      if (traj.records.back().t < state.t) traj.records.push_back({state.t, state.fields, time_integral, reaction_integral});
      if (full && hit_record) ++next_record;
    }
  }
  return traj;
}

struct EpsilonStudy {
  std::vector<double> epsilons;
  /// L2(Q_T) distance between the runs for epsilons[k] and epsilons[k + 1].
  std::vector<double> distances;
  std::vector<Trajectory> trajectories;

  bool monotone_shrinking() const {
    for (std::size_t k = 1; k < distances.size(); ++k) {
      if (!(distances[k] < distances[k - 1])) return false;
    }
    return true;
  }
};

/// sqrt(int_0^T sum_k ||u_k - v_k||_2^2 dt) with the trapezoid rule over
/// records; both trajectories must share record times.
inline double l2_spacetime_distance(const Trajectory& a, const Trajectory& b) {
  if (a.records.size() != b.records.size()) throw InvalidArgument("l2_spacetime_distance: record counts differ");
  std::vector<double> sq(a.records.size(), 0.0);
  for (std::size_t r = 0; r < a.records.size(); ++r) {
    if (std::abs(a.records[r].t - b.records[r].t) > 1e-9 * std::max(1.0, std::abs(a.records[r].t))) {
      throw InvalidArgument("l2_spacetime_distance: record times differ");
    }
    for (std::size_t k = 0; k < a.records[r].fields.size(); ++k) {
      const auto& u = a.records[r].fields[k];
      const auto& v = b.records[r].fields[k];
      for (std::size_t c = 0; c < u.size(); ++c) sq[r] += (u[c] - v[c]) * (u[c] - v[c]) * a.grid.volume(c);
    }
  }
  double acc = 0.0;
  for (std::size_t r = 1; r < sq.size(); ++r) acc += 0.5 * (sq[r] + sq[r - 1]) * (a.records[r].t - a.records[r - 1].t);
  return std::sqrt(acc);
}

/// Runs the same problem for every epsilon and reports distances between
/// consecutive runs.
inline EpsilonStudy epsilon_refinement_study(const TransportProblem& problem, const SimState& initial,
                                             const SolverConfig& cfg, const std::vector<double>& eps_list,
                                             bool keep_trajectories = false) {
  EpsilonStudy study;
  study.epsilons = eps_list;
  std::optional<Trajectory> previous;
  for (double eps : eps_list) {
    SimState s = initial;
    s.epsilon = TruncationParam(eps);
    Trajectory traj = run(s, cfg, problem);
    if (previous) study.distances.push_back(l2_spacetime_distance(*previous, traj));
    if (keep_trajectories) study.trajectories.push_back(traj);
    previous = std::move(traj);
  }
  return study;
}

}  // namespace rdsim
