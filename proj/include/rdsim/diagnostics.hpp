#pragma once

// Post-processing of trajectories: norm series, L_p energies with a fitted
// dissipation envelope, windowed sup norms, mass budgets and the a priori
// norm monitor.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "rdsim/assembly.hpp"
#include "rdsim/error.hpp"
#include "rdsim/integrator.hpp"
#include "rdsim/multinomial.hpp"
#include "rdsim/reaction.hpp"

namespace rdsim {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Norm series

struct NormSeries {
  std::vector<double> times;
  /// Exponents; the last is always +inf.
  std::vector<double> p;
  /// values[species][p index][record]
  std::vector<std::vector<std::vector<double>>> values;

  const std::vector<double>& series(std::size_t species, double exponent) const {
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (p[j] == exponent) return values.at(species)[j];
    }
    throw InvalidArgument("NormSeries: exponent not computed");
  }
};

inline NormSeries norm_series(const Trajectory& traj, std::vector<double> p_list) {
  p_list.erase(std::remove_if(p_list.begin(), p_list.end(), [](double p) { return std::isinf(p); }), p_list.end());
  p_list.push_back(kInfinity);
  NormSeries out;
  out.p = p_list;
  const std::size_t m = traj.species();
  out.values.assign(m, std::vector<std::vector<double>>(p_list.size()));
  for (const auto& rec : traj.records) {
    out.times.push_back(rec.t);
    for (std::size_t k = 0; k < m; ++k) {
      for (std::size_t j = 0; j < p_list.size(); ++j) {
        out.values[k][j].push_back(discrete_norm(rec.fields[k], traj.grid, p_list[j]));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Energy

/// L_p[u] = sum_cells vol * H_p(u_cell). Values within the positivity
/// tolerance below zero are read as zero.
inline double energy_functional(const std::vector<ScalarField>& fields, const StructuredGrid& grid,
                                const EnergySpec& spec) {
  const std::size_t m = fields.size();
  std::vector<double> u(m);
  double acc = 0.0;
  for (std::size_t c = 0; c < grid.size(); ++c) {
    for (std::size_t k = 0; k < m; ++k) u[k] = std::max(fields[k][c], 0.0);
    acc += grid.volume(c) * energy_density(u, spec);
  }
  return acc;
}

struct EnvelopeFit {
  bool fitted = false;
  double delta = 0.0;
  double C = 0.0;
  /// C / delta, the level the envelope relaxes to.
  double plateau = 0.0;
};

/// Smallest (C, delta) envelope: for each delta on a log grid the least C
/// with L_{k+1} <= L_k e^{-delta dt} + C (1 - e^{-delta dt}) / delta on
/// every recorded pair, then the delta with the lowest plateau C / delta
/// (ties to the larger delta).
inline EnvelopeFit fit_envelope(const std::vector<double>& times, const std::vector<double>& values,
                                double delta_min = 1e-3, double delta_max = 1e2, int grid_points = 301) {
  EnvelopeFit best;
  if (values.size() < 2) return best;
  for (double v : values) {
    if (!std::isfinite(v)) return best;
  }
  double best_plateau = kInfinity;
  for (int g = 0; g < grid_points; ++g) {
    const double delta =
        delta_min * std::pow(delta_max / delta_min, static_cast<double>(g) / static_cast<double>(grid_points - 1));
    double C = 0.0;
    for (std::size_t k = 0; k + 1 < values.size(); ++k) {
      const double e = std::exp(-delta * (times[k + 1] - times[k]));
      const double need = delta * (values[k + 1] - values[k] * e) / (1.0 - e);
      C = std::max(C, need);
    }
    const double plateau = C / delta;
    if (std::isfinite(plateau) && plateau <= best_plateau * (1.0 + 1e-12)) {
      best_plateau = plateau;
      best = {true, delta, C, plateau};
    }
  }
  return best;
}

struct EnergySeries {
  int p = 0;
  std::vector<double> theta;
  std::vector<double> values;
  EnvelopeFit fit;
  /// Envelope fitted on the first half of the records bounds the second half.
  bool bounded = false;
};

struct EnergyTrace {
  std::vector<double> times;
  std::vector<EnergySeries> series;
};

inline EnergyTrace energy_trace(const Trajectory& traj, const std::vector<EnergySpec>& specs,
                                double bounded_tol = 1e-6) {
  EnergyTrace out;
  for (const auto& rec : traj.records) out.times.push_back(rec.t);
  for (const auto& spec : specs) {
    EnergySeries s;
    s.p = spec.p();
    s.theta.assign(spec.theta().entries().begin(), spec.theta().entries().end());
    for (const auto& rec : traj.records) s.values.push_back(energy_functional(rec.fields, traj.grid, spec));
    s.fit = fit_envelope(out.times, s.values);

    const std::size_t half = std::max<std::size_t>(2, (s.values.size() + 1) / 2);
    if (s.values.size() >= 2) {
      const std::vector<double> t1(out.times.begin(), out.times.begin() + std::min(half, out.times.size()));
      const std::vector<double> v1(s.values.begin(), s.values.begin() + std::min(half, s.values.size()));
      const EnvelopeFit early = fit_envelope(t1, v1);
      if (early.fitted) {
        const double cap = std::max(s.values.front(), early.plateau) * (1.0 + bounded_tol);
        s.bounded = std::all_of(s.values.begin(), s.values.end(), [cap](double v) { return v <= cap; });
      }
    }
    out.series.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Windowed sup norms

struct WindowedSup {
  double window = 2.0;
  std::vector<double> starts;
  /// values[species][window index]
  std::vector<std::vector<double>> values;

  /// max over species of the per-window values.
  std::vector<double> combined() const {
    std::vector<double> out(starts.size(), 0.0);
    for (const auto& s : values)
      for (std::size_t k = 0; k < s.size(); ++k) out[k] = std::max(out[k], s[k]);
    return out;
  }

  /// last <= max(first three) * (1 + tol), per species.
  bool no_growth(double tol = 0.05) const {
    for (const auto& s : values) {
      if (s.empty()) return false;
      const std::size_t head = std::min<std::size_t>(3, s.size());
      const double ref = *std::max_element(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(head));
      if (!(s.back() <= ref * (1.0 + tol))) return false;
    }
    return true;
  }
};

/// For each integer tau with (tau, tau + window] inside the recorded span,
/// the largest recorded sup norm per species.
inline WindowedSup windowed_sup(const Trajectory& traj, double window = 2.0) {
  if (!(window > 0.0)) throw InvalidArgument("windowed_sup: window must be > 0");
  if (traj.records.size() < 2) throw InvalidArgument("windowed_sup: trajectory has fewer than two records");
  const double t0 = traj.front().t;
  const double t1 = traj.back().t;
  const double eps = 1e-9 * std::max(1.0, std::abs(t1));
  if (t1 - t0 < window - eps) throw InvalidArgument("windowed_sup: trajectory shorter than one window");

  const std::size_t m = traj.species();
  WindowedSup out;
  out.window = window;
  out.values.assign(m, {});
  for (double tau = std::floor(t0 + eps); tau + window <= t1 + eps; tau += 1.0) {
    std::vector<double> sup(m, -kInfinity);
    bool any = false;
    for (const auto& rec : traj.records) {
      if (rec.t > tau + eps && rec.t <= tau + window + eps) {
        any = true;
        for (std::size_t k = 0; k < m; ++k) sup[k] = std::max(sup[k], discrete_norm(rec.fields[k], traj.grid, kInfinity));
      }
    }
    if (!any) continue;
    out.starts.push_back(tau);
    for (std::size_t k = 0; k < m; ++k) out.values[k].push_back(sup[k]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mass budgets

enum class Quadrature {
  /// Step-by-step integrals accumulated by the integrator (exact for the
  /// discrete scheme).
  StepExact,
  /// Trapezoid rule over the recorded states.
  Trapezoid,
};

/// Budget sum_k w_k int u_k(t) - sum_k w_k int u_k(0)
///        - int_0^t (sum_k s_k int u_k + s0 |Omega|).
struct BudgetSpec {
  std::vector<double> weights;
  std::vector<double> source_weights;
  double constant_source = 0.0;
  Quadrature quadrature = Quadrature::StepExact;
};

/// int_0^{t_r} int u_k for every record r.
inline std::vector<double> cumulative_time_integral(const Trajectory& traj, std::size_t k, Quadrature q) {
  std::vector<double> out(traj.records.size(), 0.0);
  if (q == Quadrature::StepExact) {
    const double base = traj.front().time_integral.at(k);
    for (std::size_t r = 0; r < out.size(); ++r) out[r] = traj.records[r].time_integral.at(k) - base;
    return out;
  }
  double prev = integrate(traj.front().fields[k], traj.grid);
  for (std::size_t r = 1; r < out.size(); ++r) {
    const double cur = integrate(traj.records[r].fields[k], traj.grid);
    out[r] = out[r - 1] + 0.5 * (prev + cur) * (traj.records[r].t - traj.records[r - 1].t);
    prev = cur;
  }
  return out;
}

inline std::vector<double> budget_residual(const Trajectory& traj, const BudgetSpec& spec) {
  const std::size_t m = traj.species();
  if (spec.weights.size() != m || spec.source_weights.size() != m) {
    throw InvalidArgument("budget_residual: weight vectors must have one entry per species");
  }
  const double measure = traj.grid.measure();
  std::vector<double> out(traj.records.size(), 0.0);
  std::vector<double> initial(m);
  for (std::size_t k = 0; k < m; ++k) initial[k] = integrate(traj.front().fields[k], traj.grid);
  std::vector<std::vector<double>> integrals(m);
  for (std::size_t k = 0; k < m; ++k) {
    if (spec.source_weights[k] != 0.0) integrals[k] = cumulative_time_integral(traj, k, spec.quadrature);
  }
  for (std::size_t r = 0; r < traj.records.size(); ++r) {
    const auto& rec = traj.records[r];
    double res = -spec.constant_source * measure * (rec.t - traj.front().t);
    for (std::size_t k = 0; k < m; ++k) {
      res += spec.weights[k] * (integrate(rec.fields[k], traj.grid) - initial[k]);
      if (spec.source_weights[k] != 0.0) res -= spec.source_weights[k] * integrals[k][r];
    }
    out[r] = res;
  }
  return out;
}

/// sum c_i int u_i(t) - sum c_i int u_i(0) - int_0^t (K1 sum int u_i + K2 |Omega|).
/// Non-positive up to solver tolerance whenever the mass-control bound holds
/// and no mass enters through the boundary.
inline std::vector<double> mass_budget(const Trajectory& traj, const ReactionSystem& system,
                                       Quadrature quadrature = Quadrature::StepExact) {
  const auto& s = system.structure();
  BudgetSpec spec{s.mass_weights, std::vector<double>(system.species(), s.K1), s.K2, quadrature};
  return budget_residual(traj, spec);
}

/// sum c_i (int u_i(t) - int u_i(0)) - sum c_i int_0^t int F_i^eps: what the
/// transport alone moved across the boundary (zero for closed boxes).
inline std::vector<double> transport_residual(const Trajectory& traj, const std::vector<double>& weights) {
  const std::size_t m = traj.species();
  if (weights.size() != m) throw InvalidArgument("transport_residual: weights length mismatch");
  std::vector<double> out;
  for (const auto& rec : traj.records) {
    double res = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      res += weights[k] * (integrate(rec.fields[k], traj.grid) - integrate(traj.front().fields[k], traj.grid) -
                           (rec.reaction_integral[k] - traj.front().reaction_integral[k]));
    }
    out.push_back(res);
  }
  return out;
}

// ---------------------------------------------------------------------------
// A priori norm monitor

enum class AprioriMode { La, Lb };

inline constexpr double kSupExponentCap = 8.0;

struct AprioriReport {
  AprioriMode mode = AprioriMode::La;
  /// Exponent actually used (an infinite request is capped).
  double exponent = 1.0;
  int dim = 1;
  std::vector<double> species_norm;
  double max_norm = 0.0;
  /// Largest admissible intermediate-sum order for this exponent.
  double r_threshold = 0.0;
};

/// La: sup_t ||u_i(t)||_{L^a}, threshold 1 + 2a/n.
/// Lb: (int_0^T ||u_i||_{L^b}^b dt)^{1/b}, threshold 1 + 2b/(n+2).
inline AprioriReport apriori_hypothesis_monitor(const Trajectory& traj, AprioriMode mode, double exponent) {
  if (!(exponent >= 1.0)) throw InvalidArgument("apriori_hypothesis_monitor: exponent must be >= 1");
  AprioriReport rep;
  rep.mode = mode;
  rep.exponent = std::isinf(exponent) ? kSupExponentCap : exponent;
  rep.dim = traj.grid.dim();
  const double a = rep.exponent;
  const double n = static_cast<double>(rep.dim);
  rep.r_threshold = mode == AprioriMode::La ? 1.0 + 2.0 * a / n : 1.0 + 2.0 * a / (n + 2.0);

  const std::size_t m = traj.species();
  rep.species_norm.assign(m, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    if (mode == AprioriMode::La) {
      for (const auto& rec : traj.records) {
        rep.species_norm[k] = std::max(rep.species_norm[k], discrete_norm(rec.fields[k], traj.grid, a));
      }
    } else {
      double acc = 0.0;
      double prev = std::pow(discrete_norm(traj.front().fields[k], traj.grid, a), a);
      for (std::size_t r = 1; r < traj.records.size(); ++r) {
        const double cur = std::pow(discrete_norm(traj.records[r].fields[k], traj.grid, a), a);
        acc += 0.5 * (prev + cur) * (traj.records[r].t - traj.records[r - 1].t);
        prev = cur;
      }
      rep.species_norm[k] = std::pow(acc, 1.0 / a);
    }
    rep.max_norm = std::max(rep.max_norm, rep.species_norm[k]);
  }
  return rep;
}

}  // namespace rdsim
