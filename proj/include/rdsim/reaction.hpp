#pragma once

// Reaction vector fields F(x, t, u), their truncation F^eps, sampled
// checkers for the structural hypotheses (F2)-(F5), and builtin systems.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rdsim/dense.hpp"
#include "rdsim/error.hpp"
#include "rdsim/expression.hpp"

namespace rdsim {

/// Where a reaction is evaluated. `cell` is a hint from the integrator;
/// samplers pass -1.
struct ReactionPoint {
  std::array<double, 2> x{0.0, 0.0};
  double t = 0.0;
  std::ptrdiff_t cell = -1;
};

using ReactionFunction = std::function<void(const ReactionPoint&, std::span<const double> u, std::span<double> f)>;

/// Structural metadata: weights for (F3), the lower-triangular sum matrix
/// and order for (F4), the growth order and constant for (F5).
struct ReactionStructure {
  std::vector<double> mass_weights;
  double K1 = 0.0;
  double K2 = 0.0;
  DenseMatrix sum_matrix;
  double intermediate_order = 1.0;
  double growth_order = 1.0;
  double growth_constant = 1.0;

  static ReactionStructure defaults(std::size_t m) {
    ReactionStructure s;
    s.mass_weights.assign(m, 1.0);
    s.sum_matrix = DenseMatrix::identity(m);
    return s;
  }
};

class ReactionSystem {
 public:
  ReactionSystem(std::string name, std::size_t species, ReactionFunction f, ReactionStructure structure)
      : name_(std::move(name)), species_(species), f_(std::move(f)), structure_(std::move(structure)) {
    validate();
  }

  const std::string& name() const noexcept { return name_; }
  std::size_t species() const noexcept { return species_; }
  const ReactionStructure& structure() const noexcept { return structure_; }

  void evaluate(const ReactionPoint& at, std::span<const double> u, std::span<double> f) const {
    f_(at, u, f);
  }

  std::vector<double> evaluate(const ReactionPoint& at, std::span<const double> u) const {
    std::vector<double> f(species_, 0.0);
    f_(at, u, f);
    return f;
  }

  ReactionSystem with_structure(ReactionStructure s) const { return ReactionSystem(name_, species_, f_, std::move(s)); }

 private:
  void validate() const {
    if (species_ == 0) throw InvalidArgument("ReactionSystem: need at least one species");
    const auto& s = structure_;
    if (s.mass_weights.size() != species_) throw InvalidArgument("ReactionSystem: mass weights length mismatch");
    for (double c : s.mass_weights) {
      if (!(c > 0.0)) throw InvalidArgument("ReactionSystem: mass weights must be > 0");
    }
    if (s.sum_matrix.rows() != species_ || s.sum_matrix.cols() != species_) {
      throw InvalidArgument("ReactionSystem: sum matrix must be m x m");
    }
    for (std::size_t i = 0; i < species_; ++i) {
      if (!(s.sum_matrix(i, i) > 0.0)) throw InvalidArgument("ReactionSystem: sum matrix needs a positive diagonal");
      for (std::size_t j = 0; j < species_; ++j) {
        if (j > i && s.sum_matrix(i, j) != 0.0) throw InvalidArgument("ReactionSystem: sum matrix must be lower triangular");
        if (j < i && s.sum_matrix(i, j) < 0.0) throw InvalidArgument("ReactionSystem: sum matrix entries must be >= 0");
      }
    }
    if (!(s.intermediate_order > 0.0)) throw InvalidArgument("ReactionSystem: intermediate order r must be > 0");
    if (!(s.growth_order > 0.0)) throw InvalidArgument("ReactionSystem: growth order must be > 0");
    if (!(s.growth_constant > 0.0)) throw InvalidArgument("ReactionSystem: growth constant must be > 0");
  }

  std::string name_;
  std::size_t species_;
  ReactionFunction f_;
  ReactionStructure structure_;
};

class TruncationParam {
 public:
  explicit TruncationParam(double epsilon) : epsilon_(epsilon) {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw InvalidArgument("TruncationParam: epsilon must be > 0");
  }
  double value() const noexcept { return epsilon_; }

 private:
  double epsilon_;
};

/// F_i / (1 + eps * sum_j |F_j|), in place. Each entry ends up bounded by 1/eps.
inline void truncate_in_place(std::span<double> f, TruncationParam eps) {
  double total = 0.0;
  for (double v : f) total += std::abs(v);
  const double denom = 1.0 + eps.value() * total;
  for (double& v : f) v /= denom;
}

inline std::vector<double> truncate(std::span<const double> f, TruncationParam eps) {
  std::vector<double> out(f.begin(), f.end());
  truncate_in_place(out, eps);
  return out;
}

// ---------------------------------------------------------------------------
// Sampling

struct StateSample {
  std::vector<double> u;
  ReactionPoint at;
};

struct SamplerOptions {
  std::uint64_t seed = 20240611;
  std::vector<double> radii{10.0, 20.0, 40.0, 80.0};
  std::size_t draws_per_radius = 10'000;
  std::array<double, 2> domain_lower{0.0, 0.0};
  std::array<double, 2> domain_upper{1.0, 1.0};
  double t_max = 1.0;
  /// Decades spanned by the log-uniform component draws below the radius.
  double decades = 6.0;
};

/// Deterministic state sampler over the positive orthant. For each radius R
/// it returns the corners of [0, R]^m followed by log-uniform draws in
/// [R 10^-decades, R], with each component zeroed with probability 1/4 so
/// every face is visited.
class StateSampler {
 public:
  explicit StateSampler(SamplerOptions options = {}) : opt_(std::move(options)) {
    if (opt_.radii.empty()) throw InvalidArgument("StateSampler: need at least one radius");
  }

  const SamplerOptions& options() const noexcept { return opt_; }
  std::size_t radius_count() const noexcept { return opt_.radii.size(); }
  double radius(std::size_t k) const { return opt_.radii.at(k); }

  std::vector<StateSample> samples(std::size_t m, std::size_t radius_index) const {
    return draw(m, radius_index, -1);
  }

  /// Samples on the face {u_face = 0}.
  std::vector<StateSample> face_samples(std::size_t m, std::size_t radius_index, std::size_t face) const {
    return draw(m, radius_index, static_cast<std::ptrdiff_t>(face));
  }

 private:
  std::vector<StateSample> draw(std::size_t m, std::size_t radius_index, std::ptrdiff_t face) const {
    const double R = radius(radius_index);
    std::seed_seq seq{static_cast<std::uint32_t>(opt_.seed), static_cast<std::uint32_t>(opt_.seed >> 32),
                      static_cast<std::uint32_t>(radius_index), static_cast<std::uint32_t>(face + 1),
                      static_cast<std::uint32_t>(m)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    auto random_point = [&] {
      ReactionPoint at;
      for (int a = 0; a < 2; ++a) {
        at.x[a] = opt_.domain_lower[a] + unit(rng) * (opt_.domain_upper[a] - opt_.domain_lower[a]);
      }
      at.t = unit(rng) * opt_.t_max;
      return at;
    };

    std::vector<StateSample> out;
    const std::size_t corners = (m <= 10) ? (std::size_t{1} << m) : 0;
    out.reserve(corners + opt_.draws_per_radius);
    for (std::size_t mask = 0; mask < corners; ++mask) {
      StateSample s;
      s.u.resize(m);
      for (std::size_t k = 0; k < m; ++k) s.u[k] = (mask >> k & 1U) ? R : 0.0;
      if (face >= 0) s.u[static_cast<std::size_t>(face)] = 0.0;
      s.at = random_point();
      out.push_back(std::move(s));
    }
    for (std::size_t d = 0; d < opt_.draws_per_radius; ++d) {
      StateSample s;
      s.u.resize(m);
      for (std::size_t k = 0; k < m; ++k) {
        const double v = R * std::pow(10.0, -opt_.decades * unit(rng));
        s.u[k] = (unit(rng) < 0.25) ? 0.0 : v;
      }
      if (face >= 0) s.u[static_cast<std::size_t>(face)] = 0.0;
      s.at = random_point();
      out.push_back(std::move(s));
    }
    return out;
  }

  SamplerOptions opt_;
};

// ---------------------------------------------------------------------------
// Checkers

struct SampleViolation {
  std::vector<double> u;
  ReactionPoint at;
  double residual;
};

struct SampleReport {
  std::size_t samples_tested = 0;
  std::vector<SampleViolation> violations;
  double estimated_constant = 0.0;
  /// Per-radius estimates (growth checks) and a human-readable verdict.
  std::vector<double> radius_estimates;
  std::string detail;

  bool passed() const noexcept { return violations.empty(); }
};

inline constexpr double kPlateauTolerance = 0.05;

/// Running maximum of per-radius estimates has levelled off: the last
/// doubling of the radius raised it by less than `rel_tol` relative.
inline bool ratio_plateaued(std::span<const double> per_radius, double rel_tol = kPlateauTolerance) {
  if (per_radius.size() < 2) return true;
  std::vector<double> running(per_radius.begin(), per_radius.end());
  for (std::size_t k = 1; k < running.size(); ++k) running[k] = std::max(running[k], running[k - 1]);
  const double last = running.back();
  const double prev = running[running.size() - 2];
  if (!std::isfinite(last)) return last < 0.0;
  if (last <= 1e-12) return true;
  if (prev <= 0.0) return false;
  return (last - prev) <= rel_tol * prev;
}

namespace detail {

inline double power_sum(std::span<const double> u, double r) {
  double s = 0.0;
  for (double v : u) s += std::pow(v, r);
  return s;
}

}  // namespace detail

/// (F2): F_i >= -tol whenever u_i = 0. estimated_constant is the smallest
/// face value seen.
inline SampleReport check_quasi_positivity(const ReactionSystem& system, const StateSampler& sampler,
                                           double tol = 0.0) {
  const std::size_t m = system.species();
  SampleReport report;
  report.estimated_constant = std::numeric_limits<double>::infinity();
  std::vector<double> f(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < sampler.radius_count(); ++k) {
      for (const auto& s : sampler.face_samples(m, k, i)) {
        system.evaluate(s.at, s.u, f);
        ++report.samples_tested;
        report.estimated_constant = std::min(report.estimated_constant, f[i]);
        if (f[i] < -tol || !std::isfinite(f[i])) report.violations.push_back({s.u, s.at, f[i]});
      }
    }
  }
  report.detail = report.passed() ? "quasi-positive on all sampled faces"
                                  : std::to_string(report.violations.size()) + " face samples with F_i < 0 at u_i = 0";
  return report;
}

/// (F3): sum c_i F_i - K1 sum u_i - K2 <= tol. estimated_constant is the
/// largest residual.
inline SampleReport check_mass_control(const ReactionSystem& system, const StateSampler& sampler, double tol = 0.0) {
  const std::size_t m = system.species();
  const auto& s = system.structure();
  SampleReport report;
  report.estimated_constant = -std::numeric_limits<double>::infinity();
  std::vector<double> f(m);
  for (std::size_t k = 0; k < sampler.radius_count(); ++k) {
    for (const auto& sample : sampler.samples(m, k)) {
      system.evaluate(sample.at, sample.u, f);
      double weighted = 0.0;
      double mass = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        weighted += s.mass_weights[i] * f[i];
        mass += sample.u[i];
      }
      const double residual = weighted - s.K1 * mass - s.K2;
      ++report.samples_tested;
      report.estimated_constant = std::max(report.estimated_constant, residual);
      if (residual > tol || !std::isfinite(residual)) report.violations.push_back({sample.u, sample.at, residual});
    }
  }
  report.detail = report.passed() ? "mass control holds on all samples"
                                  : std::to_string(report.violations.size()) + " samples exceed K1 sum u + K2";
  return report;
}

namespace detail {

/// Shared driver for the growth-type checks: `ratio(sample, f)` yields one
/// value per row; each row must plateau as the radius doubles.
template <typename RatioFn>
SampleReport growth_check(const ReactionSystem& system, const StateSampler& sampler, std::size_t rows,
                          const std::string& row_label, RatioFn&& ratio) {
  const std::size_t m = system.species();
  SampleReport report;
  std::vector<std::vector<double>> per_row(rows, std::vector<double>(sampler.radius_count(),
                                                                      -std::numeric_limits<double>::infinity()));
  std::vector<StateSample> argmax(rows);
  std::vector<double> f(m);
  std::vector<double> values(rows);
  for (std::size_t k = 0; k < sampler.radius_count(); ++k) {
    for (const auto& sample : sampler.samples(m, k)) {
      system.evaluate(sample.at, sample.u, f);
      ratio(sample, f, values);
      ++report.samples_tested;
      for (std::size_t row = 0; row < rows; ++row) {
        const double v = std::isnan(values[row]) ? std::numeric_limits<double>::infinity() : values[row];
        if (v > per_row[row][k]) {
          per_row[row][k] = v;
          if (k + 1 == sampler.radius_count()) argmax[row] = sample;
        }
      }
    }
  }
  report.estimated_constant = -std::numeric_limits<double>::infinity();
  report.radius_estimates.assign(sampler.radius_count(), -std::numeric_limits<double>::infinity());
  std::string failing;
  for (std::size_t row = 0; row < rows; ++row) {
    for (std::size_t k = 0; k < sampler.radius_count(); ++k) {
      report.radius_estimates[k] = std::max(report.radius_estimates[k], per_row[row][k]);
    }
    const double final_estimate = *std::max_element(per_row[row].begin(), per_row[row].end());
    report.estimated_constant = std::max(report.estimated_constant, final_estimate);
    if (!ratio_plateaued(per_row[row])) {
      const auto& n = per_row[row];
      const double prev = std::max(n[n.size() - 2], 1e-300);
      report.violations.push_back({argmax[row].u, argmax[row].at, n.back() / prev - 1.0});
      failing += (failing.empty() ? "" : ", ") + row_label + " " + std::to_string(row + 1);
    }
  }
  report.detail = failing.empty() ? "bounded ratio (plateau as radius doubles)"
                                  : "ratio grows with radius in " + failing;
  return report;
}

}  // namespace detail

/// (F4): for each row i of the sum matrix, max over samples of
/// sum_{j<=i} a_ij F_j / (1 + sum u_k^r) must level off as the radius doubles.
inline SampleReport check_intermediate_sum(const ReactionSystem& system, const StateSampler& sampler) {
  const std::size_t m = system.species();
  const auto& s = system.structure();
  return detail::growth_check(system, sampler, m, "row",
                              [&](const StateSample& sample, std::span<const double> f, std::vector<double>& out) {
                                const double denom = 1.0 + detail::power_sum(sample.u, s.intermediate_order);
                                for (std::size_t i = 0; i < m; ++i) {
                                  double acc = 0.0;
                                  for (std::size_t j = 0; j <= i; ++j) acc += s.sum_matrix(i, j) * f[j];
                                  out[i] = acc / denom;
                                }
                              });
}

/// (F5): max_i F_i / (1 + sum u^ell) must level off as the radius doubles.
inline SampleReport check_polynomial_growth(const ReactionSystem& system, const StateSampler& sampler) {
  const std::size_t m = system.species();
  const double ell = system.structure().growth_order;
  return detail::growth_check(system, sampler, m, "species",
                              [&](const StateSample& sample, std::span<const double> f, std::vector<double>& out) {
                                const double denom = 1.0 + detail::power_sum(sample.u, ell);
                                for (std::size_t i = 0; i < m; ++i) out[i] = f[i] / denom;
                              });
}

// ---------------------------------------------------------------------------
// Builtins

/// F1 = u2^2 - u1 u2, F2 = u1 u2 - u2^2. Mass dissipating with equality.
inline ReactionSystem builtin_reversible_reaction() {
  auto f = [](const ReactionPoint&, std::span<const double> u, std::span<double> out) {
    const double a = u[1] * u[1] - u[0] * u[1];
    out[0] = a;
    out[1] = -a;
  };
  ReactionStructure s = ReactionStructure::defaults(2);
  s.intermediate_order = 2.0;
  s.growth_order = 2.0;
  return ReactionSystem("reversible", 2, f, std::move(s));
}

inline ReactionSystem builtin_zero(std::size_t m) {
  auto f = [](const ReactionPoint&, std::span<const double>, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
  };
  return ReactionSystem("zero", m, f, ReactionStructure::defaults(m));
}

/// F_i = rate * u_i, decoupled. rate < 0 decays, rate > 0 grows.
inline ReactionSystem builtin_linear(std::size_t m, double rate) {
  auto f = [rate](const ReactionPoint&, std::span<const double> u, std::span<double> out) {
    for (std::size_t i = 0; i < u.size(); ++i) out[i] = rate * u[i];
  };
  ReactionStructure s = ReactionStructure::defaults(m);
  s.K1 = std::max(rate, 0.0);
  return ReactionSystem(rate < 0 ? "linear-decay" : "linear-growth", m, f, std::move(s));
}

/// System whose components are parsed expressions over u1..um, x, y, t.
inline ReactionSystem expression_system(const std::vector<std::string>& sources, ReactionStructure structure) {
  const std::size_t m = sources.size();
  std::vector<Expression> exprs;
  exprs.reserve(m);
  for (const auto& src : sources) exprs.push_back(Expression::parse(src, m));
  auto f = [exprs = std::move(exprs)](const ReactionPoint& at, std::span<const double> u, std::span<double> out) {
    ExpressionContext ctx{u, at.x[0], at.x[1], at.t};
    for (std::size_t i = 0; i < exprs.size(); ++i) out[i] = exprs[i].evaluate(ctx);
  };
  return ReactionSystem("expressions", m, f, std::move(structure));
}

}  // namespace rdsim
