#pragma once

// Multinomial L^p-energy algebra: multi-index enumeration, the weighted
// multinomial density H_p, its time derivative and the integration-by-parts
// identity used to extract the dissipation quadratic form.

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rdsim/dense.hpp"
#include "rdsim/error.hpp"

namespace rdsim {

/// An m-tuple of non-negative integers with cached order |beta|.
class MultiIndex {
 public:
  MultiIndex() = default;

  explicit MultiIndex(std::vector<int> entries) : entries_(std::move(entries)) {
    for (int e : entries_) {
      if (e < 0) throw InvalidArgument("MultiIndex: negative entry");
      order_ += e;
    }
  }

  std::size_t size() const noexcept { return entries_.size(); }
  int order() const noexcept { return order_; }
  int operator[](std::size_t i) const { return entries_[i]; }
  std::span<const int> entries() const noexcept { return entries_; }

  /// beta - e_i; requires beta_i >= 1.
  MultiIndex decremented(std::size_t i) const {
    std::vector<int> e = entries_;
    if (e.at(i) == 0) throw InvalidArgument("MultiIndex::decremented: entry is zero");
    --e[i];
    return MultiIndex(std::move(e));
  }

  friend bool operator==(const MultiIndex& a, const MultiIndex& b) { return a.entries_ == b.entries_; }
  friend auto operator<=>(const MultiIndex& a, const MultiIndex& b) { return a.entries_ <=> b.entries_; }

 private:
  std::vector<int> entries_;
  int order_ = 0;
};

/// Strictly positive per-species weights theta_i.
class ThetaVector {
 public:
  ThetaVector() = default;

  explicit ThetaVector(std::vector<double> entries) : entries_(std::move(entries)) {
    for (double t : entries_) {
      if (!(t > 0.0) || !std::isfinite(t)) throw InvalidArgument("ThetaVector: entries must be finite and > 0");
    }
  }

  static ThetaVector ones(std::size_t m) { return ThetaVector(std::vector<double>(m, 1.0)); }

  std::size_t size() const noexcept { return entries_.size(); }
  double operator[](std::size_t i) const { return entries_[i]; }
  std::span<const double> entries() const noexcept { return entries_; }

  friend bool operator==(const ThetaVector&, const ThetaVector&) = default;

 private:
  std::vector<double> entries_;
};

inline constexpr std::size_t kDefaultIndexCap = 1'000'000;

namespace detail {

inline std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b, const char* what) {
  std::uint64_t r = 0;
  if (__builtin_mul_overflow(a, b, &r)) throw OverflowError(std::string(what) + ": integer overflow");
  return r;
}

/// Exact binomial coefficient; throws on overflow.
inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    // r * (n - k + i) / i stays integral at every step.
    const unsigned __int128 wide = static_cast<unsigned __int128>(r) * (n - k + i) / i;
    if (wide > std::numeric_limits<std::uint64_t>::max()) throw OverflowError("binomial: integer overflow");
    r = static_cast<std::uint64_t>(wide);
  }
  return r;
}

/// binomial(n, k) saturated at `cap + 1` instead of overflowing.
inline std::uint64_t binomial_saturated(std::uint64_t n, std::uint64_t k, std::uint64_t cap) {
  try {
    return std::min<std::uint64_t>(binomial(n, k), cap + 1);
  } catch (const OverflowError&) {
    return cap + 1;
  }
}

inline void enumerate_into(std::vector<int>& prefix, std::size_t m, int remaining,
                           std::vector<MultiIndex>& out) {
  if (prefix.size() + 1 == m) {
    prefix.push_back(remaining);
    out.emplace_back(prefix);
    prefix.pop_back();
    return;
  }
  for (int v = 0; v <= remaining; ++v) {
    prefix.push_back(v);
    enumerate_into(prefix, m, remaining - v, out);
    prefix.pop_back();
  }
}

}  // namespace detail

/// Number of multi-indices of length m and order p: binomial(p+m-1, m-1).
inline std::uint64_t multi_index_count(std::size_t m, int p) {
  if (m == 0 || p < 0) throw InvalidArgument("multi_index_count: need m >= 1 and p >= 0");
  return detail::binomial(static_cast<std::uint64_t>(p) + m - 1, m - 1);
}

/// All beta with |beta| = p, lexicographically ascending.
inline std::vector<MultiIndex> enumerate_multi_indices(std::size_t m, int p,
                                                       std::size_t index_cap = kDefaultIndexCap) {
  if (m == 0) throw InvalidArgument("enumerate_multi_indices: m must be >= 1");
  if (p < 0) throw InvalidArgument("enumerate_multi_indices: p must be >= 0");
  const std::uint64_t count = detail::binomial_saturated(static_cast<std::uint64_t>(p) + m - 1, m - 1, index_cap);
  if (count > index_cap) {
    throw InvalidArgument("enumerate_multi_indices: " +
                          (count == index_cap + 1 ? std::string("more than ") + std::to_string(index_cap)
                                                  : std::to_string(count)) +
                          " multi-indices for m=" + std::to_string(m) + ", p=" + std::to_string(p) +
                          " exceeds index cap " + std::to_string(index_cap));
  }
  std::vector<MultiIndex> out;
  out.reserve(count);
  std::vector<int> prefix;
  prefix.reserve(m);
  detail::enumerate_into(prefix, m, p, out);
  return out;
}

/// p! / (beta_1! ... beta_m!) for |beta| = p, exact.
inline std::uint64_t multinomial_coefficient(int p, const MultiIndex& beta) {
  if (beta.order() != p) {
    throw InvalidArgument("multinomial_coefficient: |beta| = " + std::to_string(beta.order()) +
                          " differs from p = " + std::to_string(p));
  }
  // Product of binomials over partial sums.
  std::uint64_t result = 1;
  std::uint64_t partial = 0;
  for (int b : beta.entries()) {
    partial += static_cast<std::uint64_t>(b);
    result = detail::checked_mul(result, detail::binomial(partial, static_cast<std::uint64_t>(b)),
                                 "multinomial_coefficient");
  }
  return result;
}

/// p! / beta! for |beta| <= p, the coefficient carried by the derivative
/// and gradient identities where beta has order p-1 or p-2.
inline std::uint64_t factorial_ratio(int p, const MultiIndex& beta) {
  if (beta.order() > p) throw InvalidArgument("factorial_ratio: |beta| exceeds p");
  std::uint64_t falling = 1;  // p! / |beta|!
  for (int k = beta.order() + 1; k <= p; ++k) {
    falling = detail::checked_mul(falling, static_cast<std::uint64_t>(k), "factorial_ratio");
  }
  return detail::checked_mul(falling, multinomial_coefficient(beta.order(), beta), "factorial_ratio");
}

/// log of theta^{beta^2} = sum beta_i^2 ln theta_i.
inline double log_theta_weight(const ThetaVector& theta, const MultiIndex& beta) {
  double s = 0.0;
  for (std::size_t i = 0; i < beta.size(); ++i) {
    const double b = beta[i];
    s += b * b * std::log(theta[i]);
  }
  return s;
}

/// u^beta with 0^0 = 1.
inline double monomial(std::span<const double> u, const MultiIndex& beta) {
  double v = 1.0;
  for (std::size_t i = 0; i < beta.size(); ++i) {
    if (beta[i] == 0) continue;
    v *= std::pow(u[i], beta[i]);
  }
  return v;
}

/// coefficient * theta^{beta^2} * u^beta. Switches to log-domain
/// accumulation once a single beta_i^2 ln theta_i exceeds 700.
inline double weighted_monomial(double coefficient, const ThetaVector& theta, const MultiIndex& beta,
                                std::span<const double> u) {
  bool large = false;
  for (std::size_t i = 0; i < beta.size(); ++i) {
    const double b = beta[i];
    if (b * b * std::abs(std::log(theta[i])) > 700.0) large = true;
  }
  if (!large) {
    double w = coefficient * monomial(u, beta);
    for (std::size_t i = 0; i < beta.size(); ++i) {
      if (beta[i] != 0) w *= std::pow(theta[i], static_cast<double>(beta[i]) * beta[i]);
    }
    return w;
  }
  double log_value = std::log(coefficient) + log_theta_weight(theta, beta);
  for (std::size_t i = 0; i < beta.size(); ++i) {
    if (beta[i] == 0) continue;
    if (u[i] == 0.0) return 0.0;
    log_value += beta[i] * std::log(u[i]);
  }
  return std::exp(log_value);
}

/// The (p, theta) pair defining H_p and L_p, with the multi-index sets of
/// orders p, p-1 and p-2 precomputed.
class EnergySpec {
 public:
  struct Term {
    MultiIndex beta;
    double coefficient;  // p! / beta!
  };

  EnergySpec(int p, ThetaVector theta, std::size_t index_cap = kDefaultIndexCap)
      : p_(p), theta_(std::move(theta)), index_cap_(index_cap) {
    if (p_ < 1) throw InvalidArgument("EnergySpec: p must be >= 1");
    if (theta_.size() == 0) throw InvalidArgument("EnergySpec: theta must have at least one entry");
    for (int level = 0; level < 3; ++level) {
      const int order = p_ - level;
      if (order < 0) break;
      for (auto& beta : enumerate_multi_indices(theta_.size(), order, index_cap_)) {
        const double c = static_cast<double>(factorial_ratio(p_, beta));
        levels_[level].push_back(Term{std::move(beta), c});
      }
    }
  }

  int p() const noexcept { return p_; }
  std::size_t species() const noexcept { return theta_.size(); }
  const ThetaVector& theta() const noexcept { return theta_; }
  std::size_t index_cap() const noexcept { return index_cap_; }

  /// Terms with |beta| = p - level, level in {0, 1, 2}.
  std::span<const Term> terms(int level = 0) const { return levels_.at(level); }

 private:
  int p_;
  ThetaVector theta_;
  std::size_t index_cap_;
  std::array<std::vector<Term>, 3> levels_;
};

namespace detail {

inline void require_species(std::span<const double> u, const EnergySpec& spec, const char* where) {
  if (u.size() != spec.species()) {
    throw InvalidArgument(std::string(where) + ": expected " + std::to_string(spec.species()) +
                          " species values, got " + std::to_string(u.size()));
  }
}

inline void require_non_negative(std::span<const double> u, const char* where) {
  for (double v : u) {
    if (!(v >= 0.0)) throw InvalidArgument(std::string(where) + ": state must be non-negative");
  }
}

}  // namespace detail

/// H_p[u] = sum_{|beta|=p} (p beta) theta^{beta^2} u^beta.
inline double energy_density(std::span<const double> u, const EnergySpec& spec) {
  detail::require_species(u, spec, "energy_density");
  detail::require_non_negative(u, "energy_density");
  double h = 0.0;
  for (const auto& term : spec.terms(0)) h += weighted_monomial(term.coefficient, spec.theta(), term.beta, u);
  return h;
}

/// d/dt H_p[u] along dudt, from the closed form over |beta| = p-1.
inline double energy_time_derivative(std::span<const double> u, std::span<const double> dudt,
                                     const EnergySpec& spec) {
  detail::require_species(u, spec, "energy_time_derivative");
  detail::require_species(dudt, spec, "energy_time_derivative");
  detail::require_non_negative(u, "energy_time_derivative");
  const auto& theta = spec.theta();
  if (spec.p() == 1) {
    double s = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) s += theta[j] * dudt[j];
    return s;
  }
  double total = 0.0;
  for (const auto& term : spec.terms(1)) {
    double inner = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) {
      inner += std::pow(theta[j], 2.0 * term.beta[j] + 1.0) * dudt[j];
    }
    total += weighted_monomial(term.coefficient, theta, term.beta, u) * inner;
  }
  return total;
}

struct IdentitySides {
  double lhs;
  double rhs;
};

/// Both sides of the gradient identity
///   sum_{|b|=p-1} (p b) theta^{b^2} sum_k theta_k^{2b_k+1} (A_k grad u_k) . grad u^b
/// = sum_{|b|=p-2} (p b) theta^{b^2} u^b sum_{k,r} C_{k,r}(b) (A_k grad u_k) . grad u_r
/// computed along independent paths. grad_u[k] is the n-vector gradient of u_k.
inline IdentitySides ibp_identity_sides(std::span<const double> u, std::span<const std::vector<double>> grad_u,
                                        std::span<const DenseMatrix> A, const EnergySpec& spec) {
  const std::size_t m = spec.species();
  if (spec.p() < 2) throw InvalidArgument("ibp_identity_sides: p must be >= 2");
  if (u.size() != m || grad_u.size() != m || A.size() != m) {
    throw InvalidArgument("ibp_identity_sides: species dimension mismatch among u, grad_u, A");
  }
  const std::size_t n = grad_u[0].size();
  for (std::size_t k = 0; k < m; ++k) {
    if (grad_u[k].size() != n || A[k].rows() != n || A[k].cols() != n) {
      throw InvalidArgument("ibp_identity_sides: spatial dimension mismatch");
    }
  }
  detail::require_non_negative(u, "ibp_identity_sides");
  const auto& theta = spec.theta();

  std::vector<std::vector<double>> flux(m);  // A_k grad u_k
  for (std::size_t k = 0; k < m; ++k) flux[k] = A[k].apply(grad_u[k]);
  auto dot = [n](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t l = 0; l < n; ++l) s += a[l] * b[l];
    return s;
  };

  // Left side: product rule for grad u^beta, terms with beta_r = 0 vanish.
  double lhs = 0.0;
  for (const auto& term : spec.terms(1)) {
    const auto& beta = term.beta;
    std::vector<double> grad_monomial(n, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
      if (beta[r] == 0) continue;
      const double factor = beta[r] * monomial(u, beta.decremented(r));
      for (std::size_t l = 0; l < n; ++l) grad_monomial[l] += factor * grad_u[r][l];
    }
    double inner = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      inner += std::pow(theta[k], 2.0 * beta[k] + 1.0) * dot(flux[k], grad_monomial);
    }
    lhs += term.coefficient * std::exp(log_theta_weight(theta, beta)) * inner;
  }

  // Right side: quadratic form with the C_{k,r}(beta) weights.
  double rhs = 0.0;
  for (const auto& term : spec.terms(2)) {
    const auto& beta = term.beta;
    double inner = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      for (std::size_t r = 0; r < m; ++r) {
        const double c = (k == r) ? std::pow(theta[k], 4.0 * beta[k] + 4.0)
                                  : std::pow(theta[k], 2.0 * beta[k] + 1.0) * std::pow(theta[r], 2.0 * beta[r] + 1.0);
        inner += c * dot(flux[k], grad_u[r]);
      }
    }
    rhs += weighted_monomial(term.coefficient, theta, beta, u) * inner;
  }
  return {lhs, rhs};
}

/// mn x mn symmetric matrix built from n x n blocks, species-major.
struct BlockMatrix {
  DenseMatrix matrix;
  std::size_t species = 0;
  std::size_t block_size = 0;

  DenseMatrix block(std::size_t k, std::size_t l) const {
    DenseMatrix b(block_size, block_size);
    for (std::size_t i = 0; i < block_size; ++i)
      for (std::size_t j = 0; j < block_size; ++j) b(i, j) = matrix(k * block_size + i, l * block_size + j);
    return b;
  }
};

namespace detail {

inline std::size_t require_blocks(std::span<const DenseMatrix> D, std::size_t m) {
  if (D.size() != m || m == 0) throw InvalidArgument("block assembly: need one diffusion matrix per species");
  const std::size_t n = D[0].rows();
  for (const auto& d : D) {
    if (d.rows() != n || d.cols() != n || n == 0) throw InvalidArgument("block assembly: inconsistent block shapes");
  }
  return n;
}

inline BlockMatrix assemble_blocks(std::span<const DenseMatrix> D, std::size_t n,
                                   const std::vector<std::vector<double>>& diag_scale,
                                   const std::vector<std::vector<double>>& off_scale) {
  const std::size_t m = D.size();
  DenseMatrix M(m * n, m * n);
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t l = 0; l < m; ++l) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          M(k * n + i, l * n + j) =
              (k == l) ? diag_scale[k][k] * D[k](i, j) : 0.5 * off_scale[k][l] * (D[k](i, j) + D[l](i, j));
        }
      }
    }
  }
  return BlockMatrix{M.symmetrized(), m, n};
}

}  // namespace detail

/// Reduced block matrix: diagonal blocks theta_k^2 D_k, off-diagonal
/// blocks (D_k + D_l) / 2. Positive definite iff B(beta) is, for every beta.
inline BlockMatrix assemble_btilde(std::span<const DenseMatrix> D, const ThetaVector& theta) {
  const std::size_t m = theta.size();
  const std::size_t n = detail::require_blocks(D, m);
  std::vector<std::vector<double>> diag(m, std::vector<double>(m, 0.0));
  std::vector<std::vector<double>> off(m, std::vector<double>(m, 1.0));
  for (std::size_t k = 0; k < m; ++k) diag[k][k] = theta[k] * theta[k];
  return detail::assemble_blocks(D, n, diag, off);
}

/// Full dissipation matrix B(beta) for |beta| = p-2: blocks C_{k,l}(beta)(D_k + D_l)/2.
inline BlockMatrix assemble_b(const MultiIndex& beta, std::span<const DenseMatrix> D, const ThetaVector& theta) {
  const std::size_t m = theta.size();
  if (beta.size() != m) throw InvalidArgument("assemble_b: beta length differs from species count");
  const std::size_t n = detail::require_blocks(D, m);
  std::vector<std::vector<double>> c(m, std::vector<double>(m, 0.0));
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t l = 0; l < m; ++l) {
      c[k][l] = (k == l) ? std::pow(theta[k], 4.0 * beta[k] + 4.0)
                         : std::pow(theta[k], 2.0 * beta[k] + 1.0) * std::pow(theta[l], 2.0 * beta[l] + 1.0);
    }
  }
  return detail::assemble_blocks(D, n, c, c);
}

inline double min_eigenvalue(const BlockMatrix& M, double tol = 1e-10) { return min_eigenvalue(M.matrix, tol); }

}  // namespace rdsim
