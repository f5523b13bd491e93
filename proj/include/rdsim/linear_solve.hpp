#pragma once

// Linear solvers for the implicit transport step: direct elimination for
// tridiagonal (1D) operators, Jacobi-preconditioned BiCGStab otherwise.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rdsim/error.hpp"
#include "rdsim/sparse.hpp"

namespace rdsim {

struct LinearSolveOptions {
  double tolerance = 1e-10;
  int max_iterations = 2000;
  /// Use elimination whenever the operator is tridiagonal.
  bool allow_direct = true;
};

struct LinearSolveResult {
  std::vector<double> x;
  int iterations = 0;
  double relative_residual = 0.0;
  bool direct = false;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double relative_residual(const SparseOperator& A, std::span<const double> x, std::span<const double> b) {
  std::vector<double> r(b.size());
  A.multiply(x, r);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
  const double nb = norm2(b);
  return nb > 0.0 ? norm2(r) / nb : norm2(r);
}

}  // namespace detail

/// Thomas algorithm without pivoting; A must be tridiagonal with nonzero
/// pivots (guaranteed for the diagonally dominant transport operators).
inline std::vector<double> solve_tridiagonal(const SparseOperator& A, std::span<const double> b) {
  const std::size_t n = A.size();
  if (b.size() != n) throw InvalidArgument("solve_tridiagonal: size mismatch");
  if (!A.is_tridiagonal()) throw InvalidArgument("solve_tridiagonal: operator is not tridiagonal");
  std::vector<double> c(n, 0.0);
  std::vector<double> d(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double lower = i > 0 ? A.at(i, i - 1) : 0.0;
    const double upper = i + 1 < n ? A.at(i, i + 1) : 0.0;
    const double pivot = A.at(i, i) - (i > 0 ? lower * c[i - 1] : 0.0);
    if (pivot == 0.0 || !std::isfinite(pivot)) throw SolverError("solve_tridiagonal: zero pivot at row " + std::to_string(i));
    c[i] = upper / pivot;
    d[i] = (b[i] - (i > 0 ? lower * d[i - 1] : 0.0)) / pivot;
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) x[i] = d[i] - (i + 1 < n ? c[i] * x[i + 1] : 0.0);
  return x;
}

/// Right-preconditioned BiCGStab with the inverse diagonal as preconditioner.
inline LinearSolveResult bicgstab(const SparseOperator& A, std::span<const double> b, const LinearSolveOptions& opt,
                                  std::span<const double> x0 = {}) {
  const std::size_t n = A.size();
  if (b.size() != n) throw InvalidArgument("bicgstab: size mismatch");
  std::vector<double> inv_diag = A.diagonal();
  for (double& d : inv_diag) d = (d != 0.0) ? 1.0 / d : 1.0;

  LinearSolveResult res;
  res.x.assign(n, 0.0);
  if (x0.size() == n) res.x.assign(x0.begin(), x0.end());
  const double nb = detail::norm2(b);
  if (nb == 0.0) {
    res.x.assign(n, 0.0);
    return res;
  }

  std::vector<double> r(n), r_hat(n), p(n, 0.0), v(n, 0.0), s(n), t(n), y(n), z(n);
  A.multiply(res.x, r);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
  r_hat = r;
  double rho = 1.0, alpha = 1.0, omega = 1.0;
  double rel = detail::norm2(r) / nb;

  for (int it = 0; it < opt.max_iterations && rel > opt.tolerance; ++it) {
    const double rho_new = detail::dot(r_hat, r);
    if (rho_new == 0.0 || !std::isfinite(rho_new)) {
      // Breakdown: restart from the current iterate with a fresh shadow residual.
      A.multiply(res.x, r);
      for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
      r_hat = r;
      std::fill(p.begin(), p.end(), 0.0);
      std::fill(v.begin(), v.end(), 0.0);
      rho = alpha = omega = 1.0;
      res.iterations = it + 1;
      continue;
    }
    const double beta = (rho_new / rho) * (alpha / omega);
    rho = rho_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * (p[i] - omega * v[i]);
    for (std::size_t i = 0; i < n; ++i) y[i] = inv_diag[i] * p[i];
    A.multiply(y, v);
    alpha = rho / detail::dot(r_hat, v);
    for (std::size_t i = 0; i < n; ++i) s[i] = r[i] - alpha * v[i];
    if (detail::norm2(s) / nb <= opt.tolerance) {
      for (std::size_t i = 0; i < n; ++i) res.x[i] += alpha * y[i];
      res.iterations = it + 1;
      rel = detail::relative_residual(A, res.x, b);
      if (rel <= opt.tolerance) break;
      continue;
    }
    for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * s[i];
    A.multiply(z, t);
    const double tt = detail::dot(t, t);
    omega = tt > 0.0 ? detail::dot(t, s) / tt : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      res.x[i] += alpha * y[i] + omega * z[i];
      r[i] = s[i] - omega * t[i];
    }
    res.iterations = it + 1;
    rel = detail::norm2(r) / nb;
    if (rel <= opt.tolerance) rel = detail::relative_residual(A, res.x, b);
    if (omega == 0.0) break;
  }
  res.relative_residual = detail::relative_residual(A, res.x, b);
  if (!(res.relative_residual <= opt.tolerance)) {
    throw ConvergenceError("bicgstab: no convergence after " + std::to_string(res.iterations) +
                               " iterations, relative residual " + std::to_string(res.relative_residual),
                           res.relative_residual);
  }
  return res;
}

/// Solves A x = b to ||A x - b|| <= tol ||b||.
inline LinearSolveResult linear_solve(const SparseOperator& A, std::span<const double> b,
                                      const LinearSolveOptions& opt = {}, std::span<const double> x0 = {}) {
  if (opt.allow_direct && A.is_tridiagonal()) {
    LinearSolveResult res;
    res.x = solve_tridiagonal(A, b);
    res.direct = true;
    res.relative_residual = detail::relative_residual(A, res.x, b);
    if (!(res.relative_residual <= opt.tolerance)) {
      throw ConvergenceError("linear_solve: direct elimination residual " + std::to_string(res.relative_residual) +
                                 " above tolerance",
                             res.relative_residual);
    }
    return res;
  }
  return bicgstab(A, b, opt, x0);
}

}  // namespace rdsim
