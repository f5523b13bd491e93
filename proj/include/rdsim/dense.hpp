#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rdsim/error.hpp"

namespace rdsim {

/// Small row-major dense matrix. Used for diffusion tensors, the sum
/// matrix of a reaction system and the block matrices of the energy test.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw InvalidArgument("DenseMatrix: data size does not match shape");
    }
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static DenseMatrix diagonal(std::span<const double> d) {
    DenseMatrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<const double> data() const noexcept { return data_; }

  DenseMatrix transposed() const {
    DenseMatrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  /// (M + M^T) / 2
  DenseMatrix symmetrized() const {
    require_square("symmetrized");
    DenseMatrix s(rows_, cols_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) s(i, j) = 0.5 * ((*this)(i, j) + (*this)(j, i));
    return s;
  }

  double frobenius_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
  }

  std::vector<double> apply(std::span<const double> x) const {
    if (x.size() != cols_) throw InvalidArgument("DenseMatrix::apply: size mismatch");
    std::vector<double> y(rows_, 0.0);
    for (std::size_t i = 0; i < rows_; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < cols_; ++j) acc += (*this)(i, j) * x[j];
      y[i] = acc;
    }
    return y;
  }

  DenseMatrix& operator+=(const DenseMatrix& o) {
    if (o.rows_ != rows_ || o.cols_ != cols_) throw InvalidArgument("DenseMatrix +=: shape mismatch");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
  }

  DenseMatrix& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  friend DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b) { return a += b; }
  friend DenseMatrix operator*(double s, DenseMatrix a) { return a *= s; }

  void require_square(const char* where) const {
    if (!square()) throw InvalidArgument(std::string(where) + ": matrix is not square");
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// All eigenvalues of a symmetric matrix by cyclic Jacobi rotations,
/// ascending. Off-diagonal mass is driven below `tol` (absolute).
inline std::vector<double> symmetric_eigenvalues(const DenseMatrix& m, double tol = 1e-10,
                                                 int max_sweeps = 100) {
  m.require_square("symmetric_eigenvalues");
  const std::size_t n = m.rows();
  DenseMatrix a = m.symmetrized();
  // Rotations stop once the off-diagonal Frobenius norm is below this.
  const double norm = a.frobenius_norm();
  const double target = std::max(1e-2 * tol, 1e-15 * norm);
  const double accept = std::max(tol, 1e-13 * norm);

  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  int sweep = 0;
  double off = off_norm();
  while (off > target) {
    if (sweep++ >= max_sweeps) {
      // Eigenvalues are accurate to ~off; accept when within tolerance.
      if (off <= accept) break;
      throw ConvergenceError("symmetric_eigenvalues: Jacobi sweeps did not converge", off);
    }
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
    const double next = off_norm();
    // Stagnation at round-off level.
    if (next >= off && next <= accept) break;
    off = next;
  }

  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a(i, i);
  std::sort(ev.begin(), ev.end());
  return ev;
}

/// Smallest eigenvalue of a symmetric matrix.
inline double min_eigenvalue(const DenseMatrix& m, double tol = 1e-10, int max_sweeps = 100) {
  if (m.rows() == 0) throw InvalidArgument("min_eigenvalue: empty matrix");
  return symmetric_eigenvalues(m, tol, max_sweeps).front();
}

/// Positive definite up to a relative round-off margin.
inline bool is_positive_definite(const DenseMatrix& m) {
  const double scale = std::max(1.0, m.frobenius_norm());
  return min_eigenvalue(m) > 1e-12 * scale;
}

}  // namespace rdsim
