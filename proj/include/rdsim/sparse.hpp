#pragma once

// Compressed sparse row operator over grid cells.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "rdsim/error.hpp"

namespace rdsim {

struct Triplet {
  std::size_t row;
  std::size_t col;
  double value;
};

class SparseOperator {
 public:
  SparseOperator() = default;
  explicit SparseOperator(std::size_t n) : n_(n), row_start_(n + 1, 0) {}

  /// Duplicate (row, col) entries are summed; explicit zeros are kept so the
  /// sparsity pattern of an assembly does not depend on coefficient values.
  static SparseOperator from_triplets(std::size_t n, std::vector<Triplet> triplets) {
    for (const auto& t : triplets) {
      if (t.row >= n || t.col >= n) throw InvalidArgument("SparseOperator: triplet index out of range");
    }
    std::sort(triplets.begin(), triplets.end(),
              [](const Triplet& a, const Triplet& b) { return std::tie(a.row, a.col) < std::tie(b.row, b.col); });
    SparseOperator op(n);
    for (std::size_t k = 0; k < triplets.size();) {
      const std::size_t r = triplets[k].row;
      const std::size_t c = triplets[k].col;
      double v = 0.0;
      while (k < triplets.size() && triplets[k].row == r && triplets[k].col == c) v += triplets[k++].value;
      op.cols_.push_back(c);
      op.values_.push_back(v);
      ++op.row_start_[r + 1];
    }
    for (std::size_t r = 0; r < n; ++r) op.row_start_[r + 1] += op.row_start_[r];
    return op;
  }

  static SparseOperator identity(std::size_t n) {
    std::vector<Triplet> t;
    t.reserve(n);
    for (std::size_t i = 0; i < n; ++i) t.push_back({i, i, 1.0});
    return from_triplets(n, std::move(t));
  }

  std::size_t size() const noexcept { return n_; }
  std::size_t nonzeros() const noexcept { return values_.size(); }

  std::span<const std::size_t> row_cols(std::size_t r) const {
    return {cols_.data() + row_start_[r], row_start_[r + 1] - row_start_[r]};
  }
  std::span<const double> row_values(std::size_t r) const {
    return {values_.data() + row_start_[r], row_start_[r + 1] - row_start_[r]};
  }

  double at(std::size_t r, std::size_t c) const {
    const auto cols = row_cols(r);
    const auto it = std::lower_bound(cols.begin(), cols.end(), c);
    if (it == cols.end() || *it != c) return 0.0;
    return values_[row_start_[r] + static_cast<std::size_t>(it - cols.begin())];
  }

  void multiply(std::span<const double> x, std::span<double> y) const {
    if (x.size() != n_ || y.size() != n_) throw InvalidArgument("SparseOperator::multiply: size mismatch");
    for (std::size_t r = 0; r < n_; ++r) {
      double acc = 0.0;
      for (std::size_t k = row_start_[r]; k < row_start_[r + 1]; ++k) acc += values_[k] * x[cols_[k]];
      y[r] = acc;
    }
  }

  std::vector<double> operator*(std::span<const double> x) const {
    std::vector<double> y(n_);
    multiply(x, y);
    return y;
  }

  std::vector<double> diagonal() const {
    std::vector<double> d(n_, 0.0);
    for (std::size_t r = 0; r < n_; ++r) d[r] = at(r, r);
    return d;
  }

  std::vector<double> row_sums() const {
    std::vector<double> s(n_, 0.0);
    for (std::size_t r = 0; r < n_; ++r)
      for (double v : row_values(r)) s[r] += v;
    return s;
  }

  /// sum_r w_r A_rc for each column c.
  std::vector<double> weighted_column_sums(std::span<const double> w) const {
    std::vector<double> s(n_, 0.0);
    for (std::size_t r = 0; r < n_; ++r) {
      const auto cols = row_cols(r);
      const auto vals = row_values(r);
      for (std::size_t k = 0; k < cols.size(); ++k) s[cols[k]] += w[r] * vals[k];
    }
    return s;
  }

  std::vector<Triplet> triplets() const {
    std::vector<Triplet> t;
    t.reserve(values_.size());
    for (std::size_t r = 0; r < n_; ++r) {
      for (std::size_t k = row_start_[r]; k < row_start_[r + 1]; ++k) t.push_back({r, cols_[k], values_[k]});
    }
    return t;
  }

  /// a * this + b * other.
  SparseOperator combined(double a, const SparseOperator& other, double b) const {
    if (other.n_ != n_) throw InvalidArgument("SparseOperator: size mismatch in combination");
    auto t = triplets();
    for (auto& e : t) e.value *= a;
    for (auto e : other.triplets()) {
      e.value *= b;
      t.push_back(e);
    }
    return from_triplets(n_, std::move(t));
  }

  SparseOperator operator+(const SparseOperator& other) const { return combined(1.0, other, 1.0); }

  /// this + s * I.
  SparseOperator shifted(double s) const { return combined(1.0, identity(n_), s); }

  /// Every nonzero lies within one of the main diagonal.
  bool is_tridiagonal() const {
    for (std::size_t r = 0; r < n_; ++r) {
      for (std::size_t c : row_cols(r)) {
        if (c + 1 < r || c > r + 1) return false;
      }
    }
    return true;
  }

  double max_asymmetry() const {
    double worst = 0.0;
    for (std::size_t r = 0; r < n_; ++r) {
      const auto cols = row_cols(r);
      const auto vals = row_values(r);
      for (std::size_t k = 0; k < cols.size(); ++k) worst = std::max(worst, std::abs(vals[k] - at(cols[k], r)));
    }
    return worst;
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
  }

 private:
  std::size_t n_ = 0;
  std::vector<std::size_t> row_start_{0};
  std::vector<std::size_t> cols_;
  std::vector<double> values_;
};

}  // namespace rdsim
