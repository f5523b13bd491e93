#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "rdsim/dense.hpp"

using namespace rdsim;

namespace {

// Oracle: number of eigenvalues below s via the inertia of A - sI
// (Sylvester), computed with an unpivoted LDL^T on a symmetric matrix.
int count_below(const DenseMatrix& A, double s) {
  const std::size_t n = A.rows();
  std::vector<std::vector<double>> a(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a[i][j] = A(i, j) - (i == j ? s : 0.0);
  int negatives = 0;
  for (std::size_t k = 0; k < n; ++k) {
    double d = a[k][k];
    if (d == 0.0) d = 1e-300;
    if (d < 0) ++negatives;
    for (std::size_t i = k + 1; i < n; ++i) {
      const double l = a[i][k] / d;
      for (std::size_t j = k + 1; j < n; ++j) a[i][j] -= l * a[k][j];
    }
  }
  return negatives;
}

double smallest_by_bisection(const DenseMatrix& A) {
  double lo = -1e3, hi = 1e3;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (count_below(A, mid) >= 1 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

DenseMatrix random_symmetric(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  DenseMatrix A(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) A(i, j) = A(j, i) = u(rng);
  return A;
}

}  // namespace

TEST(Dense, IdentityAndDiagonal) {
  const auto I = DenseMatrix::identity(3);
  EXPECT_EQ(I(1, 1), 1.0);
  EXPECT_EQ(I(0, 2), 0.0);
  const std::vector<double> d{1, 2, 3};
  const auto D = DenseMatrix::diagonal(d);
  const std::vector<double> x{1.0, 1.0, 1.0};
  EXPECT_EQ(D.apply(x), d);
}

TEST(Dense, EigenvaluesOfKnownMatrix) {
  DenseMatrix A(2, 2, std::vector<double>{2, 1, 1, 2});
  const auto ev = symmetric_eigenvalues(A);
  EXPECT_NEAR(ev[0], 1.0, 1e-12);
  EXPECT_NEAR(ev[1], 3.0, 1e-12);
}

TEST(Dense, SmallestEigenvalueMatchesSylvesterBisection) {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 30; ++trial) {
    const auto A = random_symmetric(2 + trial % 8, rng);
    EXPECT_NEAR(min_eigenvalue(A), smallest_by_bisection(A), 1e-9);
  }
}

TEST(Dense, EigenvalueSumIsTrace) {
  std::mt19937_64 rng(31);
  const auto A = random_symmetric(7, rng);
  double trace = 0.0, sum = 0.0;
  for (std::size_t i = 0; i < 7; ++i) trace += A(i, i);
  for (double v : symmetric_eigenvalues(A)) sum += v;
  EXPECT_NEAR(sum, trace, 1e-11);
}

TEST(Dense, PositiveDefiniteness) {
  EXPECT_TRUE(is_positive_definite(DenseMatrix::identity(4)));
  DenseMatrix S(2, 2, std::vector<double>{1, 1, 1, 1});
  EXPECT_FALSE(is_positive_definite(S));
}

TEST(Dense, NonSquareRejected) {
  EXPECT_THROW(min_eigenvalue(DenseMatrix(2, 3)), InvalidArgument);
}
