#pragma once

// Two-point-flux finite-volume assembly of -div(D grad u) and div(B u) on a
// StructuredGrid. Operators are scaled by 1/volume, so (A u)_P approximates
// the pointwise operator value in cell P.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "rdsim/error.hpp"
#include "rdsim/grid.hpp"
#include "rdsim/sparse.hpp"

namespace rdsim {

/// Distance-weighted harmonic mean of two cell diffusivities across a face.
inline double face_diffusivity(double dL, double dR, double hL, double hR) {
  if (!(dL > 0.0) || !(dR > 0.0) || !(hL > 0.0) || !(hR > 0.0)) {
    throw InvalidArgument("face_diffusivity: diffusivities and widths must be > 0");
  }
  return (hL + hR) * dL * dR / (hR * dL + hL * dR);
}

namespace detail {

/// Visits every interior face once as (axis, lower cell, upper cell) and every
/// boundary face as (axis, cell, side).
template <class Interior, class Boundary>
void for_each_face(const StructuredGrid& grid, Interior&& interior, Boundary&& boundary) {
  const std::size_t nx = grid.cells(0);
  const std::size_t ny = grid.cells(1);
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      const std::size_t P = grid.index(i, j);
      if (i == 0) boundary(0, P, Side::XLow);
      if (i + 1 < nx) interior(0, P, grid.index(i + 1, j));
      else boundary(0, P, Side::XHigh);
      if (grid.dim() > 1) {
        if (j == 0) boundary(1, P, Side::YLow);
        if (j + 1 < ny) interior(1, P, grid.index(i, j + 1));
        else boundary(1, P, Side::YHigh);
      }
    }
  }
}

inline double cell_width(const StructuredGrid& grid, int axis, std::size_t cell) {
  return grid.width(axis, grid.coords(cell)[axis]);
}

inline void check_species(const CoefficientField& coeff, const BoundarySpec& bc, std::size_t species,
                          const StructuredGrid& grid) {
  if (species >= coeff.species() || species >= bc.species()) {
    throw InvalidArgument("assembly: species index " + std::to_string(species) + " out of range");
  }
  const auto& s = coeff[species];
  if (s.diffusion.size() != grid.size() || s.drift.size() != grid.size()) {
    throw InvalidArgument("assembly: coefficient arrays do not match the grid");
  }
}

/// Transmissibility of a Dirichlet boundary face: ghost value mirrored at
/// half a cell outside.
inline double dirichlet_transmissibility(const StructuredGrid& grid, const CoefficientField& coeff,
                                         std::size_t species, int axis, std::size_t P) {
  const double dP = coeff[species].diffusion[P][axis];
  return grid.face_area(axis, P) * dP / (0.5 * cell_width(grid, axis, P));
}

}  // namespace detail

/// -div(D grad u) for one species. Symmetric up to the volume scaling.
inline SparseOperator assemble_diffusion(const StructuredGrid& grid, const CoefficientField& coeff,
                                         const BoundarySpec& bc, std::size_t species) {
  detail::check_species(coeff, bc, species, grid);
  const auto& D = coeff[species].diffusion;
  std::vector<Triplet> t;
  t.reserve(grid.size() * (1 + 2 * grid.dim()));
  for (std::size_t P = 0; P < grid.size(); ++P) t.push_back({P, P, 0.0});

  auto interior = [&](int axis, std::size_t P, std::size_t N) {
    const double hP = detail::cell_width(grid, axis, P);
    const double hN = detail::cell_width(grid, axis, N);
    const double dface = face_diffusivity(D[P][axis], D[N][axis], hP, hN);
    const double T = grid.face_area(axis, P) * dface / (0.5 * (hP + hN));
    const double vP = grid.volume(P);
    const double vN = grid.volume(N);
    t.push_back({P, P, T / vP});
    t.push_back({P, N, -T / vP});
    t.push_back({N, N, T / vN});
    t.push_back({N, P, -T / vN});
  };
  auto boundary = [&](int axis, std::size_t P, Side side) {
    const auto& cond = bc.at(species, side);
    switch (cond.kind) {
      case BoundaryCondition::Kind::Dirichlet:
        t.push_back({P, P, detail::dirichlet_transmissibility(grid, coeff, species, axis, P) / grid.volume(P)});
        break;
      case BoundaryCondition::Kind::Robin:
        t.push_back({P, P, cond.alpha * grid.face_area(axis, P) / grid.volume(P)});
        break;
      case BoundaryCondition::Kind::NoFluxWithDrift:
        break;
    }
  };
  detail::for_each_face(grid, interior, boundary);
  return SparseOperator::from_triplets(grid.size(), std::move(t));
}

inline SparseOperator assemble_diffusion(const StructuredGrid& grid, const CoefficientSchedule& schedule,
                                         const BoundarySpec& bc, std::size_t species, double t) {
  return assemble_diffusion(grid, schedule.at(t), bc, species);
}

/// div(B u) for one species, first-order upwind with the face drift taken
/// as the mean of the two adjacent cell drifts. On a no-flux-with-drift side
/// the total (diffusive plus advective) flux vanishes, so both are dropped;
/// Robin sides carry no advective flux either. Dirichlet sides let mass
/// leave at outflow faces and admit the zero ghost value at inflow faces.
inline SparseOperator assemble_advection(const StructuredGrid& grid, const CoefficientField& coeff,
                                         const BoundarySpec& bc, std::size_t species) {
  detail::check_species(coeff, bc, species, grid);
  const auto& B = coeff[species].drift;
  std::vector<Triplet> t;
  t.reserve(grid.size() * (1 + 2 * grid.dim()));
  for (std::size_t P = 0; P < grid.size(); ++P) t.push_back({P, P, 0.0});

  auto interior = [&](int axis, std::size_t P, std::size_t N) {
    // Normal points from P to N.
    const double vn = 0.5 * (B[P][axis] + B[N][axis]);
    const double area = grid.face_area(axis, P);
    const double vP = grid.volume(P);
    const double vN = grid.volume(N);
    if (vn > 0.0) {
      t.push_back({P, P, vn * area / vP});
      t.push_back({N, P, -vn * area / vN});
    } else if (vn < 0.0) {
      t.push_back({P, N, vn * area / vP});
      t.push_back({N, N, -vn * area / vN});
    }
  };
  auto boundary = [&](int axis, std::size_t P, Side side) {
    if (bc.at(species, side).kind != BoundaryCondition::Kind::Dirichlet) return;
    const double outward = (side == Side::XLow || side == Side::YLow) ? -1.0 : 1.0;
    const double vn = outward * B[P][axis];
    if (vn > 0.0) t.push_back({P, P, vn * grid.face_area(axis, P) / grid.volume(P)});
  };
  detail::for_each_face(grid, interior, boundary);
  return SparseOperator::from_triplets(grid.size(), std::move(t));
}

inline SparseOperator assemble_advection(const StructuredGrid& grid, const CoefficientSchedule& schedule,
                                         const BoundarySpec& bc, std::size_t species, double t) {
  return assemble_advection(grid, schedule.at(t), bc, species);
}

/// Right-hand-side contribution of nonzero Dirichlet data: solving
/// A u = f + lift imposes u = value[side] on the Dirichlet sides of
/// `species`. Values are indexed by Side.
inline std::vector<double> dirichlet_lift(const StructuredGrid& grid, const CoefficientField& coeff,
                                          const BoundarySpec& bc, std::size_t species,
                                          std::array<double, 4> value) {
  detail::check_species(coeff, bc, species, grid);
  std::vector<double> lift(grid.size(), 0.0);
  auto interior = [](int, std::size_t, std::size_t) {};
  auto boundary = [&](int axis, std::size_t P, Side side) {
    if (bc.at(species, side).kind != BoundaryCondition::Kind::Dirichlet) return;
    lift[P] += detail::dirichlet_transmissibility(grid, coeff, species, axis, P) * value[static_cast<int>(side)] /
               grid.volume(P);
  };
  detail::for_each_face(grid, interior, boundary);
  return lift;
}

/// (sum |u|^p vol)^(1/p), or max |u| for p = +inf.
inline double discrete_norm(const ScalarField& field, const StructuredGrid& grid, double p) {
  grid.check_field(field, "discrete_norm");
  if (!(p >= 1.0)) throw InvalidArgument("discrete_norm: p must be >= 1");
  if (std::isinf(p)) {
    double m = 0.0;
    for (double v : field) m = std::max(m, std::abs(v));
    return m;
  }
  double acc = 0.0;
  for (std::size_t c = 0; c < field.size(); ++c) acc += std::pow(std::abs(field[c]), p) * grid.volume(c);
  return p == 1.0 ? acc : std::pow(acc, 1.0 / p);
}

/// sum vol * u.
inline double integrate(const ScalarField& field, const StructuredGrid& grid) {
  grid.check_field(field, "integrate");
  double acc = 0.0;
  for (std::size_t c = 0; c < field.size(); ++c) acc += field[c] * grid.volume(c);
  return acc;
}

struct MMatrixReport {
  bool nonnegative_diagonal = true;
  bool nonpositive_offdiagonal = true;
  bool row_dominant = true;
  /// sum_r vol_r A_rc >= 0 for every column.
  bool column_dominant = true;

  bool sign_pattern() const noexcept { return nonnegative_diagonal && nonpositive_offdiagonal; }
  bool holds() const noexcept { return sign_pattern() && (row_dominant || column_dominant); }
};

inline MMatrixReport check_m_matrix(const SparseOperator& A, const StructuredGrid& grid, double tol = 1e-12) {
  MMatrixReport r;
  const double scale = std::max(1.0, A.max_abs());
  std::vector<double> vol(grid.size());
  for (std::size_t c = 0; c < vol.size(); ++c) vol[c] = grid.volume(c);
  for (std::size_t row = 0; row < A.size(); ++row) {
    const auto cols = A.row_cols(row);
    const auto vals = A.row_values(row);
    double diag = 0.0;
    double off = 0.0;
    for (std::size_t k = 0; k < cols.size(); ++k) {
      if (cols[k] == row) {
        diag = vals[k];
      } else {
        if (vals[k] > tol * scale) r.nonpositive_offdiagonal = false;
        off += std::abs(vals[k]);
      }
    }
    if (diag < -tol * scale) r.nonnegative_diagonal = false;
    if (diag + tol * scale < off) r.row_dominant = false;
  }
  const auto colsum = A.weighted_column_sums(vol);
  double vmax = *std::max_element(vol.begin(), vol.end());
  for (double s : colsum) {
    if (s < -tol * scale * vmax) r.column_dominant = false;
  }
  return r;
}

}  // namespace rdsim
