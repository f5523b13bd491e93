#pragma once

// Cell-centred structured grids in one or two dimensions, per-cell
// coefficient fields (diagonal diffusion tensors and drift vectors) with
// optional piecewise-constant time schedules, and boundary specifications.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "rdsim/error.hpp"

namespace rdsim {

using ScalarField = std::vector<double>;

class StructuredGrid {
 public:
  StructuredGrid() = default;

  /// widths[a] holds the cell widths along axis a; lower[a] the left edge.
  StructuredGrid(std::vector<std::vector<double>> widths, std::vector<double> lower)
      : widths_(std::move(widths)), lower_(std::move(lower)) {
    if (widths_.empty() || widths_.size() > 2) throw InvalidArgument("StructuredGrid: dim must be 1 or 2");
    if (lower_.size() != widths_.size()) throw InvalidArgument("StructuredGrid: lower corner dimension mismatch");
    for (const auto& axis : widths_) {
      if (axis.empty()) throw InvalidArgument("StructuredGrid: each axis needs at least one cell");
      for (double h : axis) {
        if (!(h > 0.0) || !std::isfinite(h)) throw InvalidArgument("StructuredGrid: cell widths must be > 0");
      }
    }
    for (std::size_t a = 0; a < widths_.size(); ++a) {
      std::vector<double> c(widths_[a].size());
      double edge = lower_[a];
      for (std::size_t i = 0; i < c.size(); ++i) {
        c[i] = edge + 0.5 * widths_[a][i];
        edge += widths_[a][i];
      }
      centers_.push_back(std::move(c));
      upper_.push_back(edge);
    }
  }

  static StructuredGrid uniform_1d(std::size_t n, double lo = 0.0, double hi = 1.0) {
    if (n == 0 || !(hi > lo)) throw InvalidArgument("StructuredGrid::uniform_1d: bad extent");
    return StructuredGrid({std::vector<double>(n, (hi - lo) / static_cast<double>(n))}, {lo});
  }

  static StructuredGrid uniform_2d(std::size_t nx, std::size_t ny, std::array<double, 2> lo = {0.0, 0.0},
                                   std::array<double, 2> hi = {1.0, 1.0}) {
    if (nx == 0 || ny == 0 || !(hi[0] > lo[0]) || !(hi[1] > lo[1])) {
      throw InvalidArgument("StructuredGrid::uniform_2d: bad extent");
    }
    return StructuredGrid({std::vector<double>(nx, (hi[0] - lo[0]) / static_cast<double>(nx)),
                           std::vector<double>(ny, (hi[1] - lo[1]) / static_cast<double>(ny))},
                          {lo[0], lo[1]});
  }

  int dim() const noexcept { return static_cast<int>(widths_.size()); }
  std::size_t cells(int axis) const { return axis < dim() ? widths_[axis].size() : 1; }
  std::size_t size() const noexcept {
    std::size_t n = 1;
    for (const auto& w : widths_) n *= w.size();
    return widths_.empty() ? 0 : n;
  }

  double width(int axis, std::size_t i) const { return widths_.at(axis).at(i); }
  double center(int axis, std::size_t i) const { return centers_.at(axis).at(i); }
  double lower(int axis) const { return lower_.at(axis); }
  double upper(int axis) const { return upper_.at(axis); }
  const std::vector<double>& widths(int axis) const { return widths_.at(axis); }

  std::size_t index(std::size_t i, std::size_t j = 0) const { return i + cells(0) * j; }
  std::array<std::size_t, 2> coords(std::size_t cell) const {
    const std::size_t nx = cells(0);
    return {cell % nx, cell / nx};
  }

  std::array<double, 2> cell_center(std::size_t cell) const {
    const auto ij = coords(cell);
    return {center(0, ij[0]), dim() > 1 ? center(1, ij[1]) : 0.0};
  }

  double volume(std::size_t cell) const {
    const auto ij = coords(cell);
    double v = width(0, ij[0]);
    if (dim() > 1) v *= width(1, ij[1]);
    return v;
  }

  /// Area of a face normal to `axis` bounding `cell` (1 in one dimension).
  double face_area(int axis, std::size_t cell) const {
    if (dim() == 1) return 1.0;
    const auto ij = coords(cell);
    return axis == 0 ? width(1, ij[1]) : width(0, ij[0]);
  }

  double measure() const {
    double v = 1.0;
    for (int a = 0; a < dim(); ++a) v *= upper(a) - lower(a);
    return v;
  }

  bool uniform() const {
    for (const auto& w : widths_) {
      for (double h : w) {
        if (std::abs(h - w.front()) > 1e-12 * w.front()) return false;
      }
    }
    return true;
  }

  /// Cell containing x (clamped to the box).
  std::size_t locate(std::array<double, 2> x) const {
    std::array<std::size_t, 2> ij{0, 0};
    for (int a = 0; a < dim(); ++a) {
      const auto& c = centers_[a];
      // Faces lie halfway between neighbouring widths; scan by edges.
      double edge = lower_[a];
      std::size_t i = 0;
      while (i + 1 < c.size() && x[a] >= edge + widths_[a][i]) {
        edge += widths_[a][i];
        ++i;
      }
      ij[a] = i;
    }
    return index(ij[0], ij[1]);
  }

  /// FNV-1a over dimension and widths; identifies the grid in binary records.
  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* data, std::size_t n) {
      const auto* b = static_cast<const unsigned char*>(data);
      for (std::size_t k = 0; k < n; ++k) {
        h ^= b[k];
        h *= 1099511628211ULL;
      }
    };
    const std::uint64_t d = widths_.size();
    mix(&d, sizeof d);
    for (std::size_t a = 0; a < widths_.size(); ++a) {
      const std::uint64_t n = widths_[a].size();
      mix(&n, sizeof n);
      mix(&lower_[a], sizeof(double));
      mix(widths_[a].data(), widths_[a].size() * sizeof(double));
    }
    return h;
  }

  void check_field(const ScalarField& f, const char* where) const {
    if (f.size() != size()) {
      throw InvalidArgument(std::string(where) + ": field has " + std::to_string(f.size()) + " values, grid has " +
                            std::to_string(size()) + " cells");
    }
  }

 private:
  std::vector<std::vector<double>> widths_;
  std::vector<double> lower_;
  std::vector<double> upper_;
  std::vector<std::vector<double>> centers_;
};

/// Per-cell diagonal diffusion tensor and drift vector for one species.
struct SpeciesCoefficients {
  std::vector<std::array<double, 2>> diffusion;
  std::vector<std::array<double, 2>> drift;

  static SpeciesCoefficients constant(std::size_t cells, double d, std::array<double, 2> b = {0.0, 0.0}) {
    return {std::vector<std::array<double, 2>>(cells, {d, d}), std::vector<std::array<double, 2>>(cells, b)};
  }
};

class CoefficientField {
 public:
  CoefficientField() = default;
  explicit CoefficientField(std::vector<SpeciesCoefficients> species) : species_(std::move(species)) {}

  static CoefficientField constant(const StructuredGrid& grid, std::size_t m, double d,
                                   std::array<double, 2> b = {0.0, 0.0}) {
    return CoefficientField(std::vector<SpeciesCoefficients>(m, SpeciesCoefficients::constant(grid.size(), d, b)));
  }

  std::size_t species() const noexcept { return species_.size(); }
  const SpeciesCoefficients& operator[](std::size_t k) const { return species_.at(k); }
  SpeciesCoefficients& operator[](std::size_t k) { return species_.at(k); }

  /// Smallest eigenvalue of any cell tensor (the ellipticity constant).
  double min_diffusivity(const StructuredGrid& grid) const {
    double lo = std::numeric_limits<double>::infinity();
    for (const auto& s : species_)
      for (const auto& d : s.diffusion)
        for (int a = 0; a < grid.dim(); ++a) lo = std::min(lo, d[a]);
    return lo;
  }

  double max_diffusivity(const StructuredGrid& grid) const {
    double hi = 0.0;
    for (const auto& s : species_)
      for (const auto& d : s.diffusion)
        for (int a = 0; a < grid.dim(); ++a) hi = std::max(hi, d[a]);
    return hi;
  }

  /// Largest drift magnitude (Euclidean) over all cells and species.
  double max_drift(const StructuredGrid& grid) const {
    double hi = 0.0;
    for (const auto& s : species_) {
      for (const auto& b : s.drift) {
        double n2 = 0.0;
        for (int a = 0; a < grid.dim(); ++a) n2 += b[a] * b[a];
        hi = std::max(hi, std::sqrt(n2));
      }
    }
    return hi;
  }

  /// Shape, ellipticity and boundedness checks.
  void validate(const StructuredGrid& grid, std::size_t m) const {
    if (species_.size() != m) {
      throw InvalidArgument("CoefficientField: expected " + std::to_string(m) + " species, got " +
                            std::to_string(species_.size()));
    }
    for (const auto& s : species_) {
      if (s.diffusion.size() != grid.size() || s.drift.size() != grid.size()) {
        throw InvalidArgument("CoefficientField: per-cell arrays do not match the grid");
      }
      for (const auto& b : s.drift) {
        for (int a = 0; a < grid.dim(); ++a) {
          if (!std::isfinite(b[a])) throw InvalidArgument("CoefficientField: drift must be finite");
        }
      }
    }
    const double lo = min_diffusivity(grid);
    if (!(lo > 0.0)) throw InvalidArgument("CoefficientField: diffusion tensors must be uniformly positive definite");
    if (!std::isfinite(max_diffusivity(grid))) throw InvalidArgument("CoefficientField: diffusion must be bounded");
  }

 private:
  std::vector<SpeciesCoefficients> species_;
};

/// Piecewise-constant-in-time coefficients: entry k is active on
/// [start_k, start_{k+1}).
class CoefficientSchedule {
 public:
  CoefficientSchedule() = default;
  explicit CoefficientSchedule(CoefficientField field) { entries_.push_back({0.0, std::move(field)}); }

  void add(double start, CoefficientField field) {
    if (!entries_.empty() && !(start > entries_.back().first)) {
      throw InvalidArgument("CoefficientSchedule: switch times must be strictly increasing");
    }
    entries_.emplace_back(start, std::move(field));
  }

  std::size_t size() const noexcept { return entries_.size(); }
  const std::vector<std::pair<double, CoefficientField>>& entries() const noexcept { return entries_; }

  std::size_t active_index(double t) const {
    if (entries_.empty()) throw InvalidArgument("CoefficientSchedule: empty schedule");
    std::size_t k = 0;
    while (k + 1 < entries_.size() && t >= entries_[k + 1].first) ++k;
    return k;
  }

  const CoefficientField& at(double t) const { return entries_[active_index(t)].second; }

  /// First switch time strictly after t, or +inf.
  double next_switch(double t) const {
    for (const auto& [start, field] : entries_) {
      if (start > t) return start;
    }
    return std::numeric_limits<double>::infinity();
  }

  void validate(const StructuredGrid& grid, std::size_t m) const {
    if (entries_.empty()) throw InvalidArgument("CoefficientSchedule: empty schedule");
    for (const auto& [start, field] : entries_) field.validate(grid, m);
  }

 private:
  std::vector<std::pair<double, CoefficientField>> entries_;
};

enum class Side { XLow = 0, XHigh = 1, YLow = 2, YHigh = 3 };

inline const char* side_name(Side s) {
  switch (s) {
    case Side::XLow: return "xlo";
    case Side::XHigh: return "xhi";
    case Side::YLow: return "ylo";
    case Side::YHigh: return "yhi";
  }
  return "?";
}

struct BoundaryCondition {
  enum class Kind { Dirichlet, Robin, NoFluxWithDrift };

  Kind kind = Kind::Dirichlet;
  double alpha = 0.0;

  static BoundaryCondition dirichlet() { return {Kind::Dirichlet, 0.0}; }
  static BoundaryCondition robin(double alpha) {
    if (!(alpha >= 0.0)) throw InvalidArgument("BoundaryCondition: Robin alpha must be >= 0");
    return {Kind::Robin, alpha};
  }
  static BoundaryCondition no_flux() { return {Kind::NoFluxWithDrift, 0.0}; }

  friend bool operator==(const BoundaryCondition&, const BoundaryCondition&) = default;
};

class BoundarySpec {
 public:
  BoundarySpec() = default;
  BoundarySpec(std::size_t m, BoundaryCondition bc) : sides_(m, {bc, bc, bc, bc}) {}

  std::size_t species() const noexcept { return sides_.size(); }
  const BoundaryCondition& at(std::size_t k, Side s) const { return sides_.at(k)[static_cast<int>(s)]; }
  void set(std::size_t k, Side s, BoundaryCondition bc) { sides_.at(k)[static_cast<int>(s)] = bc; }
  void set_all(std::size_t k, BoundaryCondition bc) { sides_.at(k) = {bc, bc, bc, bc}; }

  /// True when no side of any species lets mass cross the boundary.
  bool closed() const {
    for (const auto& s : sides_)
      for (const auto& bc : s)
        if (bc.kind != BoundaryCondition::Kind::NoFluxWithDrift) return false;
    return true;
  }

 private:
  std::vector<std::array<BoundaryCondition, 4>> sides_;
};

}  // namespace rdsim
