#pragma once

// Serialization: binary checkpoints and trajectories (little-endian 64-bit
// fields), CSV tables and legacy ASCII VTK snapshots. Every text output
// starts with the config hash and seed.
//
// Checkpoint layout ("RDSIMCK1"):
//   char[8] magic | u64 grid hash | u64 species | u64 cells | f64 t |
//   f64 epsilon | f64[species * cells] fields, species-major
//
// Trajectory layout ("RDSIMTR1"):
//   char[8] magic | u64 config hash | u64 seed | u64 dim |
//   per axis: u64 cells, f64 lower, f64[cells] widths |
//   u64 species | u64 records |
//   per record: f64 t | f64[species] time integrals |
//               f64[species] reaction integrals | f64[species * cells] fields

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ios>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rdsim/error.hpp"
#include "rdsim/grid.hpp"
#include "rdsim/integrator.hpp"

namespace rdsim {

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

struct Provenance {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;

  std::string line() const { return "config_hash=" + hex64(config_hash) + " seed=" + std::to_string(seed); }
};

class IoError : public Error {
 public:
  using Error::Error;
};

namespace detail {

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot open " + path.string() + " for writing");
  }

  void magic(std::string_view m) { out_.write(m.data(), static_cast<std::streamsize>(m.size())); }

  void u64(std::uint64_t v) {
    unsigned char b[8];
    for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>(v >> (8 * k));
    out_.write(reinterpret_cast<const char*>(b), 8);
  }

  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  void f64s(const std::vector<double>& v) {
    for (double x : v) f64(x);
  }

  void finish(const std::filesystem::path& path) {
    out_.flush();
    if (!out_) throw IoError("write failed for " + path.string());
  }

 private:
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path.string()) {
    if (!in_) throw IoError("cannot open " + path_);
  }

  void magic(std::string_view m) {
    std::string got(m.size(), '\0');
    in_.read(got.data(), static_cast<std::streamsize>(got.size()));
    if (!in_ || got != m) throw IoError(path_ + ": bad magic, expected " + std::string(m));
  }

  std::uint64_t u64() {
    unsigned char b[8];
    in_.read(reinterpret_cast<char*>(b), 8);
    if (!in_) throw IoError(path_ + ": truncated file");
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(b[k]) << (8 * k);
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::vector<double> f64s(std::uint64_t n) {
    if (n > (std::uint64_t{1} << 34)) throw IoError(path_ + ": implausible array length");
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return v;
  }

  /// Guards against absurd counts in corrupt headers.
  std::uint64_t count(std::uint64_t limit, const char* what) {
    const std::uint64_t v = u64();
    if (v > limit) throw IoError(path_ + ": corrupt " + std::string(what) + " count " + std::to_string(v));
    return v;
  }

  void expect_end() {
    in_.peek();
    if (!in_.eof()) throw IoError(path_ + ": trailing bytes");
  }

 private:
  std::ifstream in_;
  std::string path_;
};

}  // namespace detail

inline void write_checkpoint(const std::filesystem::path& path, const SimState& state, const StructuredGrid& grid) {
  detail::BinaryWriter w(path);
  w.magic("RDSIMCK1");
  w.u64(grid.hash());
  w.u64(state.fields.size());
  w.u64(grid.size());
  w.f64(state.t);
  w.f64(state.epsilon.value());
  for (const auto& f : state.fields) {
    grid.check_field(f, "write_checkpoint");
    w.f64s(f);
  }
  w.finish(path);
}

/// Restores a checkpoint written for `grid`; a different grid is rejected.
inline SimState read_checkpoint(const std::filesystem::path& path, const StructuredGrid& grid) {
  detail::BinaryReader r(path);
  r.magic("RDSIMCK1");
  if (r.u64() != grid.hash()) throw IoError(path.string() + ": checkpoint was written for a different grid");
  const auto m = r.count(1 << 16, "species");
  const auto n = r.u64();
  if (n != grid.size()) throw IoError(path.string() + ": cell count mismatch");
  SimState s;
  s.t = r.f64();
  s.epsilon = TruncationParam(r.f64());
  for (std::uint64_t k = 0; k < m; ++k) s.fields.push_back(r.f64s(n));
  r.expect_end();
  return s;
}

inline void write_trajectory(const std::filesystem::path& path, const Trajectory& traj, const Provenance& prov) {
  detail::BinaryWriter w(path);
  w.magic("RDSIMTR1");
  w.u64(prov.config_hash);
  w.u64(prov.seed);
  const auto& g = traj.grid;
  w.u64(static_cast<std::uint64_t>(g.dim()));
  for (int a = 0; a < g.dim(); ++a) {
    w.u64(g.cells(a));
    w.f64(g.lower(a));
    w.f64s(g.widths(a));
  }
  w.u64(traj.species());
  w.u64(traj.records.size());
  for (const auto& rec : traj.records) {
    w.f64(rec.t);
    w.f64s(rec.time_integral);
    w.f64s(rec.reaction_integral);
    for (const auto& f : rec.fields) w.f64s(f);
  }
  w.finish(path);
}

struct StoredTrajectory {
  Trajectory trajectory;
  Provenance provenance;
};

inline StoredTrajectory read_trajectory(const std::filesystem::path& path) {
  detail::BinaryReader r(path);
  r.magic("RDSIMTR1");
  StoredTrajectory out;
  out.provenance.config_hash = r.u64();
  out.provenance.seed = r.u64();
  const auto dim = r.u64();
  if (dim < 1 || dim > 2) throw IoError(path.string() + ": corrupt grid dimension");
  std::vector<std::vector<double>> widths;
  std::vector<double> lower;
  for (std::uint64_t a = 0; a < dim; ++a) {
    const auto n = r.count(std::uint64_t{1} << 26, "cell");
    lower.push_back(r.f64());
    widths.push_back(r.f64s(n));
  }
  try {
    out.trajectory.grid = StructuredGrid(std::move(widths), std::move(lower));
  } catch (const InvalidArgument& e) {
    throw IoError(path.string() + ": corrupt grid: " + e.what());
  }
  const auto m = r.count(1 << 16, "species");
  const auto records = r.count(std::uint64_t{1} << 32, "record");
  const std::size_t n = out.trajectory.grid.size();
  for (std::uint64_t k = 0; k < records; ++k) {
    TrajectoryRecord rec;
    rec.t = r.f64();
    rec.time_integral = r.f64s(m);
    rec.reaction_integral = r.f64s(m);
    for (std::uint64_t s = 0; s < m; ++s) rec.fields.push_back(r.f64s(n));
    out.trajectory.records.push_back(std::move(rec));
  }
  r.expect_end();
  try {
    out.trajectory.validate();
  } catch (const InvalidArgument& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return out;
}

/// Whitespace-free numeric formatting that round-trips doubles.
inline std::string format_number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

/// CSV with a leading "# config_hash=... seed=..." comment line; gnuplot
/// reads it as a column file.
inline void write_csv(const std::filesystem::path& path, const Provenance& prov, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "# " << prov.line() << '\n';
  for (std::size_t k = 0; k < header.size(); ++k) out << (k ? "," : "") << header[k];
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t k = 0; k < row.size(); ++k) out << (k ? "," : "") << format_number(row[k]);
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

/// Legacy ASCII VTK with cell data: STRUCTURED_POINTS on uniform grids,
/// RECTILINEAR_GRID otherwise.
inline void write_vtk(const std::filesystem::path& path, const StructuredGrid& grid,
                      const std::vector<ScalarField>& fields, const std::vector<std::string>& names,
                      const Provenance& prov, double t) {
  if (names.size() != fields.size()) throw InvalidArgument("write_vtk: one name per field required");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "# vtk DataFile Version 3.0\n";
  out << "rdsim t=" << format_number(t) << ' ' << prov.line() << '\n';
  out << "ASCII\n";
  const std::size_t nx = grid.cells(0);
  const std::size_t ny = grid.cells(1);
  if (grid.uniform()) {
    out << "DATASET STRUCTURED_POINTS\n";
    out << "DIMENSIONS " << nx + 1 << ' ' << (grid.dim() > 1 ? ny + 1 : 1) << " 1\n";
    out << "ORIGIN " << format_number(grid.lower(0)) << ' ' << format_number(grid.dim() > 1 ? grid.lower(1) : 0.0)
        << " 0\n";
    out << "SPACING " << format_number(grid.width(0, 0)) << ' '
        << format_number(grid.dim() > 1 ? grid.width(1, 0) : 1.0) << " 1\n";
  } else {
    out << "DATASET RECTILINEAR_GRID\n";
    out << "DIMENSIONS " << nx + 1 << ' ' << (grid.dim() > 1 ? ny + 1 : 1) << " 1\n";
    for (int a = 0; a < 2; ++a) {
      const char* label = a == 0 ? "X_COORDINATES" : "Y_COORDINATES";
      if (a < grid.dim()) {
        out << label << ' ' << grid.cells(a) + 1 << " double\n";
        double edge = grid.lower(a);
        out << format_number(edge);
        for (double h : grid.widths(a)) out << ' ' << format_number(edge += h);
        out << '\n';
      } else {
        out << label << " 1 double\n0\n";
      }
    }
    out << "Z_COORDINATES 1 double\n0\n";
  }
  out << "CELL_DATA " << grid.size() << '\n';
  for (std::size_t k = 0; k < fields.size(); ++k) {
    grid.check_field(fields[k], "write_vtk");
    out << "SCALARS " << names[k] << " double 1\nLOOKUP_TABLE default\n";
    for (double v : fields[k]) out << format_number(v) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace rdsim
