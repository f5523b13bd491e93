#pragma once

// JSON run configuration. Every block is validated before any compute and
// unknown keys are rejected. to_json() emits the canonical form with all
// defaults filled in; parsing that form reproduces it exactly.

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "rdsim/epi.hpp"
#include "rdsim/error.hpp"
#include "rdsim/expression.hpp"
#include "rdsim/grid.hpp"
#include "rdsim/integrator.hpp"
#include "rdsim/io.hpp"
#include "rdsim/reaction.hpp"

namespace rdsim {

using Json = nlohmann::ordered_json;

/// A coefficient given as a number, an expression in x, y (and t), or a
/// per-cell table "csv:PATH" / "csv:PATH#COLUMN" with rows "cell,value,...".
using FieldExpr = std::string;
using AxisExprs = std::array<FieldExpr, 2>;

struct GridConfig {
  int dim = 1;
  std::vector<std::size_t> cells{64};
  std::vector<double> lower{0.0};
  std::vector<double> upper{1.0};
  /// Explicit per-axis widths; when present they override cells and upper.
  std::vector<std::vector<double>> widths;
};

struct StructureConfig {
  std::vector<double> mass_weights;
  double K1 = 0.0;
  double K2 = 0.0;
  std::vector<std::vector<double>> sum_matrix;
  double intermediate_order = 1.0;
  double growth_order = 1.0;
  double growth_constant = 1.0;
};

struct SystemConfig {
  /// "reversible", "zero", "linear", or empty when expressions are given.
  std::string builtin;
  std::size_t species = 0;
  double rate = -1.0;
  std::vector<std::string> expressions;
  std::optional<StructureConfig> structure;
};

struct CoefficientBlock {
  double start = 0.0;
  std::vector<AxisExprs> diffusion;
  std::vector<AxisExprs> drift;
};

struct InitialConfig {
  std::vector<FieldExpr> fields;
  bool random = false;
  double low = 0.0;
  double high = 1.0;
};

struct EnergyConfig {
  int p = 2;
  /// Empty means: select theta automatically.
  std::vector<double> theta;
};

struct DiagnosticsConfig {
  std::vector<double> p_list{1.0, 2.0};
  std::vector<EnergyConfig> energy;
  double window = 2.0;
  double growth_tolerance = 0.05;
  bool vtk = false;
  bool checkpoint = true;
};

struct ScenarioConfig {
  std::string type = "sir-b";
  double gamma = 0.1;
  double lambda = 0.2;
  double alpha = 0.3;
  double delta = 0.5;
  FieldExpr sigma_I = "1";
  FieldExpr sigma_B = "1";
  FieldExpr phi = "0.25";
  std::array<AxisExprs, 4> diffusion;
  std::vector<std::pair<double, AxisExprs>> drift;
  double diffusion_lower = 0.0;
  double drift_upper = std::numeric_limits<double>::infinity();
  double sigma_lower = 0.0;
  double sigma_upper = std::numeric_limits<double>::infinity();
  std::vector<double> decay_p{1.0, 2.0};
};

struct CheckConfig {
  std::vector<double> radii{10.0, 20.0, 40.0, 80.0};
  std::size_t draws_per_radius = 10000;
  std::size_t diffusion_samples = 16;
  int p = 2;
  int max_doublings = 20;
};

struct RunConfig {
  std::uint64_t seed = 0;
  GridConfig grid;
  SystemConfig system;
  std::vector<CoefficientBlock> coefficients;
  std::vector<std::array<BoundaryCondition, 4>> boundary;
  InitialConfig initial;
  SolverConfig solver;
  double epsilon = 1e-8;
  DiagnosticsConfig diagnostics;
  std::optional<ScenarioConfig> scenario;
  CheckConfig check;
  std::vector<double> epsilon_study{1e-2, 1e-3, 1e-4};
  std::string output_dir = "out";
  /// Directory that relative csv: paths resolve against; not echoed.
  std::filesystem::path base_dir;

  std::size_t species() const { return scenario ? 4 : (system.expressions.empty() ? system.species : system.expressions.size()); }
};

namespace config_detail {

[[noreturn]] inline void fail(const std::string& path, const std::string& msg) {
  throw ConfigError(path + ": " + msg);
}

inline void allow_keys(const Json& obj, const std::string& path, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) fail(path, "expected an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : obj.items()) {
    if (!allowed.count(k)) fail(path, "unknown key '" + k + "'");
  }
}

inline double number(const Json& j, const std::string& path) {
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
  }
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

inline double number_or(const Json& obj, const char* key, double fallback, const std::string& path) {
  return obj.contains(key) ? number(obj.at(key), path + "." + key) : fallback;
}

inline std::size_t count(const Json& j, const std::string& path) {
  if (!j.is_number_integer() || j.get<long long>() < 0) fail(path, "expected a non-negative integer");
  return j.get<std::size_t>();
}

inline std::vector<double> numbers(const Json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(number(j[k], path + "[" + std::to_string(k) + "]"));
  return out;
}

/// Numbers are stored in their shortest round-tripping text form.
inline FieldExpr field_expr(const Json& j, const std::string& path) {
  if (j.is_number()) return format_number(j.get<double>());
  if (!j.is_string()) fail(path, "expected a number or an expression string");
  const auto s = j.get<std::string>();
  if (s.rfind("csv:", 0) != 0) Expression::parse(s, 0);
  return s;
}

/// "d" (isotropic) or ["dx", "dy"].
inline AxisExprs axis_exprs(const Json& j, const std::string& path) {
  if (j.is_array()) {
    if (j.size() != 2) fail(path, "expected two per-axis entries");
    return {field_expr(j[0], path + "[0]"), field_expr(j[1], path + "[1]")};
  }
  const auto e = field_expr(j, path);
  return {e, e};
}

/// An array of length m gives one entry per species; anything else (a
/// number, an expression, or an [x, y] pair) applies to every species.
inline std::vector<AxisExprs> per_species(const Json& j, std::size_t m, const std::string& path) {
  std::vector<AxisExprs> out;
  if (j.is_array() && j.size() == m) {
    for (std::size_t k = 0; k < m; ++k) out.push_back(axis_exprs(j[k], path + "[" + std::to_string(k) + "]"));
  } else {
    out.assign(m, axis_exprs(j, path));
  }
  return out;
}

inline BoundaryCondition boundary_condition(const Json& j, const std::string& path) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "dirichlet") return BoundaryCondition::dirichlet();
    if (s == "no-flux") return BoundaryCondition::no_flux();
    fail(path, "unknown boundary condition '" + s + "'");
  }
  allow_keys(j, path, {"robin"});
  if (!j.contains("robin")) fail(path, "expected \"dirichlet\", \"no-flux\" or {\"robin\": alpha}");
  const double a = number(j.at("robin"), path + ".robin");
  if (!(a >= 0.0)) fail(path, "Robin alpha must be >= 0");
  return BoundaryCondition::robin(a);
}

inline Json boundary_json(const BoundaryCondition& bc) {
  switch (bc.kind) {
    case BoundaryCondition::Kind::Dirichlet: return "dirichlet";
    case BoundaryCondition::Kind::NoFluxWithDrift: return "no-flux";
    case BoundaryCondition::Kind::Robin: return Json{{"robin", bc.alpha}};
  }
  return nullptr;
}

inline Json number_json(double v) {
  if (std::isinf(v)) return "inf";
  return v;
}

inline Json axis_json(const AxisExprs& a) { return Json::array({a[0], a[1]}); }

inline Json axis_list_json(const std::vector<AxisExprs>& v) {
  Json out = Json::array();
  for (const auto& a : v) out.push_back(axis_json(a));
  return out;
}

inline std::array<BoundaryCondition, 4> sides(const Json& j, const std::string& path) {
  if (j.is_object() && !j.contains("robin")) {
    allow_keys(j, path, {"xlo", "xhi", "ylo", "yhi"});
    std::array<BoundaryCondition, 4> out;
    const char* names[4] = {"xlo", "xhi", "ylo", "yhi"};
    for (int s = 0; s < 4; ++s) {
      if (!j.contains(names[s])) fail(path, std::string("missing side '") + names[s] + "'");
      out[s] = boundary_condition(j.at(names[s]), path + "." + names[s]);
    }
    return out;
  }
  const auto bc = boundary_condition(j, path);
  return {bc, bc, bc, bc};
}

}  // namespace config_detail

inline RunConfig parse_config(const Json& root) {
  using namespace config_detail;
  allow_keys(root, "config", {"seed", "grid", "system", "coefficients", "boundary", "initial", "solver", "diagnostics",
                              "scenario", "check", "epsilon_study", "output"});
  RunConfig cfg;
  if (root.contains("seed")) cfg.seed = static_cast<std::uint64_t>(count(root.at("seed"), "seed"));

  // grid
  if (!root.contains("grid")) fail("config", "missing 'grid' block");
  {
    const auto& g = root.at("grid");
    allow_keys(g, "grid", {"dim", "cells", "lower", "upper", "widths"});
    cfg.grid.dim = g.contains("dim") ? static_cast<int>(count(g.at("dim"), "grid.dim")) : 1;
    if (cfg.grid.dim < 1 || cfg.grid.dim > 2) fail("grid.dim", "must be 1 or 2");
    const auto d = static_cast<std::size_t>(cfg.grid.dim);
    cfg.grid.lower = g.contains("lower") ? numbers(g.at("lower"), "grid.lower") : std::vector<double>(d, 0.0);
    if (cfg.grid.lower.size() != d) fail("grid.lower", "needs one entry per axis");
    if (g.contains("widths")) {
      const auto& w = g.at("widths");
      if (!w.is_array() || w.size() != d) fail("grid.widths", "needs one width list per axis");
      cfg.grid.widths.clear();
      cfg.grid.cells.clear();
      cfg.grid.upper.clear();
      for (std::size_t a = 0; a < d; ++a) {
        cfg.grid.widths.push_back(numbers(w[a], "grid.widths[" + std::to_string(a) + "]"));
        cfg.grid.cells.push_back(cfg.grid.widths.back().size());
        double u = cfg.grid.lower[a];
        for (double h : cfg.grid.widths.back()) u += h;
        cfg.grid.upper.push_back(u);
      }
    } else {
      if (!g.contains("cells")) fail("grid", "needs 'cells' or 'widths'");
      const auto& c = g.at("cells");
      cfg.grid.cells.clear();
      if (c.is_array()) {
        for (std::size_t a = 0; a < c.size(); ++a) cfg.grid.cells.push_back(count(c[a], "grid.cells"));
      } else {
        cfg.grid.cells.assign(d, count(c, "grid.cells"));
      }
      if (cfg.grid.cells.size() != d) fail("grid.cells", "needs one entry per axis");
      cfg.grid.upper = g.contains("upper") ? numbers(g.at("upper"), "grid.upper") : std::vector<double>(d, 1.0);
      if (cfg.grid.upper.size() != d) fail("grid.upper", "needs one entry per axis");
    }
  }

  // scenario or system
  if (root.contains("scenario")) {
    const auto& s = root.at("scenario");
    allow_keys(s, "scenario", {"type", "gamma", "lambda", "alpha", "delta", "sigma_I", "sigma_B", "phi", "diffusion",
                               "drift", "bounds", "decay_p"});
    ScenarioConfig sc;
    if (s.contains("type")) {
      if (!s.at("type").is_string() || s.at("type").get<std::string>() != "sir-b") fail("scenario.type", "only \"sir-b\" is supported");
    }
    sc.gamma = number_or(s, "gamma", sc.gamma, "scenario");
    sc.lambda = number_or(s, "lambda", sc.lambda, "scenario");
    sc.alpha = number_or(s, "alpha", sc.alpha, "scenario");
    sc.delta = number_or(s, "delta", sc.delta, "scenario");
    if (s.contains("sigma_I")) sc.sigma_I = field_expr(s.at("sigma_I"), "scenario.sigma_I");
    if (s.contains("sigma_B")) sc.sigma_B = field_expr(s.at("sigma_B"), "scenario.sigma_B");
    if (s.contains("phi")) sc.phi = field_expr(s.at("phi"), "scenario.phi");
    if (!s.contains("diffusion")) fail("scenario", "missing 'diffusion'");
    const auto d = per_species(s.at("diffusion"), 4, "scenario.diffusion");
    for (std::size_t k = 0; k < 4; ++k) sc.diffusion[k] = d[k];
    if (s.contains("drift")) {
      const auto& dr = s.at("drift");
      if (!dr.is_array()) fail("scenario.drift", "expected a list of {start, c} entries");
      for (std::size_t k = 0; k < dr.size(); ++k) {
        const std::string p = "scenario.drift[" + std::to_string(k) + "]";
        allow_keys(dr[k], p, {"start", "c"});
        if (!dr[k].contains("c")) fail(p, "missing 'c'");
        sc.drift.push_back({number_or(dr[k], "start", 0.0, p), axis_exprs(dr[k].at("c"), p + ".c")});
      }
    } else {
      sc.drift.push_back({0.0, {"0", "0"}});
    }
    if (sc.drift.empty() || sc.drift.front().first != 0.0) fail("scenario.drift", "first entry must start at 0");
    if (s.contains("bounds")) {
      const auto& b = s.at("bounds");
      allow_keys(b, "scenario.bounds", {"diffusion_lower", "drift_upper", "sigma_lower", "sigma_upper"});
      sc.diffusion_lower = number_or(b, "diffusion_lower", sc.diffusion_lower, "scenario.bounds");
      sc.drift_upper = number_or(b, "drift_upper", sc.drift_upper, "scenario.bounds");
      sc.sigma_lower = number_or(b, "sigma_lower", sc.sigma_lower, "scenario.bounds");
      sc.sigma_upper = number_or(b, "sigma_upper", sc.sigma_upper, "scenario.bounds");
    }
    if (s.contains("decay_p")) sc.decay_p = numbers(s.at("decay_p"), "scenario.decay_p");
    cfg.scenario = sc;
    if (root.contains("system") || root.contains("coefficients") || root.contains("boundary")) {
      fail("config", "'scenario' defines the system, coefficients and boundary; remove those blocks");
    }
  } else {
    if (!root.contains("system")) fail("config", "missing 'system' block");
    const auto& s = root.at("system");
    allow_keys(s, "system", {"builtin", "species", "rate", "expressions", "structure"});
    if (s.contains("builtin") == s.contains("expressions")) fail("system", "give exactly one of 'builtin' or 'expressions'");
    if (s.contains("builtin")) {
      if (!s.at("builtin").is_string()) fail("system.builtin", "expected a name");
      cfg.system.builtin = s.at("builtin").get<std::string>();
      if (cfg.system.builtin == "reversible") {
        cfg.system.species = 2;
        if (s.contains("species") && count(s.at("species"), "system.species") != 2) fail("system.species", "reversible has 2 species");
      } else if (cfg.system.builtin == "zero" || cfg.system.builtin == "linear") {
        cfg.system.species = s.contains("species") ? count(s.at("species"), "system.species") : 1;
        if (cfg.system.species == 0) fail("system.species", "must be >= 1");
        if (cfg.system.builtin == "linear") cfg.system.rate = number_or(s, "rate", -1.0, "system");
      } else {
        fail("system.builtin", "unknown builtin '" + cfg.system.builtin + "'");
      }
      if (cfg.system.builtin != "linear" && s.contains("rate")) fail("system.rate", "only the linear builtin takes a rate");
    } else {
      const auto& e = s.at("expressions");
      if (!e.is_array() || e.empty()) fail("system.expressions", "expected a non-empty list");
      for (std::size_t k = 0; k < e.size(); ++k) {
        if (!e[k].is_string()) fail("system.expressions", "entries must be strings");
        cfg.system.expressions.push_back(e[k].get<std::string>());
        Expression::parse(cfg.system.expressions.back(), e.size());
      }
      cfg.system.species = e.size();
      if (s.contains("species") && count(s.at("species"), "system.species") != e.size()) {
        fail("system.species", "does not match the number of expressions");
      }
    }
    if (s.contains("structure")) {
      const auto& st = s.at("structure");
      allow_keys(st, "system.structure",
                 {"mass_weights", "K1", "K2", "sum_matrix", "intermediate_order", "growth_order", "growth_constant"});
      StructureConfig sc;
      const std::size_t m = cfg.system.species;
      sc.mass_weights = st.contains("mass_weights") ? numbers(st.at("mass_weights"), "system.structure.mass_weights")
                                                    : std::vector<double>(m, 1.0);
      sc.K1 = number_or(st, "K1", 0.0, "system.structure");
      sc.K2 = number_or(st, "K2", 0.0, "system.structure");
      if (st.contains("sum_matrix")) {
        const auto& a = st.at("sum_matrix");
        if (!a.is_array()) fail("system.structure.sum_matrix", "expected rows");
        for (std::size_t r = 0; r < a.size(); ++r) sc.sum_matrix.push_back(numbers(a[r], "system.structure.sum_matrix"));
      } else {
        for (std::size_t r = 0; r < m; ++r) {
          sc.sum_matrix.emplace_back(m, 0.0);
          sc.sum_matrix[r][r] = 1.0;
        }
      }
      sc.intermediate_order = number_or(st, "intermediate_order", 1.0, "system.structure");
      sc.growth_order = number_or(st, "growth_order", 1.0, "system.structure");
      sc.growth_constant = number_or(st, "growth_constant", 1.0, "system.structure");
      cfg.system.structure = sc;
    }
  }
  const std::size_t m = cfg.species();

  // coefficients
  if (!cfg.scenario) {
    if (!root.contains("coefficients")) fail("config", "missing 'coefficients' block");
    const auto& c = root.at("coefficients");
    allow_keys(c, "coefficients", {"diffusion", "drift", "schedule"});
    auto block = [&](const Json& j, const std::string& path, double start) {
      CoefficientBlock b;
      b.start = start;
      if (!j.contains("diffusion")) fail(path, "missing 'diffusion'");
      b.diffusion = per_species(j.at("diffusion"), m, path + ".diffusion");
      b.drift = j.contains("drift") ? per_species(j.at("drift"), m, path + ".drift")
                                    : std::vector<AxisExprs>(m, AxisExprs{"0", "0"});
      return b;
    };
    cfg.coefficients.push_back(block(c, "coefficients", 0.0));
    if (c.contains("schedule")) {
      const auto& s = c.at("schedule");
      if (!s.is_array()) fail("coefficients.schedule", "expected a list");
      for (std::size_t k = 0; k < s.size(); ++k) {
        const std::string p = "coefficients.schedule[" + std::to_string(k) + "]";
        allow_keys(s[k], p, {"start", "diffusion", "drift"});
        if (!s[k].contains("start")) fail(p, "missing 'start'");
        const double start = number(s[k].at("start"), p + ".start");
        if (!(start > cfg.coefficients.back().start)) fail(p, "start times must increase");
        cfg.coefficients.push_back(block(s[k], p, start));
      }
    }

    // boundary
    if (!root.contains("boundary")) fail("config", "missing 'boundary' block");
    const auto& b = root.at("boundary");
    if (b.is_array()) {
      if (b.size() != m) fail("boundary", "expected one entry per species");
      for (std::size_t k = 0; k < m; ++k) cfg.boundary.push_back(sides(b[k], "boundary[" + std::to_string(k) + "]"));
    } else {
      cfg.boundary.assign(m, sides(b, "boundary"));
    }
  }

  // initial
  if (!root.contains("initial")) fail("config", "missing 'initial' block");
  {
    const auto& in = root.at("initial");
    allow_keys(in, "initial", {"fields", "random"});
    if (in.contains("fields") == in.contains("random")) fail("initial", "give exactly one of 'fields' or 'random'");
    if (in.contains("fields")) {
      const auto& f = in.at("fields");
      if (f.is_array()) {
        if (f.size() != m) fail("initial.fields", "expected one entry per species");
        for (std::size_t k = 0; k < m; ++k) cfg.initial.fields.push_back(field_expr(f[k], "initial.fields"));
      } else {
        cfg.initial.fields.assign(m, field_expr(f, "initial.fields"));
      }
    } else {
      const auto& r = in.at("random");
      allow_keys(r, "initial.random", {"low", "high"});
      cfg.initial.random = true;
      cfg.initial.low = number_or(r, "low", 0.0, "initial.random");
      cfg.initial.high = number_or(r, "high", 1.0, "initial.random");
      if (!(cfg.initial.low >= 0.0) || !(cfg.initial.high >= cfg.initial.low)) {
        fail("initial.random", "need 0 <= low <= high");
      }
    }
  }

  // solver
  if (root.contains("solver")) {
    const auto& s = root.at("solver");
    allow_keys(s, "solver", {"dt", "t_end", "epsilon", "linear_tolerance", "max_linear_iterations",
                             "positivity_tolerance", "max_halvings", "output_interval"});
    cfg.solver.dt = number_or(s, "dt", cfg.solver.dt, "solver");
    cfg.solver.t_end = number_or(s, "t_end", cfg.solver.t_end, "solver");
    cfg.epsilon = number_or(s, "epsilon", cfg.epsilon, "solver");
    cfg.solver.linear_tolerance = number_or(s, "linear_tolerance", cfg.solver.linear_tolerance, "solver");
    if (s.contains("max_linear_iterations")) {
      cfg.solver.max_linear_iterations = static_cast<int>(count(s.at("max_linear_iterations"), "solver.max_linear_iterations"));
    }
    cfg.solver.positivity_tolerance = number_or(s, "positivity_tolerance", cfg.solver.positivity_tolerance, "solver");
    if (s.contains("max_halvings")) cfg.solver.max_halvings = static_cast<int>(count(s.at("max_halvings"), "solver.max_halvings"));
    cfg.solver.output_interval = number_or(s, "output_interval", cfg.solver.output_interval, "solver");
  }
  try {
    cfg.solver.validate();
    TruncationParam check(cfg.epsilon);
  } catch (const InvalidArgument& e) {
    fail("solver", e.what());
  }

  // diagnostics
  if (root.contains("diagnostics")) {
    const auto& d = root.at("diagnostics");
    allow_keys(d, "diagnostics", {"p_list", "energy", "window", "growth_tolerance", "vtk", "checkpoint"});
    if (d.contains("p_list")) cfg.diagnostics.p_list = numbers(d.at("p_list"), "diagnostics.p_list");
    for (double p : cfg.diagnostics.p_list) {
      if (!(p >= 1.0)) fail("diagnostics.p_list", "exponents must be >= 1");
    }
    if (d.contains("energy")) {
      const auto& e = d.at("energy");
      if (!e.is_array()) fail("diagnostics.energy", "expected a list");
      for (std::size_t k = 0; k < e.size(); ++k) {
        const std::string p = "diagnostics.energy[" + std::to_string(k) + "]";
        allow_keys(e[k], p, {"p", "theta"});
        EnergyConfig ec;
        if (!e[k].contains("p")) fail(p, "missing 'p'");
        ec.p = static_cast<int>(count(e[k].at("p"), p + ".p"));
        if (ec.p < 1) fail(p + ".p", "must be >= 1");
        if (e[k].contains("theta")) {
          const auto& th = e[k].at("theta");
          if (th.is_string() && th.get<std::string>() == "auto") {
          } else {
            ec.theta = numbers(th, p + ".theta");
            if (ec.theta.size() != m) fail(p + ".theta", "expected one entry per species");
            for (double t : ec.theta) {
              if (!(t > 0.0)) fail(p + ".theta", "entries must be > 0");
            }
          }
        }
        cfg.diagnostics.energy.push_back(ec);
      }
    }
    cfg.diagnostics.window = number_or(d, "window", cfg.diagnostics.window, "diagnostics");
    if (!(cfg.diagnostics.window > 0.0)) fail("diagnostics.window", "must be > 0");
    cfg.diagnostics.growth_tolerance = number_or(d, "growth_tolerance", cfg.diagnostics.growth_tolerance, "diagnostics");
    auto flag = [&](const char* key, bool& out) {
      if (!d.contains(key)) return;
      if (!d.at(key).is_boolean()) fail(std::string("diagnostics.") + key, "expected true or false");
      out = d.at(key).get<bool>();
    };
    flag("vtk", cfg.diagnostics.vtk);
    flag("checkpoint", cfg.diagnostics.checkpoint);
  }

  // check
  if (root.contains("check")) {
    const auto& c = root.at("check");
    allow_keys(c, "check", {"radii", "draws_per_radius", "diffusion_samples", "p", "max_doublings"});
    if (c.contains("radii")) cfg.check.radii = numbers(c.at("radii"), "check.radii");
    if (cfg.check.radii.empty()) fail("check.radii", "must not be empty");
    if (c.contains("draws_per_radius")) cfg.check.draws_per_radius = count(c.at("draws_per_radius"), "check.draws_per_radius");
    if (c.contains("diffusion_samples")) cfg.check.diffusion_samples = count(c.at("diffusion_samples"), "check.diffusion_samples");
    if (c.contains("p")) cfg.check.p = static_cast<int>(count(c.at("p"), "check.p"));
    if (cfg.check.p < 1) fail("check.p", "must be >= 1");
    if (c.contains("max_doublings")) cfg.check.max_doublings = static_cast<int>(count(c.at("max_doublings"), "check.max_doublings"));
  }

  if (root.contains("epsilon_study")) {
    const auto& e = root.at("epsilon_study");
    allow_keys(e, "epsilon_study", {"epsilons"});
    if (e.contains("epsilons")) cfg.epsilon_study = numbers(e.at("epsilons"), "epsilon_study.epsilons");
    for (double v : cfg.epsilon_study) {
      if (!(v > 0.0)) fail("epsilon_study.epsilons", "entries must be > 0");
    }
  }

  if (root.contains("output")) {
    const auto& o = root.at("output");
    allow_keys(o, "output", {"dir"});
    if (o.contains("dir")) {
      if (!o.at("dir").is_string()) fail("output.dir", "expected a path");
      cfg.output_dir = o.at("dir").get<std::string>();
    }
  }
  return cfg;
}

inline RunConfig parse_config_text(const std::string& text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: malformed JSON: ") + e.what());
  }
  return parse_config(root);
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig cfg = parse_config_text(ss.str());
  cfg.base_dir = path.parent_path();
  return cfg;
}

/// Canonical echo: every key explicit, in a fixed order.
inline Json to_json(const RunConfig& cfg) {
  using namespace config_detail;
  Json root;
  root["seed"] = cfg.seed;
  {
    Json g;
    g["dim"] = cfg.grid.dim;
    g["lower"] = cfg.grid.lower;
    if (!cfg.grid.widths.empty()) {
      g["widths"] = cfg.grid.widths;
    } else {
      g["cells"] = cfg.grid.cells;
      g["upper"] = cfg.grid.upper;
    }
    root["grid"] = g;
  }
  const std::size_t m = cfg.species();
  if (cfg.scenario) {
    const auto& s = *cfg.scenario;
    Json j;
    j["type"] = s.type;
    j["gamma"] = s.gamma;
    j["lambda"] = s.lambda;
    j["alpha"] = s.alpha;
    j["delta"] = s.delta;
    j["sigma_I"] = s.sigma_I;
    j["sigma_B"] = s.sigma_B;
    j["phi"] = s.phi;
    j["diffusion"] = axis_list_json({s.diffusion.begin(), s.diffusion.end()});
    j["drift"] = Json::array();
    for (const auto& [start, c] : s.drift) j["drift"].push_back(Json{{"start", start}, {"c", axis_json(c)}});
    j["bounds"] = Json{{"diffusion_lower", number_json(s.diffusion_lower)},
                       {"drift_upper", number_json(s.drift_upper)},
                       {"sigma_lower", number_json(s.sigma_lower)},
                       {"sigma_upper", number_json(s.sigma_upper)}};
    j["decay_p"] = s.decay_p;
    root["scenario"] = j;
  } else {
    Json s;
    if (!cfg.system.builtin.empty()) {
      s["builtin"] = cfg.system.builtin;
      s["species"] = cfg.system.species;
      if (cfg.system.builtin == "linear") s["rate"] = cfg.system.rate;
    } else {
      s["expressions"] = cfg.system.expressions;
    }
    if (cfg.system.structure) {
      const auto& st = *cfg.system.structure;
      s["structure"] = Json{{"mass_weights", st.mass_weights},
                            {"K1", st.K1},
                            {"K2", st.K2},
                            {"sum_matrix", st.sum_matrix},
                            {"intermediate_order", st.intermediate_order},
                            {"growth_order", st.growth_order},
                            {"growth_constant", st.growth_constant}};
    }
    root["system"] = s;

    Json c;
    c["diffusion"] = axis_list_json(cfg.coefficients.front().diffusion);
    c["drift"] = axis_list_json(cfg.coefficients.front().drift);
    if (cfg.coefficients.size() > 1) {
      c["schedule"] = Json::array();
      for (std::size_t k = 1; k < cfg.coefficients.size(); ++k) {
        c["schedule"].push_back(Json{{"start", cfg.coefficients[k].start},
                                     {"diffusion", axis_list_json(cfg.coefficients[k].diffusion)},
                                     {"drift", axis_list_json(cfg.coefficients[k].drift)}});
      }
    }
    root["coefficients"] = c;

    Json b = Json::array();
    for (const auto& sd : cfg.boundary) {
      b.push_back(Json{{"xlo", boundary_json(sd[0])},
                       {"xhi", boundary_json(sd[1])},
                       {"ylo", boundary_json(sd[2])},
                       {"yhi", boundary_json(sd[3])}});
    }
    root["boundary"] = b;
  }
  (void)m;
  if (cfg.initial.random) {
    root["initial"] = Json{{"random", Json{{"low", cfg.initial.low}, {"high", cfg.initial.high}}}};
  } else {
    root["initial"] = Json{{"fields", cfg.initial.fields}};
  }
  root["solver"] = Json{{"dt", cfg.solver.dt},
                        {"t_end", cfg.solver.t_end},
                        {"epsilon", cfg.epsilon},
                        {"linear_tolerance", cfg.solver.linear_tolerance},
                        {"max_linear_iterations", cfg.solver.max_linear_iterations},
                        {"positivity_tolerance", cfg.solver.positivity_tolerance},
                        {"max_halvings", cfg.solver.max_halvings},
                        {"output_interval", cfg.solver.output_interval}};
  {
    Json e = Json::array();
    for (const auto& ec : cfg.diagnostics.energy) {
      e.push_back(Json{{"p", ec.p}, {"theta", ec.theta.empty() ? Json("auto") : Json(ec.theta)}});
    }
    root["diagnostics"] = Json{{"p_list", cfg.diagnostics.p_list},
                               {"energy", e},
                               {"window", cfg.diagnostics.window},
                               {"growth_tolerance", cfg.diagnostics.growth_tolerance},
                               {"vtk", cfg.diagnostics.vtk},
                               {"checkpoint", cfg.diagnostics.checkpoint}};
  }
  root["check"] = Json{{"radii", cfg.check.radii},
                       {"draws_per_radius", cfg.check.draws_per_radius},
                       {"diffusion_samples", cfg.check.diffusion_samples},
                       {"p", cfg.check.p},
                       {"max_doublings", cfg.check.max_doublings}};
  root["epsilon_study"] = Json{{"epsilons", cfg.epsilon_study}};
  root["output"] = Json{{"dir", cfg.output_dir}};
  return root;
}

inline std::string canonical_echo(const RunConfig& cfg) { return to_json(cfg).dump(2); }

inline std::uint64_t config_hash(const RunConfig& cfg) { return fnv1a(to_json(cfg).dump()); }

// ---------------------------------------------------------------------------
// Building the problem

namespace config_detail {

/// Column `column` (1-based, after the cell index) of a "cell,value,..." table.
inline std::vector<double> csv_column(const std::filesystem::path& path, std::size_t column, std::size_t cells,
                                      const std::string& where) {
  std::ifstream in(path);
  if (!in) fail(where, "cannot read coefficient table " + path.string());
  std::vector<double> out(cells, std::numeric_limits<double>::quiet_NaN());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ls(line);
    std::string item;
    while (std::getline(ls, item, ',')) cols.push_back(item);
    // Header rows start with a non-digit.
    if (cols.empty() || cols[0].empty() || !std::isdigit(static_cast<unsigned char>(cols[0][0]))) continue;
    if (cols.size() <= column) fail(where, path.string() + ":" + std::to_string(lineno) + ": missing column");
    std::size_t cell = 0;
    double v = 0.0;
    try {
      cell = std::stoul(cols[0]);
      v = std::stod(cols[column]);
    } catch (const std::exception&) {
      fail(where, path.string() + ":" + std::to_string(lineno) + ": malformed row");
    }
    if (cell >= cells) fail(where, path.string() + ":" + std::to_string(lineno) + ": cell index out of range");
    out[cell] = v;
  }
  for (std::size_t c = 0; c < cells; ++c) {
    if (!std::isfinite(out[c])) fail(where, path.string() + ": no finite value for cell " + std::to_string(c));
  }
  return out;
}

inline std::vector<double> cell_values(const StructuredGrid& grid, const FieldExpr& src, double t,
                                       const std::string& path, const std::filesystem::path& base_dir = {}) {
  if (src.rfind("csv:", 0) == 0) {
    std::string spec = src.substr(4);
    std::size_t column = 1;
    if (const auto hash = spec.rfind('#'); hash != std::string::npos) {
      try {
        column = std::stoul(spec.substr(hash + 1));
      } catch (const std::exception&) {
        fail(path, "bad column in '" + src + "'");
      }
      spec = spec.substr(0, hash);
    }
    if (column == 0) fail(path, "csv columns are 1-based");
    std::filesystem::path file(spec);
    if (file.is_relative() && !base_dir.empty()) file = base_dir / file;
    return csv_column(file, column, grid.size(), path);
  }
  const auto e = Expression::parse(src, 0);
  std::vector<double> out(grid.size());
  for (std::size_t c = 0; c < grid.size(); ++c) {
    const auto x = grid.cell_center(c);
    out[c] = e.evaluate({{}, x[0], x[1], t});
    if (!std::isfinite(out[c])) fail(path, "expression '" + src + "' is not finite in cell " + std::to_string(c));
  }
  return out;
}

inline CellVectors cell_vectors(const StructuredGrid& grid, const AxisExprs& src, double t, const std::string& path,
                                const std::filesystem::path& base_dir = {}) {
  const auto a = cell_values(grid, src[0], t, path, base_dir);
  const auto b = src[1] == src[0] ? a : cell_values(grid, src[1], t, path, base_dir);
  CellVectors out(grid.size());
  for (std::size_t c = 0; c < grid.size(); ++c) out[c] = {a[c], b[c]};
  return out;
}

}  // namespace config_detail

inline StructuredGrid build_grid(const GridConfig& g) {
  try {
    if (!g.widths.empty()) return StructuredGrid(g.widths, g.lower);
    if (g.dim == 1) return StructuredGrid::uniform_1d(g.cells[0], g.lower[0], g.upper[0]);
    return StructuredGrid::uniform_2d(g.cells[0], g.cells[1], {g.lower[0], g.lower[1]}, {g.upper[0], g.upper[1]});
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("grid: ") + e.what());
  }
}

inline EpiParams build_epi_params(const ScenarioConfig& s, const StructuredGrid& grid,
                                  const std::filesystem::path& base_dir = {}) {
  using namespace config_detail;
  EpiParams p;
  p.grid = grid;
  for (std::size_t k = 0; k < 4; ++k) p.diffusion[k] = cell_vectors(grid, s.diffusion[k], 0.0, "scenario.diffusion", base_dir);
  for (const auto& [start, c] : s.drift) p.drift.push_back({start, cell_vectors(grid, c, start, "scenario.drift", base_dir)});
  p.sigma_I = cell_values(grid, s.sigma_I, 0.0, "scenario.sigma_I", base_dir);
  p.sigma_B = cell_values(grid, s.sigma_B, 0.0, "scenario.sigma_B", base_dir);
  p.phi = cell_values(grid, s.phi, 0.0, "scenario.phi", base_dir);
  p.gamma = s.gamma;
  p.lambda = s.lambda;
  p.alpha = s.alpha;
  p.delta = s.delta;
  p.diffusion_lower = s.diffusion_lower;
  p.drift_upper = s.drift_upper;
  p.sigma_lower = s.sigma_lower;
  p.sigma_upper = s.sigma_upper;
  return p;
}

inline ReactionSystem build_system(const SystemConfig& s) {
  const std::size_t m = s.species;
  std::optional<ReactionStructure> structure;
  if (s.structure) {
    const auto& sc = *s.structure;
    ReactionStructure st = ReactionStructure::defaults(m);
    st.mass_weights = sc.mass_weights;
    st.K1 = sc.K1;
    st.K2 = sc.K2;
    if (sc.sum_matrix.size() != m) throw ConfigError("system.structure.sum_matrix: expected " + std::to_string(m) + " rows");
    for (std::size_t r = 0; r < m; ++r) {
      if (sc.sum_matrix[r].size() != m) throw ConfigError("system.structure.sum_matrix: rows must have m entries");
      for (std::size_t c = 0; c < m; ++c) st.sum_matrix(r, c) = sc.sum_matrix[r][c];
    }
    st.intermediate_order = sc.intermediate_order;
    st.growth_order = sc.growth_order;
    st.growth_constant = sc.growth_constant;
    structure = std::move(st);
  }
  try {
    ReactionSystem sys = [&] {
      if (s.builtin == "reversible") return builtin_reversible_reaction();
      if (s.builtin == "zero") return builtin_zero(m);
      if (s.builtin == "linear") return builtin_linear(m, s.rate);
      return expression_system(s.expressions, structure ? *structure : ReactionStructure::defaults(m));
    }();
    if (structure && !s.builtin.empty()) sys = sys.with_structure(*structure);
    return sys;
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("system: ") + e.what());
  }
}

/// Everything a command needs, derived from a validated RunConfig.
struct RunSetup {
  TransportProblem problem;
  SimState initial;
  SolverConfig solver;
  std::optional<EpiParams> epi;
  std::vector<std::string> species_names;
  Provenance provenance;
};

inline RunSetup build_setup(const RunConfig& cfg) {
  using namespace config_detail;
  const StructuredGrid grid = build_grid(cfg.grid);
  const std::size_t m = cfg.species();
  std::optional<EpiParams> epi;

  auto problem = [&]() -> TransportProblem {
    if (cfg.scenario) {
      epi = build_epi_params(*cfg.scenario, grid, cfg.base_dir);
      EpiSystem es = build_epi_system(*epi);
      return es.problem(grid);
    }
    ReactionSystem sys = build_system(cfg.system);
    std::vector<CoefficientField> fields;
    CoefficientSchedule schedule;
    for (std::size_t e = 0; e < cfg.coefficients.size(); ++e) {
      const auto& blk = cfg.coefficients[e];
      std::vector<SpeciesCoefficients> sp(m);
      for (std::size_t k = 0; k < m; ++k) {
        sp[k].diffusion = cell_vectors(grid, blk.diffusion[k], blk.start, "coefficients.diffusion", cfg.base_dir);
        sp[k].drift = cell_vectors(grid, blk.drift[k], blk.start, "coefficients.drift", cfg.base_dir);
      }
      if (e == 0) schedule = CoefficientSchedule(CoefficientField(std::move(sp)));
      else schedule.add(blk.start, CoefficientField(std::move(sp)));
    }
    try {
      schedule.validate(grid, m);
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("coefficients: ") + e.what());
    }
    BoundarySpec bc(m, BoundaryCondition::no_flux());
    for (std::size_t k = 0; k < m; ++k)
      for (int s = 0; s < 4; ++s) bc.set(k, static_cast<Side>(s), cfg.boundary[k][s]);
    return TransportProblem{grid, std::move(schedule), std::move(bc), std::move(sys)};
  }();

  SimState initial;
  initial.t = 0.0;
  initial.epsilon = TruncationParam(cfg.epsilon);
  if (cfg.initial.random) {
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> dist(cfg.initial.low, cfg.initial.high);
    initial.fields.assign(m, ScalarField(grid.size()));
    for (auto& f : initial.fields)
      for (double& v : f) v = dist(rng);
  } else {
    for (std::size_t k = 0; k < m; ++k) {
      initial.fields.push_back(cell_values(grid, cfg.initial.fields[k], 0.0, "initial.fields", cfg.base_dir));
      for (double v : initial.fields.back()) {
        if (v < 0.0) fail("initial.fields", "initial data must be non-negative");
      }
    }
  }

  std::vector<std::string> names;
  if (cfg.scenario) {
    names.assign(kEpiSpeciesNames.begin(), kEpiSpeciesNames.end());
  } else {
    for (std::size_t k = 0; k < m; ++k) names.push_back("u" + std::to_string(k + 1));
  }
  return RunSetup{std::move(problem), std::move(initial), cfg.solver, std::move(epi), std::move(names),
                  Provenance{config_hash(cfg), cfg.seed}};
}

}  // namespace rdsim
