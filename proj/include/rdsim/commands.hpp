#pragma once

// Batch commands behind the rdsim executable. Each returns a process exit
// status: 0 success, 2 configuration or input error, 3 hypothesis failure,
// 4 solver failure.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rdsim/config.hpp"
#include "rdsim/diagnostics.hpp"
#include "rdsim/epi.hpp"
#include "rdsim/error.hpp"
#include "rdsim/integrator.hpp"
#include "rdsim/io.hpp"
#include "rdsim/theta_search.hpp"

namespace rdsim {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitHypothesis = 3, kExitSolver = 4 };

struct CommandOptions {
  std::filesystem::path out_dir;
  bool quiet = false;
  std::optional<std::filesystem::path> trajectory;
};

namespace cmd_detail {

inline Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline StateSampler make_sampler(const RunConfig& cfg, const StructuredGrid& grid) {
  SamplerOptions o;
  o.seed = cfg.seed;
  o.radii = cfg.check.radii;
  o.draws_per_radius = cfg.check.draws_per_radius;
  o.domain_lower = {grid.lower(0), grid.dim() > 1 ? grid.lower(1) : 0.0};
  o.domain_upper = {grid.upper(0), grid.dim() > 1 ? grid.upper(1) : 0.0};
  o.t_max = std::max(cfg.solver.t_end, 0.0);
  return StateSampler(o);
}

/// Diagonal diffusion tensors at up to `count` evenly spaced cells of every
/// schedule entry.
inline std::vector<DiffusionSample> diffusion_samples(const TransportProblem& problem, std::size_t count) {
  std::vector<DiffusionSample> out;
  const auto& grid = problem.grid;
  const std::size_t n = grid.size();
  const std::size_t take = std::max<std::size_t>(1, std::min(count, n));
  for (const auto& [start, field] : problem.coefficients.entries()) {
    for (std::size_t s = 0; s < take; ++s) {
      const std::size_t cell = take == 1 ? 0 : s * (n - 1) / (take - 1);
      DiffusionSample sample;
      for (std::size_t k = 0; k < field.species(); ++k) {
        std::vector<double> d(static_cast<std::size_t>(grid.dim()));
        for (int a = 0; a < grid.dim(); ++a) d[a] = field[k].diffusion[cell][a];
        sample.push_back(DenseMatrix::diagonal(d));
      }
      out.push_back(std::move(sample));
    }
  }
  return out;
}

inline Json report_json(const SampleReport& r) {
  Json j;
  j["passed"] = r.passed();
  j["samples_tested"] = r.samples_tested;
  j["violations"] = r.violations.size();
  j["estimated_constant"] = number_or_null(r.estimated_constant);
  Json radii = Json::array();
  for (double v : r.radius_estimates) radii.push_back(number_or_null(v));
  j["radius_estimates"] = radii;
  j["detail"] = r.detail;
  if (!r.violations.empty()) {
    const auto& v = r.violations.front();
    j["first_violation"] = Json{{"u", v.u}, {"residual", number_or_null(v.residual)}};
  }
  return j;
}

inline Json theta_json(const ThetaSelection& s) {
  return Json{{"theta", std::vector<double>(s.theta.entries().begin(), s.theta.entries().end())},
              {"K_estimate", number_or_null(s.K_estimate)},
              {"min_block_eigenvalue", number_or_null(s.min_block_eigenvalue)},
              {"log", s.log}};
}

inline void say(const CommandOptions& opt, const std::string& line) {
  if (!opt.quiet) std::cout << line << '\n';
}

inline std::filesystem::path prepare_out(const RunConfig& cfg, const CommandOptions& opt) {
  auto dir = opt.out_dir.empty() ? std::filesystem::path(cfg.output_dir) : opt.out_dir;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

inline Json provenance_json(const Provenance& p) {
  return Json{{"config_hash", hex64(p.config_hash)}, {"seed", p.seed}};
}

/// Energy specs from the config; automatic theta runs the weight search.
inline std::vector<EnergySpec> energy_specs(const RunConfig& cfg, const RunSetup& setup, Json* log = nullptr) {
  std::vector<EnergyConfig> wanted = cfg.diagnostics.energy;
  if (wanted.empty()) wanted.push_back({cfg.check.p, std::vector<double>(cfg.species(), 1.0)});
  std::vector<EnergySpec> out;
  for (const auto& e : wanted) {
    if (!e.theta.empty()) {
      out.emplace_back(e.p, ThetaVector(e.theta));
      continue;
    }
    const auto sampler = make_sampler(cfg, setup.problem.grid);
    const auto samples = diffusion_samples(setup.problem, cfg.check.diffusion_samples);
    ThetaSearchOptions o;
    o.max_doublings = cfg.check.max_doublings;
    const auto sel = select_theta(setup.problem.system, samples, e.p, sampler, o);
    if (log) (*log).push_back(Json{{"p", e.p}, {"selection", theta_json(sel)}});
    out.emplace_back(e.p, sel.theta);
  }
  return out;
}

inline Json energy_json(const EnergyTrace& trace) {
  Json out = Json::array();
  for (const auto& s : trace.series) {
    const double sup = s.values.empty() ? 0.0 : *std::max_element(s.values.begin(), s.values.end());
    out.push_back(Json{{"p", s.p},
                       {"theta", s.theta},
                       {"initial", s.values.empty() ? 0.0 : s.values.front()},
                       {"sup", sup},
                       {"final", s.values.empty() ? 0.0 : s.values.back()},
                       {"fit",
                        Json{{"fitted", s.fit.fitted},
                             {"delta", s.fit.delta},
                             {"C", s.fit.C},
                             {"plateau", s.fit.plateau}}},
                       {"bounded", s.bounded}});
  }
  return out;
}

inline void write_energy_csv(const std::filesystem::path& path, const EnergyTrace& trace, const Provenance& prov) {
  std::vector<std::string> header{"time"};
  for (const auto& s : trace.series) header.push_back("L" + std::to_string(s.p));
  std::vector<std::vector<double>> rows;
  for (std::size_t r = 0; r < trace.times.size(); ++r) {
    std::vector<double> row{trace.times[r]};
    for (const auto& s : trace.series) row.push_back(s.values[r]);
    rows.push_back(std::move(row));
  }
  write_csv(path, prov, header, rows);
}

inline std::string p_label(double p) { return std::isinf(p) ? "Linf" : "L" + format_number(p); }

}  // namespace cmd_detail

/// Maps library exceptions to exit codes and prints the message.
inline int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const HypothesisError& e) {
    std::cerr << "hypothesis failure " << e.what() << '\n';
    return kExitHypothesis;
  } catch (const SolverError& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return kExitSolver;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InvalidArgument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
}

/// Runs every structural check on the configured system and writes
/// check_report.json. Exit 0 iff all pass.
inline int cmd_check(const RunConfig& cfg, const CommandOptions& opt) {
  using namespace cmd_detail;
  const auto dir = prepare_out(cfg, opt);
  Json report;
  report["provenance"] = provenance_json({config_hash(cfg), cfg.seed});
  std::vector<std::string> failed;

  if (cfg.scenario) {
    const auto params = build_epi_params(*cfg.scenario, build_grid(cfg.grid), cfg.base_dir);
    const auto v = validate_params(params);
    Json epi = Json::array();
    std::vector<std::string> named;
    for (const auto& a : v.violations) {
      if (std::find(named.begin(), named.end(), a.assumption) == named.end()) named.push_back(a.assumption);
      if (epi.size() < 20) epi.push_back(Json{{"assumption", a.assumption}, {"cell", a.cell}, {"detail", a.detail}});
    }
    report["epi_assumptions"] = Json{{"passed", v.ok()}, {"violations", v.violations.size()}, {"first", epi}};
    if (!v.ok()) {
      failed.insert(failed.end(), named.begin(), named.end());
      report["passed"] = false;
      report["failed"] = failed;
      write_text(dir / "check_report.json", report.dump(2) + "\n");
      for (const auto& f : failed) std::cerr << "hypothesis failure (" << f << ")\n";
      return kExitHypothesis;
    }
  }

  const RunSetup setup = build_setup(cfg);
  const auto& system = setup.problem.system;
  const auto sampler = make_sampler(cfg, setup.problem.grid);

  struct Named {
    const char* name;
    SampleReport report;
  };
  std::vector<Named> checks;
  checks.push_back({"F2", check_quasi_positivity(system, sampler)});
  checks.push_back({"F3", check_mass_control(system, sampler)});
  checks.push_back({"F4", check_intermediate_sum(system, sampler)});
  checks.push_back({"F5", check_polynomial_growth(system, sampler)});
  Json hyp;
  for (const auto& c : checks) {
    hyp[c.name] = report_json(c.report);
    if (!c.report.passed()) failed.push_back(c.name);
    say(opt, std::string(c.name) + (c.report.passed() ? " ok" : " FAILED") + "  " + c.report.detail);
  }
  report["hypotheses"] = hyp;

  const auto samples = diffusion_samples(setup.problem, cfg.check.diffusion_samples);
  ThetaSearchOptions o;
  o.max_doublings = cfg.check.max_doublings;
  try {
    const auto sel = select_theta(system, samples, cfg.check.p, sampler, o);
    report["theta_search"] = theta_json(sel);
    report["theta_search"]["passed"] = true;
    say(opt, "theta search ok, min block eigenvalue " + format_number(sel.min_block_eigenvalue));
  } catch (const HypothesisError& e) {
    report["theta_search"] = Json{{"passed", false}, {"hypothesis", e.hypothesis()}, {"detail", e.what()}};
    if (std::find(failed.begin(), failed.end(), e.hypothesis()) == failed.end()) failed.push_back(e.hypothesis());
    say(opt, std::string("theta search FAILED ") + e.what());
  }

  report["passed"] = failed.empty();
  report["failed"] = failed;
  write_text(dir / "check_report.json", report.dump(2) + "\n");
  for (const auto& f : failed) std::cerr << "hypothesis failure (" << f << ")\n";
  return failed.empty() ? kExitOk : kExitHypothesis;
}

/// Runs the configured problem and writes series, budgets, energies, the
/// stored trajectory and (for the epidemic scenario) the decay report.
inline int cmd_run(const RunConfig& cfg, const CommandOptions& opt) {
  using namespace cmd_detail;
  const auto dir = prepare_out(cfg, opt);
  const RunSetup setup = build_setup(cfg);
  const auto& prov = setup.provenance;
  write_text(dir / "config_echo.json", canonical_echo(cfg) + "\n");

  Trajectory traj = run(setup.initial, setup.solver, setup.problem);
  traj.config_echo = to_json(cfg).dump();
  const std::size_t m = traj.species();
  say(opt, "run finished: " + std::to_string(traj.steps.size()) + " steps, " + std::to_string(traj.records.size()) +
               " records, min value " + format_number(traj.min_value));

  // Norm series.
  const auto norms = norm_series(traj, cfg.diagnostics.p_list);
  {
    std::vector<std::string> header{"time"};
    for (std::size_t k = 0; k < m; ++k)
      for (double p : norms.p) header.push_back(setup.species_names[k] + "_" + p_label(p));
    std::vector<std::vector<double>> rows;
    for (std::size_t r = 0; r < norms.times.size(); ++r) {
      std::vector<double> row{norms.times[r]};
      for (std::size_t k = 0; k < m; ++k)
        for (std::size_t j = 0; j < norms.p.size(); ++j) row.push_back(norms.values[k][j][r]);
      rows.push_back(std::move(row));
    }
    write_csv(dir / "series.csv", prov, header, rows);
  }

  // Mass budget.
  const auto budget = mass_budget(traj, setup.problem.system);
  const auto transport = transport_residual(traj, setup.problem.system.structure().mass_weights);
  {
    std::vector<std::vector<double>> rows;
    for (std::size_t r = 0; r < traj.records.size(); ++r) rows.push_back({traj.records[r].t, budget[r], transport[r]});
    write_csv(dir / "mass_budget.csv", prov, {"time", "budget_residual", "transport_residual"}, rows);
  }

  Json summary;
  summary["provenance"] = provenance_json(prov);
  summary["steps"] = traj.steps.size();
  summary["records"] = traj.records.size();
  summary["halvings"] = traj.total_halvings;
  summary["min_value"] = traj.min_value;
  summary["final_time"] = traj.back().t;
  summary["mass_budget_max"] = *std::max_element(budget.begin(), budget.end());
  {
    Json fin;
    for (std::size_t k = 0; k < m; ++k) {
      Json s;
      for (std::size_t j = 0; j < norms.p.size(); ++j) s[p_label(norms.p[j])] = norms.values[k][j].back();
      fin[setup.species_names[k]] = s;
    }
    summary["final_norms"] = fin;
  }

  // Energies.
  {
    Json theta_log = Json::array();
    const auto specs = energy_specs(cfg, setup, &theta_log);
    const auto trace = energy_trace(traj, specs);
    write_energy_csv(dir / "energy.csv", trace, prov);
    summary["energy"] = energy_json(trace);
    if (!theta_log.empty()) summary["theta_search"] = theta_log;
  }

  // Windowed sup norms.
  if (traj.back().t - traj.front().t >= cfg.diagnostics.window) {
    const auto ws = windowed_sup(traj, cfg.diagnostics.window);
    std::vector<std::string> header{"window_start"};
    for (std::size_t k = 0; k < m; ++k) header.push_back(setup.species_names[k] + "_sup");
    std::vector<std::vector<double>> rows;
    for (std::size_t w = 0; w < ws.starts.size(); ++w) {
      std::vector<double> row{ws.starts[w]};
      for (std::size_t k = 0; k < m; ++k) row.push_back(ws.values[k][w]);
      rows.push_back(std::move(row));
    }
    write_csv(dir / "windowed_sup.csv", prov, header, rows);
    summary["windowed_sup"] = Json{{"window", ws.window},
                                   {"windows", ws.starts.size()},
                                   {"no_growth", ws.no_growth(cfg.diagnostics.growth_tolerance)},
                                   {"tolerance", cfg.diagnostics.growth_tolerance}};
  }

  // Epidemic report.
  if (setup.epi) {
    const auto rep = decay_report(traj, *setup.epi, cfg.scenario->decay_p);
    std::vector<std::string> header{"time"};
    for (const auto& d : rep.decay)
      for (double p : rep.p) header.push_back(d.name + "_" + p_label(p));
    header.push_back("s_deviation_L2");
    header.push_back("conservation_residual");
    std::vector<std::vector<double>> rows;
    for (std::size_t r = 0; r < rep.times.size(); ++r) {
      std::vector<double> row{rep.times[r]};
      for (const auto& d : rep.decay)
        for (const auto& series : d.norms) row.push_back(series[r]);
      row.push_back(rep.s_deviation[r]);
      row.push_back(rep.conservation[r]);
      rows.push_back(std::move(row));
    }
    write_csv(dir / "epi_series.csv", prov, header, rows);

    double worst = 0.0;
    for (double v : rep.conservation) worst = std::max(worst, std::abs(v));
    Json decay = Json::object();
    for (const auto& d : rep.decay) {
      decay[d.name] = Json{{"final_fraction", d.final_fraction}, {"monotone_after_peak", d.monotone_after_peak}};
    }
    Json epi{{"provenance", provenance_json(prov)},
             {"initial_mass", rep.initial_mass},
             {"conservation_max_abs", worst},
             {"conservation_relative", rep.initial_mass > 0.0 ? worst / rep.initial_mass : worst},
             {"decay", decay},
             {"decayed_below_1_percent", rep.decayed(0.01)},
             {"s_final", integrate(traj.back().fields[kS], traj.grid)},
             {"s_infinity",
              Json{{"estimate", rep.s_inf.estimate},
                   {"tail_bound", number_or_null(rep.s_inf.tail_bound)},
                   {"decay_time", number_or_null(rep.s_inf.decay_time)},
                   {"decay_fitted", rep.s_inf.decay_fitted},
                   {"note", rep.s_inf.note}}},
             {"p", rep.p}};
    write_text(dir / "epi_report.json", epi.dump(2) + "\n");
    summary["epi"] = Json{{"conservation_relative", epi["conservation_relative"]},
                          {"decayed_below_1_percent", rep.decayed(0.01)},
                          {"s_infinity_estimate", rep.s_inf.estimate}};
  }

  write_trajectory(dir / "trajectory.bin", traj, prov);
  if (cfg.diagnostics.checkpoint) {
    SimState last{traj.back().t, traj.back().fields, setup.initial.epsilon};
    write_checkpoint(dir / "final.ckpt", last, traj.grid);
  }
  if (cfg.diagnostics.vtk) {
    write_vtk(dir / "fields_initial.vtk", traj.grid, traj.front().fields, setup.species_names, prov, traj.front().t);
    write_vtk(dir / "fields_final.vtk", traj.grid, traj.back().fields, setup.species_names, prov, traj.back().t);
  }
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  say(opt, "outputs written to " + dir.string());
  return kExitOk;
}

/// Recomputes the energy trace of a stored trajectory.
inline int cmd_energy_report(const RunConfig& cfg, const CommandOptions& opt) {
  using namespace cmd_detail;
  const auto dir = prepare_out(cfg, opt);
  const auto path = opt.trajectory.value_or(dir / "trajectory.bin");
  if (!std::filesystem::exists(path)) throw IoError("trajectory file " + path.string() + " not found");
  const auto stored = read_trajectory(path);
  const RunSetup setup = build_setup(cfg);
  if (stored.trajectory.species() != setup.problem.system.species()) {
    throw IoError(path.string() + ": species count does not match the config");
  }
  Json theta_log = Json::array();
  const auto specs = energy_specs(cfg, setup, &theta_log);
  const auto trace = energy_trace(stored.trajectory, specs);
  write_energy_csv(dir / "energy_report.csv", trace, setup.provenance);
  Json out{{"provenance", provenance_json(setup.provenance)},
           {"trajectory_provenance", provenance_json(stored.provenance)},
           {"trajectory_matches_config", stored.provenance.config_hash == setup.provenance.config_hash},
           {"records", stored.trajectory.records.size()},
           {"energy", energy_json(trace)}};
  if (!theta_log.empty()) out["theta_search"] = theta_log;
  write_text(dir / "energy_report.json", out.dump(2) + "\n");
  for (const auto& s : trace.series) {
    say(opt, "L" + std::to_string(s.p) + ": delta=" + format_number(s.fit.delta) + " C=" + format_number(s.fit.C) +
                 " plateau=" + format_number(s.fit.plateau) + " bounded=" + (s.bounded ? "true" : "false"));
  }
  return kExitOk;
}

/// Runs the configured problem for every epsilon in epsilon_study.
inline int cmd_epsilon_study(const RunConfig& cfg, const CommandOptions& opt) {
  using namespace cmd_detail;
  const auto dir = prepare_out(cfg, opt);
  const RunSetup setup = build_setup(cfg);
  const auto study = epsilon_refinement_study(setup.problem, setup.initial, setup.solver, cfg.epsilon_study);
  std::vector<std::vector<double>> rows;
  std::vector<double> ratios;
  for (std::size_t k = 0; k < study.distances.size(); ++k) {
    rows.push_back({study.epsilons[k], study.epsilons[k + 1], study.distances[k]});
    if (k > 0) ratios.push_back(study.distances[k - 1] > 0.0 ? study.distances[k] / study.distances[k - 1] : 0.0);
  }
  write_csv(dir / "epsilon_study.csv", setup.provenance, {"epsilon_a", "epsilon_b", "l2_distance"}, rows);
  Json out{{"provenance", provenance_json(setup.provenance)},
           {"epsilons", study.epsilons},
           {"distances", study.distances},
           {"ratios", ratios},
           {"monotone_shrinking", study.monotone_shrinking()}};
  write_text(dir / "epsilon_study.json", out.dump(2) + "\n");
  for (std::size_t k = 0; k < study.distances.size(); ++k) {
    say(opt, "eps " + format_number(study.epsilons[k]) + " vs " + format_number(study.epsilons[k + 1]) +
                 ": distance " + format_number(study.distances[k]));
  }
  return kExitOk;
}

}  // namespace rdsim
