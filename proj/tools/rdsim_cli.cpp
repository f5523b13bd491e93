// rdsim: batch front end.
//
//   rdsim check          --config PATH [--out DIR] [--seed N] [--quiet]
//   rdsim run            --config PATH [--out DIR] [--seed N] [--quiet]
//   rdsim energy-report  --config PATH [--trajectory FILE] [--out DIR] ...
//   rdsim epsilon-study  --config PATH [--out DIR] [--seed N] [--quiet]

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "rdsim/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Reaction-diffusion simulator with energy and mass diagnostics"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string trajectory;
  std::optional<std::uint64_t> seed;
  bool quiet = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration")->required();
    sub->add_option("--out", out_dir, "output directory (overrides output.dir)");
    sub->add_option("--seed", seed, "random seed (overrides seed)");
    sub->add_flag("--quiet", quiet, "suppress progress output");
  };
  auto* check = app.add_subcommand("check", "test the structural hypotheses of the configured system");
  auto* run = app.add_subcommand("run", "run the configured problem and write diagnostics");
  auto* energy = app.add_subcommand("energy-report", "recompute L_p energies of a stored trajectory");
  auto* eps = app.add_subcommand("epsilon-study", "compare runs over a list of truncation parameters");
  for (auto* sub : {check, run, energy, eps}) common(sub);
  energy->add_option("--trajectory", trajectory, "trajectory file (default OUT/trajectory.bin)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : rdsim::kExitConfig;
  }

  return rdsim::guarded([&] {
    rdsim::RunConfig cfg = rdsim::load_config(config_path);
    if (seed) cfg.seed = *seed;
    rdsim::CommandOptions opt;
    opt.out_dir = out_dir;
    opt.quiet = quiet;
    if (!trajectory.empty()) opt.trajectory = trajectory;
    if (check->parsed()) return rdsim::cmd_check(cfg, opt);
    if (run->parsed()) return rdsim::cmd_run(cfg, opt);
    if (energy->parsed()) return rdsim::cmd_energy_report(cfg, opt);
    return rdsim::cmd_epsilon_study(cfg, opt);
  });
}
