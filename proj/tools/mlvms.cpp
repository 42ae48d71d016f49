// Command-line harness: single runs, convergence studies, mode-count
// studies, the moving-source thermal showcase, and the built-in invariant
// suite. See README.md for the config format and output files.
#include <iostream>

#include "CLI11.hpp"
#include "mlvms/lpbf.hpp"
#include "mlvms/runner.hpp"
#include "mlvms/verify.hpp"

namespace {

struct CommonArgs {
  std::string config;
  std::string out = "out";
  int seed = -1;  // -1: keep the config's seed
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_config = true) {
  auto* c = cmd->add_option("--config", args.config, "path to the run config file");
  if (needs_config) c->required();
  cmd->add_option("--out", args.out, "output directory (default: out)");
  cmd->add_option("--seed", args.seed, "override the config's random seed");
}

mlvms::RunConfig load(const CommonArgs& args) {
  mlvms::RunConfig cfg = mlvms::load_run_config(args.config);
  if (args.seed >= 0) cfg.seed = static_cast<unsigned>(args.seed);
  return cfg;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw mlvms::IoError("cannot create output directory: " + dir);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multilevel space-time solver with separated (tensor) representations"};
  app.require_subcommand(1);

  CommonArgs solve_args, conv_args, modes_args, lpbf_args;
  std::string scale = "desk";

  auto* solve_cmd = app.add_subcommand("solve", "one solve; writes metrics.json + level_<l>.grid");
  add_common(solve_cmd, solve_args);
  auto* conv_cmd = app.add_subcommand("converge", "refinement ladder; writes convergence.csv");
  add_common(conv_cmd, conv_args);
  auto* modes_cmd = app.add_subcommand("modes", "TD mode-count study; writes modes.csv");
  add_common(modes_cmd, modes_args);
  auto* lpbf_cmd = app.add_subcommand("lpbf", "moving-source thermal run over a level hierarchy");
  add_common(lpbf_cmd, lpbf_args);
  lpbf_cmd->add_option("--scale", scale, "desk | paper (paper: halved element sizes)")
      ->check(CLI::IsMember({"desk", "paper"}));
  auto* verify_cmd = app.add_subcommand("verify", "run the built-in invariant suite");

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve_cmd->parsed()) {
      mlvms::RunConfig cfg = load(solve_args);
      mlvms::SolveOutcome out = mlvms::run_solve(cfg);
      mlvms::write_outcome(cfg, out, solve_args.out);
      std::cout << "err_l2 = " << out.err.l2 << "  err_energy = " << out.err.energy
                << "  dofs = " << out.dofs << "  time_s = " << out.time_s << "\n";
    } else if (conv_cmd->parsed()) {
      mlvms::RunConfig cfg = load(conv_args);
      mlvms::ConvergenceStudy study = mlvms::run_converge(cfg);
      ensure_dir(conv_args.out);
      mlvms::write_convergence_csv(conv_args.out + "/convergence.csv", study);
      mlvms::json j;
      j["slope_l2"] = study.slope_l2;
      j["slope_energy"] = study.slope_energy;
      j["plateau"] = study.plateau;
      j["rows"] = study.rows.size();
      mlvms::write_metrics(conv_args.out + "/metrics.json", j);
      std::cout << "rows = " << study.rows.size() << "  slope_l2 = " << study.slope_l2
                << "  slope_energy = " << study.slope_energy
                << "  plateau = " << (study.plateau ? "true" : "false") << "\n";
    } else if (modes_cmd->parsed()) {
      mlvms::RunConfig cfg = load(modes_args);
      mlvms::ModesStudy study = mlvms::run_modes(cfg);
      ensure_dir(modes_args.out);
      mlvms::write_modes_csv(modes_args.out + "/modes.csv", study);
      mlvms::json j;
      j["chosen_q"] = study.chosen_q;
      j["deviations"] = study.deviations;
      j["time_s"] = study.time_s;
      mlvms::write_metrics(modes_args.out + "/metrics.json", j);
      std::cout << "chosen_q = " << study.chosen_q << "\n";
    } else if (lpbf_cmd->parsed()) {
      mlvms::RawConfig raw = mlvms::load_config(lpbf_args.config);
      if (lpbf_args.seed >= 0)
        raw.global.set("seed", std::to_string(lpbf_args.seed));
      mlvms::LpbfSetup setup = mlvms::make_lpbf_setup(raw, scale);
      mlvms::LpbfOutcome out = mlvms::run_lpbf(setup);
      ensure_dir(lpbf_args.out);
      mlvms::json j;
      j["scale"] = scale;
      j["dofs"] = out.dofs;
      j["storage_bytes"] = out.storage_bytes;
      j["dofs_identity"] = out.dofs_identity;
      j["iters"] = out.iters;
      j["converged"] = out.converged;
      j["time_s"] = out.time_s;
      j["peak_theta"] = out.peak_theta;
      j["peak_temperature"] = out.peak_temperature;
      j["T_amb"] = setup.laser.T_amb;
      j["decay_distances"] = out.decay_distances;
      j["decay_theta"] = out.decay_theta;
      if (raw.global.get_bool("speedup", false)) {
        mlvms::SpeedupResult sp = mlvms::run_lpbf_speedup(raw, setup);
        j["speedup"] = sp.speedup;
        j["time_full_s"] = sp.time_full_s;
        j["time_td_s"] = sp.time_td_s;
        j["speedup_rel_gap"] = sp.rel_gap;
      }
      mlvms::write_metrics(lpbf_args.out + "/metrics.json", j);
      for (std::size_t l = 0; l < out.fields.size(); ++l)
        mlvms::write_grid(lpbf_args.out + "/level_" + std::to_string(l) + ".grid",
                          out.fields[l]);
      std::cout << "peak_temperature = " << out.peak_temperature
                << " K  (ambient " << setup.laser.T_amb << " K)  time_s = " << out.time_s
                << "\n";
    } else if (verify_cmd->parsed()) {
      if (!mlvms::run_verify()) return static_cast<int>(mlvms::ExitCode::solver_error);
    }
  } catch (const mlvms::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return static_cast<int>(mlvms::ExitCode::config_error);
  } catch (const mlvms::MeshError& e) {
    std::cerr << "mesh error: " << e.what() << "\n";
    return static_cast<int>(mlvms::ExitCode::mesh_error);
  } catch (const mlvms::SolverError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return static_cast<int>(mlvms::ExitCode::solver_error);
  } catch (const mlvms::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return static_cast<int>(mlvms::ExitCode::io_error);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(mlvms::ExitCode::solver_error);
  }
  return 0;
}
