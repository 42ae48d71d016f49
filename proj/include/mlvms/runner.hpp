#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "json.hpp"
#include "mlvms/config.hpp"
#include "mlvms/fitting.hpp"
#include "mlvms/mlvms.hpp"
#include "mlvms/movingsource.hpp"
#include "mlvms/td.hpp"

namespace mlvms {

using json = nlohmann::json;

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace detail

/// Nodal field of one level, kept past the solver's lifetime for output.
struct LevelField {
  std::vector<std::vector<double>> axis_coords;
  Eigen::VectorXd values;  // lexicographic, axis 0 fastest
};

/// Plain-text structured-grid output: axis node coordinates, then the nodal
/// values in lexicographic order (axis 0 fastest).
inline void write_grid(const std::string& path, const LevelField& f) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write field file: " + path);
  os << "# structured-grid nodal field\n";
  os << "dim " << f.axis_coords.size() << "\n";
  for (std::size_t d = 0; d < f.axis_coords.size(); ++d) {
    os << "axis " << d << " " << f.axis_coords[d].size();
    for (double x : f.axis_coords[d]) os << " " << detail::fmt(x);
    os << "\n";
  }
  os << "values " << f.values.size() << "\n";
  for (Eigen::Index i = 0; i < f.values.size(); ++i) os << detail::fmt(f.values(i)) << "\n";
  if (!os) throw IoError("write failed: " + path);
}

inline void write_metrics(const std::string& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write metrics file: " + path);
  os << j.dump(2) << "\n";
  if (!os) throw IoError("write failed: " + path);
}

struct SolveOutcome {
  ErrorNorms err;
  double time_s = 0.0;  // solver wall time (assembly + solve, no IO)
  int iters = 0;
  bool converged = true;
  std::int64_t dofs = 0;
  std::int64_t storage_bytes = 0;
  double h1 = 0.0;  // finest-level element size (first axis)
  // Discrete (nodal-interpolant) energy error sqrt(e^T K e / v^T K v); the
  // superconvergent measure reported by accuracy tables. Single-level full
  // solves of symmetric problems only; NaN otherwise.
  double err_energy_nodal = std::numeric_limits<double>::quiet_NaN();
  int chosen_q = 0;  // pgd only
  std::vector<LevelField> fields;
};

inline ManufacturedProblem make_problem(const RunConfig& cfg) {
  if (cfg.problem == "poisson2d_gaussians") return poisson2d_gaussians();
  if (cfg.problem == "heat1d") return heat1d();
  throw ConfigError("problem has no manufactured definition: " + cfg.problem);
}

namespace detail {

inline std::vector<LevelSpec> checked_specs(const RunConfig& cfg) {
  try {
    auto specs = cfg.level_specs();
    MultilevelMesh probe(specs);  // nesting / divisibility validation
    return specs;
  } catch (const std::exception& e) {
    throw MeshError(e.what());
  }
}

inline TDOptions inner_options(const RunConfig& cfg) {
  TDOptions opt;
  opt.tol = cfg.td_tol;
  opt.max_sweeps = cfg.max_sweeps;
  opt.seed = cfg.seed;
  opt.check_stagnation = cfg.check_stagnation;
  return opt;
}

inline LevelField extract_field(const std::vector<const AxisDisc*>& axes,
                                const Eigen::VectorXd& u) {
  LevelField f;
  for (auto* a : axes) f.axis_coords.push_back(a->axis().node_coords());
  f.values = u;
  return f;
}

/// Nodal interpolant of `fn` on the tensor grid, axis-0 fastest.
inline Eigen::VectorXd nodal_interpolant(const std::vector<const AxisDisc*>& axes,
                                         const PointFn& fn) {
  const int dim = static_cast<int>(axes.size());
  std::int64_t n = 1;
  for (auto* a : axes) n *= a->n_nodes();
  Eigen::VectorXd v(n);
  std::array<int, kMaxDim> idx{};
  for (std::int64_t i = 0; i < n; ++i) {
    std::array<double, kMaxDim> x{};
    for (int d = 0; d < dim; ++d) x[d] = axes[d]->axis().node(idx[d]);
    v(i) = fn(x);
    for (int d = 0; d < dim; ++d) {
      if (++idx[d] < axes[d]->n_nodes()) break;
      idx[d] = 0;
    }
  }
  return v;
}

/// Discrete energy error of nodal vector u against the interpolant of exact.
inline double nodal_energy_error(const std::vector<const AxisDisc*>& axes,
                                 const SeparatedOperator& op, const Eigen::VectorXd& u,
                                 const PointFn& exact) {
  Eigen::VectorXd v = nodal_interpolant(axes, exact);
  auto K = assemble_separated(axes, op);
  const Eigen::VectorXd e = u - v;
  return std::sqrt(e.dot(K * e) / v.dot(K * v));
}

}  // namespace detail

/// One solve of a manufactured problem per the config; errors are classified
/// into MeshError / SolverError for exit-code mapping.
inline SolveOutcome run_solve(const RunConfig& cfg) {
  const ManufacturedProblem pb = make_problem(cfg);
  const ProblemDef def = ProblemDef::from_manufactured(pb);
  auto specs = detail::checked_specs(cfg);
  if (cfg.solver == "pgd" && specs.size() != 1)
    throw ConfigError("pgd supports a single level");

  SolveOutcome out;
  out.h1 = specs.back().h[0];
  const auto t0 = std::chrono::steady_clock::now();
  try {
    if (specs.size() == 1) {
      const LevelSpec& spec = specs[0];
      const int quad = (cfg.quad_order > 0) ? cfg.quad_order : spec.hyper.p + 2;
      std::vector<std::shared_ptr<AxisDisc>> store;
      std::vector<const AxisDisc*> axes;
      for (auto& ax : spec.make_axes()) {
        store.push_back(std::make_shared<AxisDisc>(ax, spec.hyper, quad));
        axes.push_back(store.back().get());
      }
      const int grad_axes = pb.spacetime ? pb.dim - 1 : pb.dim;
      if (cfg.solver == "full") {
        Eigen::VectorXd u = solve_full(def, axes);
        out.time_s = detail::seconds_since(t0);
        out.iters = 1;
        out.dofs = u.size();
        out.storage_bytes = 8 * u.size();
        TensorField f{axes, u};
        out.err = error_norms(
            axes,
            [&](const std::array<double, kMaxDim>& x, std::array<double, kMaxDim>& g) {
              return f.eval_grad(x, g);
            },
            pb.exact, pb.exact_grad, pb.k, {}, grad_axes);
        if (def.symmetric)
          out.err_energy_nodal = detail::nodal_energy_error(axes, def.op, u, pb.exact);
        out.fields.push_back(detail::extract_field(axes, u));
      } else {
        TDSolution sol;
        if (cfg.solver == "td") {
          TDReport rep;
          std::tie(sol, rep) = solve_td(def, axes, spec.mode_count, detail::inner_options(cfg));
          out.iters = rep.sweeps;
          out.converged = rep.converged;
          out.chosen_q = spec.mode_count;
        } else {
          TDSolver solver(axes, def.op, def.source, detail::inner_options(cfg));
          solver.set_constraints(
              detail::homogeneous_td_constraints(axes, cfg.max_modes, def.natural_faces));
          ModeReport rep;
          std::tie(sol, rep) = solver.pgd(cfg.mode_tol, cfg.max_modes);
          out.iters = rep.chosen_q;
          out.chosen_q = rep.chosen_q;
        }
        out.time_s = detail::seconds_since(t0);
        out.dofs = sol.n_dofs();
        out.storage_bytes = sol.storage_bytes();
        out.err = error_norms(
            axes,
            [&](const std::array<double, kMaxDim>& x, std::array<double, kMaxDim>& g) {
              return sol.eval_grad(x, g);
            },
            pb.exact, pb.exact_grad, pb.k, {}, grad_axes);
        out.fields.push_back(detail::extract_field(axes, sol.expand()));
      }
    } else if (cfg.solver == "full") {
      MLVMSOptions opt;
      opt.tol = cfg.tol;
      opt.max_iter = cfg.max_iter;
      opt.quad_order = cfg.quad_order;
      MLVMSSolver solver(def, specs, opt);
      auto rep = solver.solve();
      out.time_s = detail::seconds_since(t0);
      out.iters = rep.iterations;
      out.converged = rep.converged;
      for (int l = 0; l < solver.n_levels(); ++l) {
        out.dofs += solver.u(l).size();
        out.storage_bytes += 8 * solver.u(l).size();
        out.fields.push_back(detail::extract_field(solver.axes(l), solver.u(l)));
      }
      out.err = solver.composite_error(pb);
    } else {
      TDMLOptions opt;
      opt.tol = cfg.tol;
      opt.max_iter = cfg.max_iter;
      opt.quad_order = cfg.quad_order;
      opt.corrections = cfg.corrections;
      opt.inner = detail::inner_options(cfg);
      TDMLSolver solver(def, specs, opt);
      auto rep = solver.solve();
      out.time_s = detail::seconds_since(t0);
      out.iters = rep.iterations;
      out.converged = rep.converged;
      out.dofs = solver.n_dofs();
      out.storage_bytes = solver.storage_bytes();
      out.err = solver.composite_error(pb);
      for (int l = 0; l < solver.n_levels(); ++l)
        out.fields.push_back(detail::extract_field(solver.axes(l), solver.solution(l).expand()));
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const MeshError&) {
    throw;
  } catch (const std::exception& e) {
    throw SolverError(e.what());
  }
  return out;
}

inline json metrics_of(const RunConfig& cfg, const SolveOutcome& out) {
  json j;
  j["problem"] = cfg.problem;
  j["solver"] = cfg.solver;
  j["levels"] = cfg.levels.size();
  j["h1"] = out.h1;
  j["dofs"] = out.dofs;
  j["storage_bytes"] = out.storage_bytes;
  j["iters"] = out.iters;
  j["converged"] = out.converged;
  j["time_s"] = out.time_s;
  j["err_l2"] = out.err.l2;
  j["err_h1"] = out.err.h1;
  j["err_energy"] = out.err.energy;
  if (std::isfinite(out.err_energy_nodal)) j["err_energy_nodal"] = out.err_energy_nodal;
  if (cfg.solver == "pgd") j["chosen_q"] = out.chosen_q;
  return j;
}

inline void write_outcome(const RunConfig& cfg, const SolveOutcome& out, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory: " + dir);
  write_metrics(dir + "/metrics.json", metrics_of(cfg, out));
  for (std::size_t l = 0; l < out.fields.size(); ++l)
    write_grid(dir + "/level_" + std::to_string(l) + ".grid", out.fields[l]);
}

// ---------------------------------------------------------------------------
// Convergence studies
// ---------------------------------------------------------------------------

struct ConvergenceRow {
  double h1 = 0.0;
  std::int64_t dofs = 0;
  double err_l2 = 0.0;
  double err_energy = 0.0;
  double time_s = 0.0;
  int iters = 0;
  std::int64_t storage_bytes = 0;
  double err_energy_nodal = std::numeric_limits<double>::quiet_NaN();
};

struct ConvergenceStudy {
  std::vector<ConvergenceRow> rows;
  double slope_l2 = 0.0;
  double slope_energy = 0.0;
  bool plateau = false;  // last two energy errors differ < 10%
};

/// Config of rung r of the refinement ladder: `simultaneous` halves every
/// level's element sizes r times, `fine_only` only the finest level's.
inline RunConfig refined_config(const RunConfig& base, int rung) {
  RunConfig cfg = base;
  const double f = std::pow(2.0, rung);
  for (std::size_t l = 0; l < cfg.levels.size(); ++l) {
    if (base.refine == "fine_only" && l + 1 != cfg.levels.size()) continue;
    for (int d = 0; d < cfg.levels[l].box.dim; ++d) cfg.levels[l].h[d] /= f;
  }
  return cfg;
}

inline ConvergenceStudy run_converge(const RunConfig& cfg) {
  if (cfg.ladder < 3) throw ConfigError("converge needs ladder >= 3");
  ConvergenceStudy study;
  for (int r = 0; r < cfg.ladder; ++r) {
    SolveOutcome out = run_solve(refined_config(cfg, r));
    ConvergenceRow row;
    row.h1 = out.h1;
    row.dofs = out.dofs;
    row.err_l2 = out.err.l2;
    row.err_energy = out.err.energy;
    row.time_s = out.time_s;
    row.iters = out.iters;
    row.storage_bytes = out.storage_bytes;
    row.err_energy_nodal = out.err_energy_nodal;
    study.rows.push_back(row);
  }
  std::vector<double> h, el2, een;
  for (const auto& r : study.rows) {
    h.push_back(r.h1);
    el2.push_back(r.err_l2);
    een.push_back(r.err_energy);
  }
  study.slope_l2 = fit_slope(h, el2);
  study.slope_energy = fit_slope(h, een);
  const auto n = study.rows.size();
  study.plateau = std::abs(een[n - 1] - een[n - 2]) < 0.10 * een[n - 2];
  return study;
}

inline void write_convergence_csv(const std::string& path, const ConvergenceStudy& s) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write csv: " + path);
  os << "h1,dofs,err_l2,err_energy,time_s,iters,storage_bytes\n";
  for (const auto& r : s.rows)
    os << detail::fmt(r.h1) << "," << r.dofs << "," << detail::fmt(r.err_l2) << ","
       << detail::fmt(r.err_energy) << "," << detail::fmt(r.time_s) << "," << r.iters << ","
       << r.storage_bytes << "\n";
  os << "# slope_l2 = " << detail::fmt(s.slope_l2)
     << ", slope_energy = " << detail::fmt(s.slope_energy)
     << ", plateau = " << (s.plateau ? "true" : "false") << "\n";
  if (!os) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Mode-count study
// ---------------------------------------------------------------------------

struct ModesStudy {
  std::vector<double> deviations;  // relative energy-norm deviation per Q
  int chosen_q = 0;
  double time_s = 0.0;
};

inline ModesStudy run_modes(const RunConfig& cfg) {
  if (cfg.levels.size() != 1) throw ConfigError("modes study supports a single level");
  const ManufacturedProblem pb = make_problem(cfg);
  const ProblemDef def = ProblemDef::from_manufactured(pb);
  auto specs = detail::checked_specs(cfg);
  const LevelSpec& spec = specs[0];
  const int quad = (cfg.quad_order > 0) ? cfg.quad_order : spec.hyper.p + 2;
  std::vector<std::shared_ptr<AxisDisc>> store;
  std::vector<const AxisDisc*> axes;
  for (auto& ax : spec.make_axes()) {
    store.push_back(std::make_shared<AxisDisc>(ax, spec.hyper, quad));
    axes.push_back(store.back().get());
  }
  ModesStudy out;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    ModeReport rep;
    out.chosen_q = estimate_modes(def, axes, cfg.mode_tol, cfg.max_modes, &rep,
                                  detail::inner_options(cfg));
    out.deviations = rep.deviations;
  } catch (const std::exception& e) {
    throw SolverError(e.what());
  }
  out.time_s = detail::seconds_since(t0);
  return out;
}

inline void write_modes_csv(const std::string& path, const ModesStudy& s) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write csv: " + path);
  os << "q,rel_deviation\n";
  for (std::size_t i = 0; i < s.deviations.size(); ++i)
    os << (i + 1) << "," << detail::fmt(s.deviations[i]) << "\n";
  os << "# chosen_q = " << s.chosen_q << "\n";
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace mlvms
