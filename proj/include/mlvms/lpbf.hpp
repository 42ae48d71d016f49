#pragma once

#include "mlvms/runner.hpp"

namespace mlvms {

/// Assembled moving-source thermal run: the laser-tracking window transform
/// turns the problem into a static multilevel space-time solve in reference
/// coordinates, solved for the temperature rise theta = T - T_amb (all
/// essential data homogeneous). Internal units are (mm, ms, K).
struct LpbfSetup {
  LaserParams laser;              // as configured (table units)
  RunConfig cfg;                  // levels + solver options
  Box domain;                     // reference space-time box, time last
  std::unique_ptr<CoordinateMap> map;
  ProblemDef def;
  std::vector<LevelSpec> specs;
  double xi_c = 0.0, y_c = 0.0, z_c = 0.0;  // laser center, reference coords
};

inline LpbfSetup make_lpbf_setup(const RawConfig& raw, const std::string& scale = "desk") {
  if (scale != "desk" && scale != "paper")
    throw ConfigError("scale must be one of: desk, paper");
  LpbfSetup setup;
  setup.cfg = make_run_config(raw);
  if (setup.cfg.problem != "lpbf") throw ConfigError("lpbf runner needs problem = lpbf");
  if (setup.cfg.solver != "td") throw ConfigError("lpbf runner needs solver = td");
  if (scale == "paper")  // finer resolution; long runtimes expected
    for (auto& lc : setup.cfg.levels)
      for (int d = 0; d < lc.box.dim; ++d) lc.h[d] /= 2.0;

  const KeyValues& g = raw.global;
  LaserParams& lp = setup.laser;
  lp.k = g.get_double("laser_k", lp.k);
  lp.rho = g.get_double("laser_rho", lp.rho);
  lp.c_p = g.get_double("laser_cp", lp.c_p);
  lp.v = g.get_double("laser_v", lp.v);
  lp.R = g.get_double("laser_R", lp.R);
  lp.D = g.get_double("laser_D", lp.D);
  lp.P = g.get_double("laser_P", lp.P);
  lp.eta = g.get_double("laser_eta", lp.eta);
  lp.T_amb = g.get_double("laser_T_amb", lp.T_amb);
  try {
    lp.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }

  setup.specs = detail::checked_specs(setup.cfg);
  setup.domain = setup.specs[0].domain;
  const int dim = setup.domain.dim;
  if (dim != 4) throw ConfigError("lpbf runner needs 4 axes (x y z t)");

  // Moving window on the x axis, rigid, tracking the laser; the reference
  // window equals the physical window at t = 0, so detJ = 1 on the center
  // branch for all time.
  MovingAxis mv;
  mv.axis = 0;
  mv.win_lo0 = g.get_double("window_lo");
  mv.win_hi0 = g.get_double("window_hi");
  mv.v = lp.v_internal();
  mv.ref_lo = mv.win_lo0;
  mv.ref_hi = mv.win_hi0;
  const double margin = g.get_double("margin", 4.0 * setup.specs[0].h[0]);
  try {
    setup.map = std::make_unique<CoordinateMap>(setup.domain, std::vector<MovingAxis>{mv}, margin);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }

  setup.xi_c = g.get_double("laser_x0", 0.5 * (mv.win_lo0 + mv.win_hi0));
  setup.y_c = g.get_double("laser_y0", 0.5 * (setup.domain.lo[1] + setup.domain.hi[1]));
  setup.z_c = g.get_double("laser_z0", setup.domain.hi[2]);

  setup.def.dim = dim;
  setup.def.symmetric = false;
  setup.def.op = transformed_coefficients(*setup.map, lp.rho_cp_internal(), lp.k_internal());
  // Separable source in reference coordinates: on the center branch
  // x - x_c(t) = xi - xi_c and detJ = 1; the side-branch contribution is
  // below machine precision by Gaussian decay (window half-width >> R).
  {
    const double A = lp.intensity_internal();
    const double R = lp.R_internal(), D = lp.D_internal();
    const double xc = setup.xi_c, yc = setup.y_c, zc = setup.z_c;
    SeparatedSource::Term t;
    t.coef = A;
    t.factor[0] = [xc, R](double xi) { return std::exp(-3.0 * (xi - xc) * (xi - xc) / (R * R)); };
    t.factor[1] = [yc, R](double y) { return std::exp(-3.0 * (y - yc) * (y - yc) / (R * R)); };
    t.factor[2] = [zc, D](double z) { return std::exp(-3.0 * (z - zc) * (z - zc) / (D * D)); };
    setup.def.source.dim = dim;
    setup.def.source.terms.push_back(t);
  }
  setup.def.bc = nullptr;  // homogeneous (theta = 0 far field / initial)
  setup.def.natural_faces = {{2, 1}, {3, 1}};  // insulated top, final time
  return setup;
}

struct LpbfOutcome {
  double time_s = 0.0;
  int iters = 0;
  bool converged = false;
  std::int64_t dofs = 0;
  std::int64_t storage_bytes = 0;
  bool dofs_identity = false;  // reported dofs == factor count == bytes / 8
  double peak_theta = 0.0;     // max temperature rise, finest level
  double peak_temperature = 0.0;
  std::vector<double> decay_distances;  // transverse sampling offsets (mm)
  std::vector<double> decay_theta;      // theta at those offsets, mid-time
  std::vector<LevelField> fields;
};

inline LpbfOutcome run_lpbf(const LpbfSetup& setup, bool keep_fields = true) {
  TDMLOptions opt;
  opt.tol = setup.cfg.tol;
  opt.max_iter = setup.cfg.max_iter;
  opt.quad_order = setup.cfg.quad_order;
  opt.corrections = setup.cfg.corrections;
  opt.inner = detail::inner_options(setup.cfg);

  LpbfOutcome out;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    TDMLSolver solver(setup.def, setup.specs, opt);
    auto rep = solver.solve();
    out.time_s = detail::seconds_since(t0);
    out.iters = rep.iterations;
    out.converged = rep.converged;
    out.dofs = solver.n_dofs();
    out.storage_bytes = solver.storage_bytes();

    std::int64_t factor_count = 0;
    for (int l = 0; l < solver.n_levels(); ++l) {
      const TDSolution& sol = solver.solution(l);
      for (const auto& mode : sol.modes)
        for (const auto& f : mode) factor_count += f.size();
    }
    out.dofs_identity = (factor_count == out.dofs) && (out.storage_bytes == 8 * out.dofs);

    const int fin = solver.n_levels() - 1;
    Eigen::VectorXd fine = solver.solution(fin).expand();
    out.peak_theta = fine.maxCoeff();
    out.peak_temperature = setup.laser.T_amb + out.peak_theta;

    // transverse decay profile at the laser center, mid-time
    const double t_mid = 0.5 * (setup.domain.lo[3] + setup.domain.hi[3]);
    const double y_max = setup.domain.hi[1] - setup.y_c;
    for (double frac : {0.0, 0.02, 0.05, 0.1, 0.2, 0.4, 0.7, 0.95}) {
      std::array<double, kMaxDim> x{setup.xi_c, setup.y_c + frac * y_max, setup.z_c, t_mid};
      out.decay_distances.push_back(frac * y_max);
      out.decay_theta.push_back(solver.composite_eval(x));
    }

    if (keep_fields)
      for (int l = 0; l < solver.n_levels(); ++l)
        out.fields.push_back(
            detail::extract_field(solver.axes(l), solver.solution(l).expand()));
  } catch (const std::exception& e) {
    throw SolverError(e.what());
  }
  return out;
}

struct SpeedupResult {
  double time_full_s = 0.0;
  double time_td_s = 0.0;
  double speedup = 0.0;
  double rel_gap = 0.0;  // energy-norm gap between the two solutions
};

/// TD vs full space-time solve of the transformed problem on one shared
/// coarse grid (sizes from speedup_* config keys).
inline SpeedupResult run_lpbf_speedup(const RawConfig& raw, const LpbfSetup& setup) {
  const KeyValues& g = raw.global;
  std::vector<double> h = g.has("speedup_h")
                              ? g.get_doubles("speedup_h")
                              : std::vector<double>{0.5, 0.5, 0.375, 0.25};
  if (h.size() != 4) throw ConfigError("speedup_h needs 4 entries");
  HyperParams hyper;
  hyper.p = g.get_int("speedup_p", 2);
  hyper.s = g.get_int("speedup_s", 1);
  hyper.a = g.get_double("speedup_a", 3.0);
  const int q = g.get_int("speedup_q", 8);

  LevelSpec spec;
  spec.domain = setup.domain;
  spec.hyper = hyper;
  for (int d = 0; d < 4; ++d) spec.h[d] = h[d];
  spec.mode_count = q;

  std::vector<std::shared_ptr<AxisDisc>> store;
  std::vector<const AxisDisc*> axes;
  try {
    for (auto& ax : spec.make_axes()) {
      store.push_back(std::make_shared<AxisDisc>(ax, hyper, hyper.p + 2));
      axes.push_back(store.back().get());
    }
  } catch (const std::exception& e) {
    throw MeshError(e.what());
  }

  SpeedupResult out;
  try {
    auto t0 = std::chrono::steady_clock::now();
    Eigen::VectorXd u_full = solve_full(setup.def, axes);
    out.time_full_s = detail::seconds_since(t0);

    TDOptions inner = detail::inner_options(setup.cfg);
    t0 = std::chrono::steady_clock::now();
    auto [td, rep] = solve_td(setup.def, axes, q, inner);
    out.time_td_s = detail::seconds_since(t0);

    out.speedup = out.time_full_s / std::max(out.time_td_s, 1e-9);
    double full_norm = 0.0;
    const double dev = td_deviation(axes, setup.def.op, td, u_full, &full_norm);
    out.rel_gap = dev / std::max(full_norm, 1e-300);
  } catch (const std::exception& e) {
    throw SolverError(e.what());
  }
  return out;
}

}  // namespace mlvms
