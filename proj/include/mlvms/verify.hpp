#pragma once

#include <iostream>
#include <random>

#include "mlvms/runner.hpp"

namespace mlvms {

/// Fast built-in invariant suite behind the `verify` subcommand: basis
/// properties, transform identities, and solver determinism. Prints one
/// PASS/FAIL line per check; returns true when everything passes.
inline bool run_verify(std::ostream& os = std::cout) {
  bool all = true;
  auto check = [&](const std::string& name, bool ok, const std::string& info = "") {
    os << (ok ? "PASS " : "FAIL ") << name;
    if (!info.empty()) os << "  (" << info << ")";
    os << "\n";
    all = all && ok;
  };

  // --- 1D basis properties over (p, s) combinations -----------------------
  {
    std::mt19937 rng(7);
    double worst_kron = 0.0, worst_pu = 0.0, worst_rep = 0.0;
    for (int p : {1, 2, 3, 5}) {
      for (int s : {1, 2, 3}) {
        if (2 * s < p) continue;
        HyperParams hyper;
        hyper.p = p;
        hyper.s = s;
        Axis axis(0.0, 2.0, 12);
        AxisBasis basis(axis, hyper);
        Eigen::VectorXd v, d;
        // Kronecker delta at nodes
        for (int i = 0; i <= axis.n_elem; ++i) {
          const int e = std::min(i, axis.n_elem - 1);
          basis.eval(e, axis.node(i), v, d);
          auto [j0, j1] = basis.element_support(e);
          for (int j = j0; j <= j1; ++j)
            worst_kron = std::max(worst_kron, std::abs(v(j - j0) - (j == i ? 1.0 : 0.0)));
        }
        // partition of unity + monomial reproduction at random points
        std::uniform_real_distribution<double> U(axis.lo, axis.hi);
        for (int it = 0; it < 40; ++it) {
          const double x = U(rng);
          const int e = basis.locate(x);
          basis.eval(e, x, v, d);
          worst_pu = std::max(worst_pu, std::abs(v.sum() - 1.0));
          auto [j0, j1] = basis.element_support(e);
          for (int k = 1; k <= p; ++k) {
            double interp = 0.0;
            for (int j = j0; j <= j1; ++j) interp += v(j - j0) * std::pow(axis.node(j), k);
            worst_rep = std::max(worst_rep, std::abs(interp - std::pow(x, k)));
          }
        }
      }
    }
    check("basis Kronecker delta at nodes", worst_kron < 1e-9,
          "max " + detail::fmt(worst_kron));
    check("basis partition of unity", worst_pu < 1e-10, "max " + detail::fmt(worst_pu));
    check("basis monomial reproduction to order p", worst_rep < 1e-8,
          "max " + detail::fmt(worst_rep));
  }

  // --- coordinate transform identities -------------------------------------
  {
    Box box;
    box.dim = 3;
    box.lo = {0.0, 0.0, 0.0};
    box.hi = {10.0, 8.0, 2.0};
    MovingAxis mx{0, 1.0, 3.0, 1.5, 1.0, 3.0};
    MovingAxis my{1, 2.0, 4.0, -0.5, 2.0, 4.0};
    CoordinateMap map(box, {mx, my}, 0.5);
    std::mt19937 rng(11);
    double worst_det = 0.0, worst_rt = 0.0;
    for (int it = 0; it < 200; ++it) {
      std::array<double, kMaxDim> xi{};
      for (int d = 0; d < 3; ++d) {
        std::uniform_real_distribution<double> U(box.lo[d], box.hi[d]);
        xi[d] = U(rng);
      }
      auto J = map.jacobian(xi);
      worst_det = std::max(worst_det, std::abs(J.detJ - 1.0 / (J.A * J.B)));
      auto x = map.map_point(xi);
      auto back = map.inverse_point(x);
      for (int d = 0; d < 3; ++d) worst_rt = std::max(worst_rt, std::abs(back[d] - xi[d]));
    }
    check("transform detJ = 1/(A B)", worst_det < 1e-13, "max " + detail::fmt(worst_det));
    check("transform round trip", worst_rt < 1e-12, "max " + detail::fmt(worst_rt));
  }

  // --- manufactured problems are self-consistent ---------------------------
  {
    const double r1 = poisson2d_gaussians().residual_self_check();
    const double r2 = heat1d().residual_self_check();
    check("manufactured sources solve their PDEs", r1 < 1e-8 && r2 < 1e-8,
          "residuals " + detail::fmt(r1) + ", " + detail::fmt(r2));
  }

  // --- TD determinism under a fixed seed ------------------------------------
  {
    RunConfig cfg;
    cfg.problem = "poisson2d_gaussians";
    cfg.solver = "td";
    cfg.seed = 42;
    LevelConfig lc;
    lc.box.dim = 2;
    lc.box.lo = {0.0, 0.0};
    lc.box.hi = {20.0, 20.0};
    lc.h = {0.5, 0.5};
    lc.hyper = HyperParams{3.0, 2, 3};
    lc.q = 3;
    cfg.levels.push_back(lc);
    SolveOutcome a = run_solve(cfg);
    SolveOutcome b = run_solve(cfg);
    const bool same = (a.fields[0].values.size() == b.fields[0].values.size()) &&
                      (a.fields[0].values.array() == b.fields[0].values.array()).all();
    check("TD solve bitwise deterministic under fixed seed", same);
  }

  return all;
}

}  // namespace mlvms
