#pragma once

#include <random>

#include "mlvms/separated.hpp"

namespace mlvms {

/// Manufactured problem: exact solution, analytic source (hand-derived, not
/// generated from the Laplacian evaluator), boundary data = exact trace.
struct ManufacturedProblem {
  std::string name;
  int dim = 0;            // total axes (time included when spacetime)
  bool spacetime = false; // last axis is time
  double k = 1.0;         // diffusivity
  double rho_cp = 1.0;    // capacity (spacetime only)
  Box domain;

  std::function<double(const std::array<double, kMaxDim>&)> exact;
  std::function<void(const std::array<double, kMaxDim>&, std::array<double, kMaxDim>&)> exact_grad;
  std::function<double(const std::array<double, kMaxDim>&)> exact_lap;  // spatial Laplacian
  std::function<double(const std::array<double, kMaxDim>&)> source;
  SeparatedSource source_sep;
  std::vector<std::pair<int, int>> neumann_faces;  // (axis, side) with zero flux

  /// Analytic consistency: PDE(exact) - source at random interior points, and
  /// the separated source against the pointwise source.
  double residual_self_check(int n_samples = 200, unsigned seed = 1234) const {
    std::mt19937 rng(seed);
    double worst = 0.0;
    for (int it = 0; it < n_samples; ++it) {
      std::array<double, kMaxDim> x{};
      for (int d = 0; d < dim; ++d) {
        std::uniform_real_distribution<double> U(domain.lo[d], domain.hi[d]);
        x[d] = U(rng);
      }
      std::array<double, kMaxDim> g{};
      exact_grad(x, g);
      double lhs = spacetime ? rho_cp * g[dim - 1] - k * exact_lap(x) : -k * exact_lap(x);
      worst = std::max(worst, std::abs(lhs - source(x)));
      if (!source_sep.terms.empty())
        worst = std::max(worst, std::abs(source_sep.eval(x) - source(x)));
    }
    return worst;
  }
};

/// 2D Poisson with a sum of seven offset Gaussians (Dirichlet from exact).
/// u = sum_{k=1}^{7} exp(-pi (x-c_k)^2 - pi (y-c_k)^2), c_k = 8.2 + 0.2 k.
inline ManufacturedProblem poisson2d_gaussians() {
  ManufacturedProblem pb;
  pb.name = "poisson2d_gaussians";
  pb.dim = 2;
  pb.domain.dim = 2;
  pb.domain.lo = {0, 0};
  pb.domain.hi = {20, 20};

  const double pi = M_PI;
  auto centers = [] {
    std::array<double, 7> c{};
    for (int k = 1; k <= 7; ++k) c[k - 1] = 8.2 + 0.2 * k;
    return c;
  }();

  pb.exact = [centers, pi](const std::array<double, kMaxDim>& x) {
    double s = 0.0;
    for (double c : centers)
      s += std::exp(-pi * (x[0] - c) * (x[0] - c) - pi * (x[1] - c) * (x[1] - c));
    return s;
  };
  pb.exact_grad = [centers, pi](const std::array<double, kMaxDim>& x,
                                std::array<double, kMaxDim>& g) {
    g.fill(0.0);
    for (double c : centers) {
      double e = std::exp(-pi * (x[0] - c) * (x[0] - c) - pi * (x[1] - c) * (x[1] - c));
      g[0] += -2.0 * pi * (x[0] - c) * e;
      g[1] += -2.0 * pi * (x[1] - c) * e;
    }
  };
  pb.exact_lap = [centers, pi](const std::array<double, kMaxDim>& x) {
    double s = 0.0;
    for (double c : centers) {
      double dx = x[0] - c, dy = x[1] - c;
      double e = std::exp(-pi * (dx * dx + dy * dy));
      s += (4.0 * pi * pi * (dx * dx + dy * dy) - 4.0 * pi) * e;
    }
    return s;
  };
  // b = -lap(u); each Gaussian contributes an x-rank-2 separable pair
  pb.source = [centers, pi](const std::array<double, kMaxDim>& x) {
    double s = 0.0;
    for (double c : centers) {
      double dx = x[0] - c, dy = x[1] - c;
      double ex = std::exp(-pi * dx * dx), ey = std::exp(-pi * dy * dy);
      s += ((2.0 * pi - 4.0 * pi * pi * dx * dx) * ex) * ey +
           ex * ((2.0 * pi - 4.0 * pi * pi * dy * dy) * ey);
    }
    return s;
  };
  pb.source_sep.dim = 2;
  for (double c : centers) {
    auto gauss = [c, pi](double t) { return std::exp(-pi * (t - c) * (t - c)); };
    auto lapf = [c, pi](double t) {
      double d = t - c;
      return (2.0 * pi - 4.0 * pi * pi * d * d) * std::exp(-pi * d * d);
    };
    SeparatedSource::Term t1;
    t1.factor[0] = lapf;
    t1.factor[1] = gauss;
    pb.source_sep.terms.push_back(t1);
    SeparatedSource::Term t2;
    t2.factor[0] = gauss;
    t2.factor[1] = lapf;
    pb.source_sep.terms.push_back(t2);
  }
  return pb;
}

/// 1D space-time heat u_t - u_xx = f on [-1,1] x [0,4], zero initial
/// condition; u = exp(-100 x^2) (1 - exp(-5t)).
inline ManufacturedProblem heat1d() {
  ManufacturedProblem pb;
  pb.name = "heat1d";
  pb.dim = 2;
  pb.spacetime = true;
  pb.domain.dim = 2;
  pb.domain.lo = {-1, 0};
  pb.domain.hi = {1, 4};

  auto X = [](double x) { return std::exp(-100.0 * x * x); };
  auto Xxx = [](double x) {
    return (-200.0 + 40000.0 * x * x) * std::exp(-100.0 * x * x);
  };
  auto T = [](double t) { return 1.0 - std::exp(-5.0 * t); };
  auto Tt = [](double t) { return 5.0 * std::exp(-5.0 * t); };

  pb.exact = [X, T](const std::array<double, kMaxDim>& x) { return X(x[0]) * T(x[1]); };
  pb.exact_grad = [X, T, Tt](const std::array<double, kMaxDim>& x,
                             std::array<double, kMaxDim>& g) {
    g.fill(0.0);
    g[0] = -200.0 * x[0] * X(x[0]) * T(x[1]);
    g[1] = X(x[0]) * Tt(x[1]);
  };
  pb.exact_lap = [Xxx, T](const std::array<double, kMaxDim>& x) { return Xxx(x[0]) * T(x[1]); };
  pb.source = [X, Xxx, T, Tt](const std::array<double, kMaxDim>& x) {
    return X(x[0]) * Tt(x[1]) - Xxx(x[0]) * T(x[1]);
  };
  pb.source_sep.dim = 2;
  {
    SeparatedSource::Term t1;
    t1.factor[0] = X;
    t1.factor[1] = Tt;
    pb.source_sep.terms.push_back(t1);
    SeparatedSource::Term t2;
    t2.coef = -1.0;
    t2.factor[0] = Xxx;
    t2.factor[1] = T;
    pb.source_sep.terms.push_back(t2);
  }
  // final-time face carries no condition (marched past), top of time axis free
  pb.neumann_faces = {{1, 1}};
  return pb;
}

/// 3D + time moving-source manufactured problem. The envelope is
/// (1 - exp(5t)) as printed in the source description; decaying_envelope
/// switches to (1 - exp(-5t)).
/// u = exp(-3((x-x_c(t))^2/R^2 + y^2/R^2 + z^2/D^2)) * E(t), x_c = x0 - v t.
inline ManufacturedProblem moving3d(double v, double R, double D, double x0,
                                    const Box& domain, double k = 1.0, double rho_cp = 1.0,
                                    bool decaying_envelope = false) {
  ManufacturedProblem pb;
  pb.name = "moving3d";
  pb.dim = 4;
  pb.spacetime = true;
  pb.k = k;
  pb.rho_cp = rho_cp;
  pb.domain = domain;

  const double esgn = decaying_envelope ? -5.0 : 5.0;
  auto E = [esgn](double t) { return 1.0 - std::exp(esgn * t); };
  auto Et = [esgn](double t) { return -esgn * std::exp(esgn * t); };
  auto xc = [x0, v](double t) { return x0 - v * t; };
  auto G = [R, D, xc](const std::array<double, kMaxDim>& x) {
    double dx = x[0] - xc(x[3]);
    return std::exp(-3.0 * (dx * dx / (R * R) + x[1] * x[1] / (R * R) + x[2] * x[2] / (D * D)));
  };

  pb.exact = [G, E](const std::array<double, kMaxDim>& x) { return G(x) * E(x[3]); };
  pb.exact_grad = [G, E, Et, R, D, xc, v](const std::array<double, kMaxDim>& x,
                                          std::array<double, kMaxDim>& g) {
    const double gv = G(x);
    const double dx = x[0] - xc(x[3]);
    g[0] = -6.0 * dx / (R * R) * gv * E(x[3]);
    g[1] = -6.0 * x[1] / (R * R) * gv * E(x[3]);
    g[2] = -6.0 * x[2] / (D * D) * gv * E(x[3]);
    // chain rule: moving center contributes +6 dx v / R^2
    g[3] = gv * Et(x[3]) + 6.0 * dx * v / (R * R) * gv * E(x[3]);
  };
  pb.exact_lap = [G, E, R, D, xc](const std::array<double, kMaxDim>& x) {
    const double gv = G(x);
    const double dx = x[0] - xc(x[3]);
    double lap = (-6.0 / (R * R) + 36.0 * dx * dx / (R * R * R * R)) +
                 (-6.0 / (R * R) + 36.0 * x[1] * x[1] / (R * R * R * R)) +
                 (-6.0 / (D * D) + 36.0 * x[2] * x[2] / (D * D * D * D));
    return lap * gv * E(x[3]);
  };
  pb.source = [pb_k = k, pb_rc = rho_cp, G, E, Et, R, D, xc, v](
                  const std::array<double, kMaxDim>& x) {
    const double gv = G(x);
    const double dx = x[0] - xc(x[3]);
    const double ut = gv * Et(x[3]) + 6.0 * dx * v / (R * R) * gv * E(x[3]);
    const double lap = ((-6.0 / (R * R) + 36.0 * dx * dx / (R * R * R * R)) +
                        (-6.0 / (R * R) + 36.0 * x[1] * x[1] / (R * R * R * R)) +
                        (-6.0 / (D * D) + 36.0 * x[2] * x[2] / (D * D * D * D))) *
                       gv * E(x[3]);
    return pb_rc * ut - pb_k * lap;
  };
  // top surface z = hi[2]: u_z = 0 there when the source center sits on it
  pb.neumann_faces = {{2, 1}, {3, 1}};
  return pb;
}

/// LPBF laser and material parameters (input units per the table:
/// W/(m K), g/cm^3, J/(kg K), mm/s, um, um, W, -, K).
struct LaserParams {
  double k = 22.0;        // W / (m K)
  double rho = 4.27;      // g / cm^3
  double c_p = 745.0;     // J / (kg K)
  double v = 500.0;       // mm / s
  double R = 110.0;       // um
  double D = 50.0;        // um
  double P = 200.0;       // W
  double eta = 0.25;      // absorptivity
  double T_amb = 298.15;  // K

  void validate() const {
    for (double q : {k, rho, c_p, v, R, D, P, eta, T_amb})
      if (q <= 0.0) throw std::invalid_argument("LaserParams: all parameters must be positive");
  }

  /// Peak volumetric intensity A = 6 sqrt(3) P eta / (pi^{3/2} R^2 D), W/um^3.
  double intensity() const {
    return 6.0 * std::sqrt(3.0) * P * eta / (std::pow(M_PI, 1.5) * R * R * D);
  }

  // Internal solver units are (mm, ms, K): energies in J.
  double k_internal() const { return k * 1e-3 * 1e-3; }          // J/(ms mm K)
  // rho: g/cm^3 -> 1e-3 g/mm^3; c_p: J/(kg K) -> 1e-3 J/(g K)
  double rho_cp_internal() const { return rho * c_p * 1e-6; }    // J/(mm^3 K)
  double v_internal() const { return v * 1e-3; }                 // mm/ms
  double R_internal() const { return R * 1e-3; }                 // mm
  double D_internal() const { return D * 1e-3; }                 // mm
  /// A in J/(ms mm^3): W/um^3 = J/s/um^3 -> 1e-3 J/ms * 1e9 um^3/mm^3.
  double intensity_internal() const { return intensity() * 1e6; }
};

/// Ellipsoidal Gaussian volumetric heat input at (x, t); track along +x from
/// x_start, centered at y = y_c, z = z_c. Units follow `params` (W/um^3 with
/// the table's um lengths).
inline double lpbf_source(const LaserParams& params, const std::array<double, kMaxDim>& x,
                          double t, double x_start = 0.0, double y_c = 0.0, double z_c = 0.0) {
  params.validate();
  const double A = params.intensity();
  const double xc = x_start + params.v * t;
  const double dx = x[0] - xc, dy = x[1] - y_c, dz = x[2] - z_c;
  return A * std::exp(-3.0 * (dx * dx / (params.R * params.R) + dy * dy / (params.R * params.R) +
                              dz * dz / (params.D * params.D)));
}

}  // namespace mlvms
