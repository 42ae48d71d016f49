#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "mlvms/problems.hpp"

using namespace mlvms;

TEST_CASE("poisson2d_gaussians values and residual") {
  auto pb = poisson2d_gaussians();
  // u(9,9) = sum_k exp(-2 pi (0.8 - 0.2k)^2)
  double want = 0.0;
  for (int k = 1; k <= 7; ++k)
    want += std::exp(-2.0 * M_PI * (0.8 - 0.2 * k) * (0.8 - 0.2 * k));
  CHECK(pb.exact({9, 9, 0, 0}) == Catch::Approx(want).epsilon(1e-14));

  // boundary values vanish to double precision
  CHECK(std::abs(pb.exact({0, 10, 0, 0})) < 1e-60);
  CHECK(std::abs(pb.exact({20, 3, 0, 0})) < 1e-60);

  CHECK(pb.residual_self_check(1000) < 1e-10);
}

TEST_CASE("poisson2d gradient consistent with finite differences") {
  auto pb = poisson2d_gaussians();
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> U(8.0, 10.0);
  for (int it = 0; it < 50; ++it) {
    std::array<double, kMaxDim> x{U(rng), U(rng), 0, 0};
    std::array<double, kMaxDim> g{};
    pb.exact_grad(x, g);
    for (int d = 0; d < 2; ++d) {
      auto xp = x, xm = x;
      xp[d] += 1e-6;
      xm[d] -= 1e-6;
      double fd = (pb.exact(xp) - pb.exact(xm)) / 2e-6;
      CHECK(g[d] == Catch::Approx(fd).margin(1e-6 * (1 + std::abs(fd))));
    }
  }
}

TEST_CASE("heat1d manufactured solution") {
  auto pb = heat1d();
  // zero initial condition
  for (double x : {-1.0, -0.3, 0.0, 0.7}) CHECK(pb.exact({x, 0, 0, 0}) == 0.0);
  // u(0,t) -> 1 for large t
  CHECK(pb.exact({0, 100, 0, 0}) == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(pb.residual_self_check(1000) < 1e-10);
}

TEST_CASE("moving3d manufactured solution") {
  Box dom;
  dom.dim = 4;
  dom.lo = {-6, -6, -6, 0};
  dom.hi = {6, 6, 0, 0.01};
  auto pb = moving3d(0.5, 0.11, 0.05, -5.0, dom);

  // envelope at the moving center
  double t = 0.004;
  double xc = -5.0 - 0.5 * t;
  CHECK(pb.exact({xc, 0, 0, t}) == Catch::Approx(1.0 - std::exp(5.0 * t)).epsilon(1e-12));

  // top-surface normal derivative vanishes (z = 0 is the Gaussian center plane)
  std::array<double, kMaxDim> g{};
  pb.exact_grad({xc + 0.1, 0.05, 0.0, t}, g);
  CHECK(std::abs(g[2]) < 1e-14);

  CHECK(pb.residual_self_check(1000) < 1e-8);

  // decaying-envelope variant also consistent
  auto pb2 = moving3d(0.5, 0.11, 0.05, -5.0, dom, 1.0, 1.0, true);
  CHECK(pb2.residual_self_check(1000) < 1e-8);
  CHECK(pb2.exact({xc, 0, 0, t}) == Catch::Approx(1.0 - std::exp(-5.0 * t)).epsilon(1e-12));
}

TEST_CASE("moving3d gradient matches finite differences") {
  Box dom;
  dom.dim = 4;
  dom.lo = {-6, -1, -1, 0};
  dom.hi = {-4, 1, 0, 0.01};
  auto pb = moving3d(0.5, 0.11, 0.05, -5.0, dom);
  std::mt19937 rng(5);
  for (int it = 0; it < 30; ++it) {
    std::array<double, kMaxDim> x{};
    for (int d = 0; d < 4; ++d) {
      std::uniform_real_distribution<double> U(dom.lo[d], dom.hi[d]);
      x[d] = U(rng);
    }
    std::array<double, kMaxDim> g{};
    pb.exact_grad(x, g);
    for (int d = 0; d < 4; ++d) {
      auto xp = x, xm = x;
      double step = 1e-7;
      xp[d] += step;
      xm[d] -= step;
      double fd = (pb.exact(xp) - pb.exact(xm)) / (2 * step);
      CHECK(g[d] == Catch::Approx(fd).margin(1e-5 * (1 + std::abs(fd))));
    }
  }
}

TEST_CASE("LPBF intensity and source profile") {
  LaserParams lp;  // table defaults
  // independent arithmetic evaluation of A = 6 sqrt(3) P eta / (pi^1.5 R^2 D)
  double A = 6.0 * 1.7320508075688772 * 200.0 * 0.25 /
             (5.568327996831708 * 110.0 * 110.0 * 50.0);
  CHECK(lp.intensity() == Catch::Approx(A).epsilon(1e-12));

  // center value = A; offset by R along x gives A e^{-3}
  double t = 0.0;
  CHECK(lpbf_source(lp, {0, 0, 0, 0}, t) == Catch::Approx(lp.intensity()).epsilon(1e-12));
  CHECK(lpbf_source(lp, {lp.R, 0, 0, 0}, t) ==
        Catch::Approx(lp.intensity() * std::exp(-3.0)).epsilon(1e-12));

  // internal (mm, ms, K) conversions
  // 4.27 g/cm^3 = 4.27e-3 g/mm^3; 745 J/(kg K) = 0.745 J/(g K)
  CHECK(lp.rho_cp_internal() == Catch::Approx(4.27e-3 * 0.745).epsilon(1e-12));
  CHECK(lp.k_internal() == Catch::Approx(2.2e-5).epsilon(1e-12));
  CHECK(lp.intensity_internal() == Catch::Approx(lp.intensity() * 1e6).epsilon(1e-12));

  LaserParams bad = lp;
  bad.P = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
