#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "mlvms/movingsource.hpp"
#include "mlvms/assembly.hpp"
#include "mlvms/fields.hpp"

using namespace mlvms;

namespace {

// Reference-frame oracle for 1 space + time: assemble the transformed form
//   rho_cp w (C u_xi + u_tau) detJ + k A^2 w_xi u_xi detJ
// pointwise from jacobian(), with the same tensor-product basis the separated
// assembly uses (cached AxisDisc tables). Independent of the coefficient
// factorization, so it validates the separable rewrite of the transform.
SparseSystem assemble_reference(const std::vector<const AxisDisc*>& axes,
                                const CoordinateMap& map, double rho_cp, double k,
                                const PointFn& f_phys) {
  REQUIRE(axes.size() == 2);
  const AxisDisc& dx = *axes[0];
  const AxisDisc& dt = *axes[1];
  const int nqx = dx.quad_order(), nqt = dt.quad_order();
  const std::int64_t nx = dx.n_nodes();
  std::vector<Triplet> trips;
  SparseSystem sys;
  sys.b = Eigen::VectorXd::Zero(nx * dt.n_nodes());
  for (int et = 0; et < dt.basis().n_elem(); ++et) {
    auto [t0, t1] = dt.basis().element_support(et);
    for (int ex = 0; ex < dx.basis().n_elem(); ++ex) {
      auto [x0, x1] = dx.basis().element_support(ex);
      for (int qt = 0; qt < nqt; ++qt) {
        for (int qx = 0; qx < nqx; ++qx) {
          std::array<double, kMaxDim> pt{dx.quad_x(ex)[qx], dt.quad_x(et)[qt], 0, 0};
          const double wt = dx.quad_w(ex)[qx] * dt.quad_w(et)[qt];
          MapJacobian J = map.jacobian(pt);
          const double fv = f_phys ? f_phys(map.map_point(pt)) : 0.0;
          for (int it = t1 - t0; it >= 0; --it) {
            for (int ix = x1 - x0; ix >= 0; --ix) {
              const std::int64_t I = (x0 + ix) + nx * (t0 + it);
              const double Ni = dx.quad_vals(ex)(qx, ix) * dt.quad_vals(et)(qt, it);
              const double Nix = dx.quad_ders(ex)(qx, ix) * dt.quad_vals(et)(qt, it);
              if (fv != 0.0) sys.b(I) += wt * J.detJ * Ni * fv;
              for (int jt = t1 - t0; jt >= 0; --jt) {
                for (int jx = x1 - x0; jx >= 0; --jx) {
                  const std::int64_t Jn = (x0 + jx) + nx * (t0 + jt);
                  const double Njx = dx.quad_ders(ex)(qx, jx) * dt.quad_vals(et)(qt, jt);
                  const double Njt = dx.quad_vals(ex)(qx, jx) * dt.quad_ders(et)(qt, jt);
                  const double v = rho_cp * Ni * (J.Cd[0] * Njx + Njt) +
                                   k * J.Ad[0] * J.Ad[0] * Nix * Njx;
                  trips.emplace_back(I, Jn, wt * J.detJ * v);
                }
              }
            }
          }
        }
      }
    }
  }
  sys.A.resize(sys.b.size(), sys.b.size());
  sys.A.setFromTriplets(trips.begin(), trips.end());
  sys.A.makeCompressed();
  sys.symmetric = false;
  return sys;
}

double rel_mat_diff(const SpMat& A, const SpMat& B) {
  double scale = 0.0;
  for (int c = 0; c < A.outerSize(); ++c)
    for (SpMat::InnerIterator it(A, c); it; ++it) scale = std::max(scale, std::abs(it.value()));
  SpMat D = A - B;
  double diff = 0.0;
  for (int c = 0; c < D.outerSize(); ++c)
    for (SpMat::InnerIterator it(D, c); it; ++it) diff = std::max(diff, std::abs(it.value()));
  return diff / scale;
}

// 1D + time moving Gaussian manufactured problem:
// u = exp(-(x-xc)^2/R^2)(1-exp(-5t)), xc = x0 + v t
struct Moving1D {
  double v = 1.0, R = 0.25, x0 = 1.0, k = 0.1, rho_cp = 1.0;
  double exact(double x, double t) const {
    const double d = x - (x0 + v * t);
    return std::exp(-d * d / (R * R)) * (1.0 - std::exp(-5 * t));
  }
  double source(double x, double t) const {
    const double d = x - (x0 + v * t);
    const double g = std::exp(-d * d / (R * R));
    const double E = 1.0 - std::exp(-5 * t);
    const double ut = g * (5 * std::exp(-5 * t) + E * 2 * d * v / (R * R));
    const double uxx = g * E * (4 * d * d / (R * R * R * R) - 2 / (R * R));
    return rho_cp * ut - k * uxx;
  }
};

CoordinateMap make_map_1d(double v, const Box& refbox) {
  MovingAxis m;
  m.axis = 0;
  m.win_lo0 = 0.5;
  m.win_hi0 = 1.5;
  m.v = v;
  m.ref_lo = 0.5;
  m.ref_hi = 1.5;
  return CoordinateMap(refbox, {m}, 0.4);
}

}  // namespace

TEST_CASE("identity map: v=0, coinciding windows") {
  Box box{{0, 0}, {4, 2}, 2};
  auto map = make_map_1d(0.0, box);
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> Ux(0, 4), Ut(0, 2);
  for (int i = 0; i < 50; ++i) {
    std::array<double, kMaxDim> xi{Ux(rng), Ut(rng), 0, 0};
    auto x = map.map_point(xi);
    CHECK(x[0] == Catch::Approx(xi[0]).margin(1e-14));
    auto J = map.jacobian(xi);
    CHECK(J.A == Catch::Approx(1.0).margin(1e-14));
    CHECK(J.B == 1.0);
    CHECK(J.C == Catch::Approx(0.0).margin(1e-14));
    CHECK(J.D == 0.0);
    CHECK(J.detJ == Catch::Approx(1.0).margin(1e-14));
  }
}

TEST_CASE("center branch of a rigid translation: A=1, C=-v, detJ=1") {
  Box box{{0, 0}, {4, 2}, 2};
  const double v = 0.9;
  auto map = make_map_1d(v, box);
  std::array<double, kMaxDim> xi{1.0, 0.3, 0, 0};  // inside the reference window
  auto J = map.jacobian(xi);
  CHECK(J.A == Catch::Approx(1.0).margin(1e-14));
  CHECK(J.C == Catch::Approx(-v).margin(1e-14));
  CHECK(J.detJ == Catch::Approx(1.0).margin(1e-14));
  // the window midpoint maps to the moving source center
  std::array<double, kMaxDim> mid{1.0, 0.4, 0, 0};
  CHECK(map.map_point(mid)[0] == Catch::Approx(1.0 + v * 0.4).margin(1e-14));
}

TEST_CASE("bijectivity: round trip at random points to 1e-12") {
  Box box{{0, 0}, {4, 2}, 2};
  auto map = make_map_1d(0.9, box);
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> Ux(0, 4), Ut(0, 2);
  for (int i = 0; i < 100; ++i) {
    std::array<double, kMaxDim> xi{Ux(rng), Ut(rng), 0, 0};
    auto x = map.map_point(xi);
    CHECK(x[0] >= 0.0);
    CHECK(x[0] <= 4.0);
    auto back = map.inverse_point(x);
    CHECK(std::abs(back[0] - xi[0]) < 1e-12);
    CHECK(back[1] == xi[1]);
  }
}

TEST_CASE("branch continuity across window edges") {
  Box box{{0, 0}, {4, 2}, 2};
  auto map = make_map_1d(0.9, box);
  for (double edge : {0.5, 1.5}) {
    std::array<double, kMaxDim> a{edge - 1e-10, 0.7, 0, 0};
    std::array<double, kMaxDim> b{edge + 1e-10, 0.7, 0, 0};
    CHECK(std::abs(map.map_point(a)[0] - map.map_point(b)[0]) < 1e-9);
  }
}

TEST_CASE("two moving axes: detJ = 1/(A B) and jacobian FD oracle") {
  Box box{{0, 0, 0}, {4, 3, 2}, 3};
  MovingAxis mx{0, 0.5, 1.5, 0.9, 0.5, 1.5};
  MovingAxis my{1, 0.4, 1.2, 0.5, 0.4, 1.2};
  CoordinateMap map(box, {mx, my}, 0.3);

  std::mt19937 rng(17);
  std::uniform_real_distribution<double> Ux(0, 4), Uy(0, 3), Ut(0, 2);
  for (int i = 0; i < 200; ++i) {
    std::array<double, kMaxDim> xi{Ux(rng), Uy(rng), Ut(rng), 0};
    auto J = map.jacobian(xi);
    CHECK(std::abs(J.detJ - 1.0 / (J.A * J.B)) < 1e-13 * std::abs(J.detJ));
    auto x = map.map_point(xi);
    auto back = map.inverse_point(x);
    CHECK(std::abs(back[0] - xi[0]) < 1e-12);
    CHECK(std::abs(back[1] - xi[1]) < 1e-12);
  }

  // side branch with shrinking width: A and C against finite differences
  std::array<double, kMaxDim> xi{3.0, 2.0, 0.6, 0};  // right x branch
  auto J = map.jacobian(xi);
  const double dlt = 1e-6;
  auto xp = xi, xm = xi;
  xp[0] += dlt;
  xm[0] -= dlt;
  const double dxdxi = (map.map_point(xp)[0] - map.map_point(xm)[0]) / (2 * dlt);
  CHECK(std::abs(J.A - 1.0 / dxdxi) < 1e-6 * std::abs(J.A));
  // C = d(xi)/dt at fixed physical x
  auto x = map.map_point(xi);
  auto xt = x;
  xt[2] += dlt;
  const double dxidt = (map.inverse_point(xt)[0] - xi[0]) / dlt;
  CHECK(std::abs(J.C - dxidt) < 1e-5 * std::max(std::abs(J.C), 1.0));
}

TEST_CASE("derivative operator identity d/dx = A d/dxi") {
  Box box{{0, 0}, {4, 2}, 2};
  auto map = make_map_1d(0.9, box);
  auto g = [](double x) { return std::sin(1.3 * x); };
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> Ux(0.1, 3.9), Ut(0, 2);
  const double dlt = 1e-6;
  for (int i = 0; i < 50; ++i) {
    std::array<double, kMaxDim> xi{Ux(rng), Ut(rng), 0, 0};
    auto J = map.jacobian(xi);
    auto xp = xi, xm = xi;
    xp[0] += dlt;
    xm[0] -= dlt;
    const double dgdxi = (g(map.map_point(xp)[0]) - g(map.map_point(xm)[0])) / (2 * dlt);
    const double dgdx = 1.3 * std::cos(1.3 * map.map_point(xi)[0]);
    CHECK(std::abs(J.A * dgdxi - dgdx) < 1e-6 * std::max(std::abs(dgdx), 1.0));
  }
}

TEST_CASE("invalid maps rejected") {
  Box box{{0, 0}, {4, 2}, 2};
  // window exits the box over the time range
  MovingAxis runaway{0, 0.5, 1.5, 1.5, 0.5, 1.5};
  CHECK_THROWS_AS(CoordinateMap(box, {runaway}, 0.4), std::invalid_argument);
  // degenerate window
  MovingAxis degen{0, 1.0, 1.0, 0.1, 0.5, 1.5};
  CHECK_THROWS_AS(CoordinateMap(box, {degen}, 0.4), std::invalid_argument);
  // reference window touching the box
  MovingAxis tight{0, 0.5, 1.5, 0.0, 0.0, 1.0};
  CHECK_THROWS_AS(CoordinateMap(box, {tight}, 0.4), std::invalid_argument);
  // nonpositive margin
  MovingAxis ok{0, 0.5, 1.5, 0.0, 0.5, 1.5};
  CHECK_THROWS_AS(CoordinateMap(box, {ok}, 0.0), std::invalid_argument);
  // point outside the reference box
  auto map = make_map_1d(0.0, box);
  CHECK_THROWS_AS(map.map_point({-1.0, 0.5, 0, 0}), std::invalid_argument);
}

TEST_CASE("separated transformed coefficients match the pointwise oracle") {
  Box box{{0, 0}, {4, 2}, 2};
  HyperParams hp{3.0, 2, 2};
  Axis ax(0, 4, 40), at(0, 2, 16);  // window edges 0.5/1.5 on the grid
  TensorMesh mesh({ax, at});
  PatchTable table(mesh, hp);
  AxisDisc dx(ax, hp, hp.p + 2), dt(at, hp, hp.p + 2);
  std::vector<const AxisDisc*> axes{&dx, &dt};
  const double rho_cp = 1.0, k = 0.1;

  SECTION("static non-identity window (v = 0, shifted reference window)") {
    MovingAxis m{0, 0.7, 1.7, 0.0, 0.5, 1.5};  // phys window != ref window
    CoordinateMap map(box, {m}, 0.3);
    SpMat A_sep = assemble_separated(axes, transformed_coefficients(map, rho_cp, k));
    auto oracle = assemble_reference(axes, map, rho_cp, k, nullptr);
    CHECK(rel_mat_diff(A_sep, oracle.A) < 1e-10);
  }
  SECTION("moving window") {
    auto map = make_map_1d(0.9, box);
    SpMat A_sep = assemble_separated(axes, transformed_coefficients(map, rho_cp, k));
    auto oracle = assemble_reference(axes, map, rho_cp, k, nullptr);
    CHECK(rel_mat_diff(A_sep, oracle.A) < 1e-10);
  }
  SECTION("identity map reduces to the plain heat operator") {
    auto map = make_map_1d(0.0, box);
    SpMat A_sep = assemble_separated(axes, transformed_coefficients(map, rho_cp, k));
    SpMat A_heat = assemble_separated(axes, SeparatedOperator::heat(2, rho_cp, k));
    CHECK(rel_mat_diff(A_sep, A_heat) < 1e-12);
  }
}

TEST_CASE("reference-frame solve matches the fixed-frame solve on a moving source") {
  Moving1D pb;
  Box box{{0, 0}, {4, 2}, 2};
  HyperParams hp{3.0, 2, 2};
  Axis ax(0, 4, 80), at(0, 2, 32);
  TensorMesh mesh({ax, at});
  PatchTable table(mesh, hp);
  auto map = make_map_1d(pb.v, box);

  PointFn f = [&](const std::array<double, kMaxDim>& x) { return pb.source(x[0], x[1]); };
  PointFn ex = [&](const std::array<double, kMaxDim>& x) { return pb.exact(x[0], x[1]); };

  // fixed frame: plain space-time assembly with the moving source
  auto sys_fix = assemble_spacetime(mesh, table, pb.rho_cp, pb.k, f);
  auto bnodes = boundary_nodes(mesh, {{1, 1}});
  apply_dirichlet(sys_fix, mesh, bnodes, ex);
  AxisDisc dx(ax, hp, hp.p + 2), dt(at, hp, hp.p + 2);
  std::vector<const AxisDisc*> axes{&dx, &dt};
  TensorField u_fix{axes, solve_linear(sys_fix)};

  // reference frame: separated transformed operator + pointwise load oracle
  SparseSystem sys_ref = assemble_reference(axes, map, pb.rho_cp, pb.k, f);
  sys_ref.A = assemble_separated(axes, transformed_coefficients(map, pb.rho_cp, pb.k));
  PointFn ex_ref = [&](const std::array<double, kMaxDim>& xi) {
    auto x = map.map_point(xi);
    return pb.exact(x[0], x[1]);
  };
  apply_dirichlet(sys_ref, mesh, bnodes, ex_ref);
  TensorField u_ref{axes, solve_linear(sys_ref)};

  // sampled errors vs the exact solution, and mutual agreement
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> Ux(0, 4), Ut(0, 2);
  double e_fix = 0, e_ref = 0, e_diff = 0;
  const int N = 400;
  for (int i = 0; i < N; ++i) {
    std::array<double, kMaxDim> x{Ux(rng), Ut(rng), 0, 0};
    const double uf = u_fix.eval(x);
    const double ur = u_ref.eval(map.inverse_point(x));
    const double ue = pb.exact(x[0], x[1]);
    e_fix += (uf - ue) * (uf - ue);
    e_ref += (ur - ue) * (ur - ue);
    e_diff += (uf - ur) * (uf - ur);
  }
  e_fix = std::sqrt(e_fix / N);
  e_ref = std::sqrt(e_ref / N);
  e_diff = std::sqrt(e_diff / N);
  CHECK(e_fix < 2e-3);  // both resolve the problem
  CHECK(e_ref < 2e-3);
  CHECK(e_diff <= 1.1 * (e_fix + e_ref));  // combined discretization error
}
