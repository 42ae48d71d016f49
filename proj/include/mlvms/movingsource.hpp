#pragma once

#include "mlvms/separated.hpp"
#include "mlvms/mesh.hpp"

namespace mlvms {

/// One spatial axis with a rigid window moving at constant velocity: the
/// physical window [win_lo0 + v t, win_hi0 + v t] maps onto the fixed
/// reference window [ref_lo, ref_hi].
struct MovingAxis {
  int axis = 0;
  double win_lo0 = 0.0, win_hi0 = 0.0;  // physical window at t = 0
  double v = 0.0;                       // window velocity
  double ref_lo = 0.0, ref_hi = 0.0;    // reference window (time-independent)
};

/// Inverse-Jacobian data of the transformation at one reference point:
/// d/dx = A d/dxi, d/dy = B d/deta, d/dt = C d/dxi + D d/deta + d/dtau.
struct MapJacobian {
  double A = 1.0, B = 1.0;  // first/second moving axes (1 when identity)
  double C = 0.0, D = 0.0;
  double detJ = 1.0;  // = 1/(A B)
  std::array<double, kMaxDim> Ad{};  // per-axis A
  std::array<double, kMaxDim> Cd{};  // per-axis C
};

/// Piecewise-linear coordinate transformation that fixes moving windows in a
/// reference frame. Per moving axis the line splits into three branches
/// (before / inside / after the window); each branch maps linearly onto the
/// corresponding fixed reference branch. Non-moving axes and time (tau = t)
/// are identities. Time is the last axis of the box.
class CoordinateMap {
 public:
  /// `domain` is the space-time reference box (time last); the physical box
  /// shares the outer edges. `margin` is the minimum gap that must remain
  /// between the window and the outer box over the whole time range
  /// (at least one coarse element).
  CoordinateMap(const Box& domain, std::vector<MovingAxis> moving, double margin)
      : box_(domain), moving_(std::move(moving)), margin_(margin) {
    if (box_.dim < 2) throw std::invalid_argument("CoordinateMap: need space + time axes");
    if (margin_ <= 0) throw std::invalid_argument("CoordinateMap: margin must be positive");
    const double t0 = box_.lo[time_axis()], t1 = box_.hi[time_axis()];
    for (const auto& m : moving_) {
      if (m.axis < 0 || m.axis >= time_axis())
        throw std::invalid_argument("CoordinateMap: moving axis out of range");
      if (m.win_hi0 - m.win_lo0 <= 0 || m.ref_hi - m.ref_lo <= 0)
        throw std::invalid_argument("CoordinateMap: degenerate window");
      if (m.ref_lo - box_.lo[m.axis] < margin_ - 1e-12 ||
          box_.hi[m.axis] - m.ref_hi < margin_ - 1e-12)
        throw std::invalid_argument("CoordinateMap: reference window too close to the box");
      for (double t : {t0, t1}) {  // linear motion: endpoints suffice
        const double lo = m.win_lo0 + m.v * t, hi = m.win_hi0 + m.v * t;
        if (lo - box_.lo[m.axis] < margin_ - 1e-12 || box_.hi[m.axis] - hi < margin_ - 1e-12)
          throw std::invalid_argument(
              "CoordinateMap: window exits the outer box (reduce track length or enlarge box)");
      }
    }
  }

  const Box& domain() const { return box_; }
  int dim() const { return box_.dim; }
  int time_axis() const { return box_.dim - 1; }
  const std::vector<MovingAxis>& moving_axes() const { return moving_; }

  const MovingAxis* moving(int axis) const {
    for (const auto& m : moving_)
      if (m.axis == axis) return &m;
    return nullptr;
  }

  /// One branch of a moving axis: reference interval [ra, rb] mapped onto
  /// the physical interval [xa + va t, xb + vb t].
  struct Branch {
    double ra, rb;  // reference interval
    double xa, xb;  // physical interval at t = 0
    double va, vb;  // edge velocities
  };

  Branch branch_of(const MovingAxis& m, double xi) const {
    const double lo = box_.lo[m.axis], hi = box_.hi[m.axis];
    if (xi < m.ref_lo) return {lo, m.ref_lo, lo, m.win_lo0, 0.0, m.v};
    if (xi > m.ref_hi) return {m.ref_hi, hi, m.win_hi0, hi, m.v, 0.0};
    return {m.ref_lo, m.ref_hi, m.win_lo0, m.win_hi0, m.v, m.v};
  }

  std::array<Branch, 3> branches(const MovingAxis& m) const {
    const double lo = box_.lo[m.axis], hi = box_.hi[m.axis];
    return {Branch{lo, m.ref_lo, lo, m.win_lo0, 0.0, m.v},
            Branch{m.ref_lo, m.ref_hi, m.win_lo0, m.win_hi0, m.v, m.v},
            Branch{m.ref_hi, hi, m.win_hi0, hi, m.v, 0.0}};
  }

  /// Physical image of a reference space-time point (time unchanged).
  std::array<double, kMaxDim> map_point(const std::array<double, kMaxDim>& xi) const {
    check_inside(xi);
    std::array<double, kMaxDim> x = xi;
    const double t = xi[time_axis()];
    for (const auto& m : moving_) {
      const Branch b = branch_of(m, xi[m.axis]);
      const double xa = b.xa + b.va * t, xb = b.xb + b.vb * t;
      const double s = (xi[m.axis] - b.ra) / (b.rb - b.ra);
      x[m.axis] = xb * s + xa * (1.0 - s);
    }
    return x;
  }

  /// Reference preimage of a physical space-time point.
  std::array<double, kMaxDim> inverse_point(const std::array<double, kMaxDim>& x) const {
    std::array<double, kMaxDim> xi = x;
    const double t = x[time_axis()];
    for (const auto& m : moving_) {
      const double wlo = m.win_lo0 + m.v * t, whi = m.win_hi0 + m.v * t;
      Branch b;
      if (x[m.axis] < wlo)
        b = {box_.lo[m.axis], m.ref_lo, box_.lo[m.axis], m.win_lo0, 0.0, m.v};
      else if (x[m.axis] > whi)
        b = {m.ref_hi, box_.hi[m.axis], m.win_hi0, box_.hi[m.axis], m.v, 0.0};
      else
        b = {m.ref_lo, m.ref_hi, m.win_lo0, m.win_hi0, m.v, m.v};
      const double xa = b.xa + b.va * t, xb = b.xb + b.vb * t;
      if (xb - xa <= 0) throw std::invalid_argument("CoordinateMap: degenerate window");
      const double s = (x[m.axis] - xa) / (xb - xa);
      xi[m.axis] = b.rb * s + b.ra * (1.0 - s);
    }
    return xi;
  }

  /// Inverse-Jacobian entries at a reference space-time point.
  MapJacobian jacobian(const std::array<double, kMaxDim>& xi) const {
    check_inside(xi);
    MapJacobian J;
    J.Ad.fill(1.0);
    J.Cd.fill(0.0);
    const double t = xi[time_axis()];
    double det = 1.0;
    for (const auto& m : moving_) {
      const Branch b = branch_of(m, xi[m.axis]);
      const double xa = b.xa + b.va * t, xb = b.xb + b.vb * t;
      const double w = xb - xa;
      if (w <= 0) throw std::invalid_argument("CoordinateMap: degenerate window");
      J.Ad[m.axis] = (b.rb - b.ra) / w;
      J.Cd[m.axis] = -(b.vb * (xi[m.axis] - b.ra) + b.va * (b.rb - xi[m.axis])) / w;
      det /= J.Ad[m.axis];
    }
    J.detJ = det;
    if (!moving_.empty()) {
      J.A = J.Ad[moving_[0].axis];
      J.C = J.Cd[moving_[0].axis];
    }
    if (moving_.size() > 1) {
      J.B = J.Ad[moving_[1].axis];
      J.D = J.Cd[moving_[1].axis];
    }
    return J;
  }

 private:
  void check_inside(const std::array<double, kMaxDim>& xi) const {
    for (int d = 0; d < box_.dim; ++d) {
      const double tol = 1e-9 * (box_.hi[d] - box_.lo[d]);
      if (xi[d] < box_.lo[d] - tol || xi[d] > box_.hi[d] + tol)
        throw std::invalid_argument("CoordinateMap: point outside reference box");
    }
  }

  Box box_;
  std::vector<MovingAxis> moving_;
  double margin_;
};

/// Transformed space-time heat operator in the reference frame,
///   rho_cp w (sum_m C_m u_{xi_m} + u_tau) detJ + k sum_d A_d^2 w_d u_d detJ,
/// with A_d = 1, C_d = 0 on non-moving axes. Every coefficient is separable
/// within one branch combination, so the operator is a sum over the 3^M
/// branch products of terms restricted to their reference boxes, with all
/// time dependence collected in the tau-axis weight.
inline SeparatedOperator transformed_coefficients(const CoordinateMap& map, double rho_cp,
                                                  double k) {
  const int D = map.dim();
  const int T = map.time_axis();
  const auto& mv = map.moving_axes();
  const int M = static_cast<int>(mv.size());

  SeparatedOperator op;
  op.dim = D;

  std::vector<int> combo(M, 0);
  while (true) {
    // active branches of this combination
    std::vector<CoordinateMap::Branch> br(M);
    bool empty = false;
    for (int i = 0; i < M; ++i) {
      br[i] = map.branches(mv[i])[combo[i]];
      if (br[i].rb - br[i].ra <= 0) empty = true;
    }
    if (!empty) {
      // detJ(t) = prod_m w_m(t) / dxi_m, with w_m(t) = width of branch m
      auto width = [](const CoordinateMap::Branch& b) {
        return [b](double t) { return (b.xb + b.vb * t) - (b.xa + b.va * t); };
      };
      auto base_term = [&](void) {
        SeparatedOperator::Term t;
        for (int i = 0; i < M; ++i) {
          t.lo[mv[i].axis] = br[i].ra;
          t.hi[mv[i].axis] = br[i].rb;
        }
        return t;
      };
      // detJ with one factor skipped (or squared-A folded in) on the tau axis
      auto tau_weight = [&](int skip, int invert) {
        // prod over moving axes of w_m(t)/dxi_m, excluding `skip`;
        // if invert >= 0, multiply by dxi/w for that axis (A^2 detJ case)
        std::vector<std::function<double(double)>> facs;
        for (int i = 0; i < M; ++i) {
          if (i == skip) continue;
          const double dxi = br[i].rb - br[i].ra;
          auto w = width(br[i]);
          if (i == invert) {
            facs.push_back([w, dxi](double t) { return dxi / w(t); });
          } else {
            facs.push_back([w, dxi](double t) { return w(t) / dxi; });
          }
        }
        return [facs](double t) {
          double p = 1.0;
          for (const auto& f : facs) p *= f(t);
          return p;
        };
      };

      // time term: rho_cp w u_tau detJ
      {
        SeparatedOperator::Term t = base_term();
        t.coef = rho_cp;
        t.db[T] = 1;
        t.weight[T] = tau_weight(-1, -1);
        op.terms.push_back(std::move(t));
      }
      // advection terms: rho_cp w C_m u_{xi_m} detJ; C_m detJ =
      // -(vb (xi-ra) + va (rb-xi)) / dxi_m * prod_{m'!=m} w/dxi
      for (int i = 0; i < M; ++i) {
        if (br[i].va == 0.0 && br[i].vb == 0.0) continue;
        SeparatedOperator::Term t = base_term();
        const auto b = br[i];
        const double dxi = b.rb - b.ra;
        t.coef = rho_cp / dxi;
        t.db[mv[i].axis] = 1;
        t.weight[mv[i].axis] = [b](double xi) {
          return -(b.vb * (xi - b.ra) + b.va * (b.rb - xi));
        };
        t.weight[T] = tau_weight(i, -1);
        op.terms.push_back(std::move(t));
      }
      // diffusion terms: k A_d^2 w_d u_d detJ
      for (int d = 0; d < T; ++d) {
        SeparatedOperator::Term t = base_term();
        t.coef = k;
        t.da[d] = 1;
        t.db[d] = 1;
        int inv = -1;
        for (int i = 0; i < M; ++i)
          if (mv[i].axis == d) inv = i;
        if (inv >= 0) {
          // A^2 detJ = (dxi/w)^2 * prod w/dxi = (dxi/w) * prod_{m'!=m} w/dxi
          t.weight[T] = tau_weight(-1, inv);
        } else {
          t.weight[T] = tau_weight(-1, -1);
        }
        op.terms.push_back(std::move(t));
      }
    }
    int i = 0;
    for (; i < M; ++i) {
      if (++combo[i] < 3) break;
      combo[i] = 0;
    }
    if (i == M) break;
  }
  return op;
}

}  // namespace mlvms
