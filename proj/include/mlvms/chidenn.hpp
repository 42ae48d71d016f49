#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mlvms/mesh.hpp"

namespace mlvms {

/// Cubic-spline radial kernel; C1 at z = 1/2 and z = 1, zero beyond support.
inline double cubic_spline(double z) {
  if (z < 0.0) throw std::invalid_argument("cubic_spline: negative argument");
  if (z <= 0.5) return 2.0 / 3.0 - 4.0 * z * z + 4.0 * z * z * z;
  if (z <= 1.0) return 4.0 / 3.0 - 4.0 * z + 4.0 * z * z - 4.0 / 3.0 * z * z * z;
  return 0.0;
}

inline double cubic_spline_deriv(double z) {
  if (z < 0.0) throw std::invalid_argument("cubic_spline_deriv: negative argument");
  if (z <= 0.5) return -8.0 * z + 12.0 * z * z;
  if (z <= 1.0) return -4.0 + 8.0 * z - 4.0 * z * z;
  return 0.0;
}

/// Convolution patch basis for one node: coefficient matrices A, K such that
/// W(x) = Psi(x) A + P(x) K satisfies the Kronecker delta and reproducing
/// conditions on the patch nodes. Coordinates are handled in a patch-local
/// frame (shifted to the patch midpoint, scaled by s*h per axis).
class PatchBasis {
 public:
  PatchBasis(const TensorMesh& mesh, std::int64_t center, const HyperParams& hyper)
      : hyper_(hyper), dim_(mesh.dim()) {
    hyper.validate();
    if (hyper.s == 0) {  // linear FE degeneration: W == 1 at the node itself
      nodes_ = {center};
      m_ = 1;
      A_ = Eigen::MatrixXd::Zero(1, 1);
      K_ = Eigen::MatrixXd::Ones(1, 1);
      local_mid_.fill(0.0);
      local_scale_.fill(1.0);
      for (int d = 0; d < dim_; ++d) local_mid_[d] = mesh.node_coord(center)[d];
      coords_.resize(1);
      coords_[0].fill(0.0);
      return;
    }

    nodes_ = nodal_patch(mesh, center, hyper.s);
    const int ns = static_cast<int>(nodes_.size());
    m_ = 1;
    for (int d = 0; d < dim_; ++d) m_ *= (hyper.p + 1);
    if (ns < m_) throw std::invalid_argument("PatchBasis: patch smaller than polynomial basis");

    // local frame: midpoint of the patch bounding box, per-axis scale s*h
    std::array<double, kMaxDim> lo{}, hi{};
    lo.fill(1e300);
    hi.fill(-1e300);
    for (auto id : nodes_) {
      auto x = mesh.node_coord(id);
      for (int d = 0; d < dim_; ++d) {
        lo[d] = std::min(lo[d], x[d]);
        hi[d] = std::max(hi[d], x[d]);
      }
    }
    for (int d = 0; d < dim_; ++d) {
      local_mid_[d] = 0.5 * (lo[d] + hi[d]);
      local_scale_[d] = hyper.s * mesh.axis(d).h();
    }
    coords_.resize(ns);
    for (int j = 0; j < ns; ++j) {
      auto x = mesh.node_coord(nodes_[j]);
      for (int d = 0; d < dim_; ++d)
        coords_[j][d] = (x[d] - local_mid_[d]) / local_scale_[d];
    }

    Eigen::MatrixXd R(ns, ns);  // R_IJ = Psi_J(x_I)
    Eigen::MatrixXd Q(ns, m_);  // Q_Ij = P_j(x_I)
    for (int i = 0; i < ns; ++i) {
      for (int j = 0; j < ns; ++j) R(i, j) = radial(coords_[i], coords_[j]);
      poly_row(coords_[i], Q.row(i));
    }

    if (ns == m_) {
      Eigen::FullPivLU<Eigen::MatrixXd> lu(Q);
      if (!lu.isInvertible())
        throw std::runtime_error("PatchBasis: singular polynomial moment matrix");
      K_ = lu.inverse();
      A_ = Eigen::MatrixXd::Zero(ns, ns);
    } else {
      Eigen::FullPivLU<Eigen::MatrixXd> luR(R);
      if (!luR.isInvertible())
        throw std::runtime_error("PatchBasis: singular radial moment matrix (degenerate dilation?)");
      Eigen::MatrixXd RinvQ = luR.solve(Q);                 // ns x m
      Eigen::MatrixXd G = Q.transpose() * RinvQ;            // m x m
      Eigen::FullPivLU<Eigen::MatrixXd> luG(G);
      if (!luG.isInvertible())
        throw std::runtime_error("PatchBasis: singular reduced moment matrix (patch geometry?)");
      K_ = luG.solve(RinvQ.transpose());                    // m x ns
      A_ = luR.solve(Eigen::MatrixXd::Identity(ns, ns) - Q * K_);
    }
  }

  const std::vector<std::int64_t>& nodes() const { return nodes_; }
  int size() const { return static_cast<int>(nodes_.size()); }
  const Eigen::MatrixXd& coeff_A() const { return A_; }
  const Eigen::MatrixXd& coeff_K() const { return K_; }
  int poly_dim() const { return m_; }

  /// Values of all patch functions W_K at x.
  void eval(const std::array<double, kMaxDim>& x, Eigen::VectorXd& w) const {
    const int ns = size();
    w.resize(ns);
    if (hyper_.s == 0) {
      w(0) = 1.0;
      return;
    }
    std::array<double, kMaxDim> u = to_local(x);
    Eigen::RowVectorXd psi(ns), poly(m_);
    for (int j = 0; j < ns; ++j) psi(j) = radial(u, coords_[j]);
    poly_row(u, poly);
    w = (psi * A_ + poly * K_).transpose();
  }

  /// Values and physical-coordinate gradients of all patch functions at x.
  void eval_grad(const std::array<double, kMaxDim>& x, Eigen::VectorXd& w,
                 Eigen::MatrixXd& dw) const {
    const int ns = size();
    w.resize(ns);
    dw.resize(dim_, ns);
    if (hyper_.s == 0) {
      w(0) = 1.0;
      dw.setZero();
      return;
    }
    std::array<double, kMaxDim> u = to_local(x);
    Eigen::RowVectorXd psi(ns), poly(m_);
    Eigen::MatrixXd dpsi(dim_, ns), dpoly(dim_, m_);
    for (int j = 0; j < ns; ++j) {
      psi(j) = radial(u, coords_[j]);
      radial_grad(u, coords_[j], dpsi, j);
    }
    poly_row(u, poly);
    poly_grad(u, dpoly);
    w = (psi * A_ + poly * K_).transpose();
    for (int d = 0; d < dim_; ++d)
      dw.row(d) = (dpsi.row(d) * A_ + dpoly.row(d) * K_) / local_scale_[d];
  }

 private:
  std::array<double, kMaxDim> to_local(const std::array<double, kMaxDim>& x) const {
    std::array<double, kMaxDim> u{};
    for (int d = 0; d < dim_; ++d) u[d] = (x[d] - local_mid_[d]) / local_scale_[d];
    return u;
  }

  // radial argument: local-frame distance over dilation a (support radius
  // a*s*h in physical units per axis)
  double radial(const std::array<double, kMaxDim>& u, const std::array<double, kMaxDim>& v) const {
    double r2 = 0.0;
    for (int d = 0; d < dim_; ++d) r2 += (u[d] - v[d]) * (u[d] - v[d]);
    return cubic_spline(std::sqrt(r2) / hyper_.a);
  }
  void radial_grad(const std::array<double, kMaxDim>& u, const std::array<double, kMaxDim>& v,
                   Eigen::MatrixXd& dpsi, int col) const {
    double r2 = 0.0;
    for (int d = 0; d < dim_; ++d) r2 += (u[d] - v[d]) * (u[d] - v[d]);
    const double rho = std::sqrt(r2);
    const double z = rho / hyper_.a;
    // psi'(z)/z is finite at z = 0 (limit -8)
    const double fac = (z > 1e-300) ? cubic_spline_deriv(z) / z : -8.0;
    for (int d = 0; d < dim_; ++d)
      dpsi(d, col) = fac * (u[d] - v[d]) / (hyper_.a * hyper_.a);
  }

  template <typename Row>
  void poly_row(const std::array<double, kMaxDim>& u, Row&& row) const {
    std::array<int, kMaxDim> k{};
    for (int j = 0; j < m_; ++j) {
      double v = 1.0;
      for (int d = 0; d < dim_; ++d) v *= std::pow(u[d], k[d]);
      row(j) = v;
      for (int d = 0; d < dim_; ++d) {
        if (++k[d] <= hyper_.p) break;
        k[d] = 0;
      }
    }
  }
  void poly_grad(const std::array<double, kMaxDim>& u, Eigen::MatrixXd& dp) const {
    std::array<int, kMaxDim> k{};
    for (int j = 0; j < m_; ++j) {
      for (int g = 0; g < dim_; ++g) {
        double v = 1.0;
        for (int d = 0; d < dim_; ++d) {
          if (d == g)
            v *= (k[d] == 0) ? 0.0 : k[d] * std::pow(u[d], k[d] - 1);
          else
            v *= std::pow(u[d], k[d]);
        }
        dp(g, j) = v;
      }
      for (int d = 0; d < dim_; ++d) {
        if (++k[d] <= hyper_.p) break;
        k[d] = 0;
      }
    }
  }

  HyperParams hyper_;
  int dim_;
  int m_;
  std::vector<std::int64_t> nodes_;
  std::vector<std::array<double, kMaxDim>> coords_;  // patch-local node coords
  std::array<double, kMaxDim> local_mid_{};
  std::array<double, kMaxDim> local_scale_{};
  Eigen::MatrixXd A_, K_;
};

/// Per-node patch cache for one mesh + hyperparameter set. Read-only after
/// construction.
class PatchTable {
 public:
  PatchTable(const TensorMesh& mesh, const HyperParams& hyper) : mesh_(&mesh), hyper_(hyper) {
    patches_.reserve(mesh.n_nodes());
    for (std::int64_t i = 0; i < mesh.n_nodes(); ++i) patches_.emplace_back(mesh, i, hyper);
  }
  const PatchBasis& patch(std::int64_t node) const { return patches_[node]; }
  const TensorMesh& mesh() const { return *mesh_; }
  const HyperParams& hyper() const { return hyper_; }

 private:
  const TensorMesh* mesh_;
  HyperParams hyper_;
  std::vector<PatchBasis> patches_;
};

/// Shape function values and gradients at one point: all contributing nodes
/// of the element (union of its corner-node patches).
struct ShapeEval {
  std::int64_t element = -1;
  std::vector<std::int64_t> nodes;
  Eigen::VectorXd values;
  Eigen::MatrixXd grads;  // dim x n
};

/// C-HiDeNN shape functions at x inside `elem`: Ntilde_J = sum_I N_I W^I_J
/// with multilinear N_I over the element corners.
inline ShapeEval eval_shape(const TensorMesh& mesh, const std::array<int, kMaxDim>& elem,
                            const std::array<double, kMaxDim>& x, const PatchTable& table) {
  const int dim = mesh.dim();
  // reference coords in [0,1] per axis
  std::array<double, kMaxDim> t{};
  for (int d = 0; d < dim; ++d) {
    const Axis& a = mesh.axis(d);
    t[d] = (x[d] - a.node(elem[d])) / a.h();
    if (t[d] < -1e-9 || t[d] > 1.0 + 1e-9)
      throw std::invalid_argument("eval_shape: point outside element");
  }

  // union of corner patches
  std::vector<std::int64_t> support;
  const int n_corners = 1 << dim;
  for (int c = 0; c < n_corners; ++c) {
    std::array<int, kMaxDim> ni{};
    for (int d = 0; d < dim; ++d) ni[d] = elem[d] + ((c >> d) & 1);
    const auto& pn = table.patch(mesh.node_index(ni)).nodes();
    support.insert(support.end(), pn.begin(), pn.end());
  }
  std::sort(support.begin(), support.end());
  support.erase(std::unique(support.begin(), support.end()), support.end());

  ShapeEval out;
  out.element = mesh.element_index(elem);
  out.nodes = support;
  out.values = Eigen::VectorXd::Zero(support.size());
  out.grads = Eigen::MatrixXd::Zero(dim, support.size());

  Eigen::VectorXd w;
  Eigen::MatrixXd dw;
  for (int c = 0; c < n_corners; ++c) {
    std::array<int, kMaxDim> ni{};
    double N = 1.0;
    std::array<double, kMaxDim> dN{};
    for (int d = 0; d < dim; ++d) {
      const int bit = (c >> d) & 1;
      ni[d] = elem[d] + bit;
      N *= bit ? t[d] : (1.0 - t[d]);
    }
    for (int g = 0; g < dim; ++g) {
      double v = 1.0;
      for (int d = 0; d < dim; ++d) {
        const int bit = (c >> d) & 1;
        if (d == g)
          v *= (bit ? 1.0 : -1.0) / mesh.axis(d).h();
        else
          v *= bit ? t[d] : (1.0 - t[d]);
      }
      dN[g] = v;
    }

    const PatchBasis& pb = table.patch(mesh.node_index(ni));
    pb.eval_grad(x, w, dw);
    const auto& pn = pb.nodes();
    for (int j = 0; j < pb.size(); ++j) {
      auto it = std::lower_bound(support.begin(), support.end(), pn[j]);
      const auto k = static_cast<Eigen::Index>(it - support.begin());
      out.values(k) += N * w(j);
      for (int g = 0; g < dim; ++g) out.grads(g, k) += dN[g] * w(j) + N * dw(g, j);
    }
  }
  return out;
}

/// Interpolate a nodal field at x.
inline double interpolate(const std::vector<double>& field, const TensorMesh& mesh,
                          const PatchTable& table, const std::array<double, kMaxDim>& x) {
  if (!mesh.contains(x, 1e-9 * mesh.axis(0).h()))
    throw std::invalid_argument("interpolate: point outside mesh");
  auto elem = mesh.locate(x);
  ShapeEval se = eval_shape(mesh, elem, x, table);
  double v = 0.0;
  for (std::size_t j = 0; j < se.nodes.size(); ++j) v += se.values(j) * field[se.nodes[j]];
  return v;
}

/// 1D C-HiDeNN basis along a single axis; the building block for the
/// tensor-product bases used by the solvers.
class AxisBasis {
 public:
  AxisBasis(const Axis& axis, const HyperParams& hyper)
      : axis_(axis), hyper_(hyper), mesh_({axis}), table_(mesh_, hyper) {}

  const Axis& axis() const { return axis_; }
  const HyperParams& hyper() const { return hyper_; }
  int n_nodes() const { return axis_.n_nodes(); }
  int n_elem() const { return axis_.n_elem; }

  /// Contributing node index range [first, last] of element e.
  std::pair<int, int> element_support(int e) const {
    if (hyper_.s == 0) return {e, e + 1};
    auto lo = patch_range_1d(axis_.n_nodes(), e, hyper_.s);
    auto hi = patch_range_1d(axis_.n_nodes(), e + 1, hyper_.s);
    return {lo.first, hi.second};
  }
  int max_support() const { return hyper_.s == 0 ? 2 : 2 * hyper_.s + 2; }

  /// Shape values and derivatives of all support nodes of element e at x.
  void eval(int e, double x, Eigen::VectorXd& vals, Eigen::VectorXd& ders) const {
    std::array<int, kMaxDim> elem{};
    elem[0] = e;
    std::array<double, kMaxDim> pt{};
    pt[0] = x;
    ShapeEval se = eval_shape(mesh_, elem, pt, table_);
    auto [j0, j1] = element_support(e);
    vals = Eigen::VectorXd::Zero(j1 - j0 + 1);
    ders = Eigen::VectorXd::Zero(j1 - j0 + 1);
    for (std::size_t k = 0; k < se.nodes.size(); ++k) {
      const auto j = static_cast<Eigen::Index>(se.nodes[k] - j0);
      vals(j) = se.values(k);
      ders(j) = se.grads(0, k);
    }
  }

  int locate(double x) const {
    int e = static_cast<int>(std::floor((x - axis_.lo) / axis_.h()));
    return std::clamp(e, 0, axis_.n_elem - 1);
  }

  /// Interpolate a nodal vector at x.
  double interpolate(const Eigen::VectorXd& u, double x) const {
    int e = locate(x);
    Eigen::VectorXd v, d;
    eval(e, x, v, d);
    auto [j0, j1] = element_support(e);
    return v.dot(u.segment(j0, j1 - j0 + 1));
  }
  double interpolate_deriv(const Eigen::VectorXd& u, double x) const {
    int e = locate(x);
    Eigen::VectorXd v, d;
    eval(e, x, v, d);
    auto [j0, j1] = element_support(e);
    return d.dot(u.segment(j0, j1 - j0 + 1));
  }

 private:
  Axis axis_;
  HyperParams hyper_;
  TensorMesh mesh_;
  PatchTable table_;
};

}  // namespace mlvms
