#pragma once

#include <functional>

#include "mlvms/separated.hpp"

namespace mlvms {

/// Nodal field on a tensor-product discretization (per-axis 1D C-HiDeNN
/// bases); evaluation is the product of per-axis interpolants.
struct TensorField {
  std::vector<const AxisDisc*> axes;
  Eigen::VectorXd u;  // lexicographic, axis 0 fastest

  int dim() const { return static_cast<int>(axes.size()); }
  std::int64_t n_nodes() const {
    std::int64_t n = 1;
    for (auto* a : axes) n *= a->n_nodes();
    return n;
  }

  double eval(const std::array<double, kMaxDim>& x) const {
    double g[kMaxDim];
    return eval_impl(x, -1, g);
  }

  /// Value plus gradient (all axes).
  double eval_grad(const std::array<double, kMaxDim>& x, std::array<double, kMaxDim>& grad) const {
    double g[kMaxDim];
    double v = 0.0;
    for (int d = 0; d < dim(); ++d) grad[d] = 0.0;
    v = eval_impl(x, -2, g);
    for (int d = 0; d < dim(); ++d) grad[d] = g[d];
    return v;
  }

 private:
  // mode -1: value only; mode -2: value + all gradients
  double eval_impl(const std::array<double, kMaxDim>& x, int mode, double* grad) const {
    const int D = dim();
    std::array<int, kMaxDim> elem{}, j0{}, cnt{};
    std::array<Eigen::VectorXd, kMaxDim> vals, ders;
    for (int d = 0; d < D; ++d) {
      const AxisBasis& b = axes[d]->basis();
      elem[d] = b.locate(x[d]);
      b.eval(elem[d], x[d], vals[d], ders[d]);
      auto [a0, a1] = b.element_support(elem[d]);
      j0[d] = a0;
      cnt[d] = a1 - a0 + 1;
    }
    std::array<std::int64_t, kMaxDim> stride{};
    std::int64_t s = 1;
    for (int d = 0; d < D; ++d) {
      stride[d] = s;
      s *= axes[d]->n_nodes();
    }
    double value = 0.0;
    for (int d = 0; d < D; ++d) grad[d] = 0.0;
    std::array<int, kMaxDim> k{};
    while (true) {
      std::int64_t id = 0;
      double pv = 1.0;
      for (int d = 0; d < D; ++d) {
        id += (j0[d] + k[d]) * stride[d];
        pv *= vals[d](k[d]);
      }
      const double uj = u(id);
      value += pv * uj;
      if (mode == -2) {
        for (int g = 0; g < D; ++g) {
          double pg = 1.0;
          for (int d = 0; d < D; ++d) pg *= (d == g) ? ders[d](k[d]) : vals[d](k[d]);
          grad[g] += pg * uj;
        }
      }
      int d = 0;
      for (; d < D; ++d) {
        if (++k[d] < cnt[d]) break;
        k[d] = 0;
      }
      if (d == D) break;
    }
    return value;
  }
};

struct ErrorNorms {
  double l2 = 0.0;
  double h1 = 0.0;      // gradient seminorm over grad_axes
  double energy = 0.0;  // sqrt(k) * h1 for constant diffusivity
};

/// Error norms of an arbitrary evaluator against an exact solution, by
/// tensor Gauss quadrature over the elements of `axes`, skipping elements
/// whose center lies inside any of `skip` (composite-partition restriction).
/// grad_axes < dim excludes trailing axes (e.g. time) from the seminorm.
inline ErrorNorms error_norms(
    const std::vector<const AxisDisc*>& axes,
    const std::function<double(const std::array<double, kMaxDim>&, std::array<double, kMaxDim>&)>&
        approx,  // returns value, fills gradient
    const std::function<double(const std::array<double, kMaxDim>&)>& exact,
    const std::function<void(const std::array<double, kMaxDim>&, std::array<double, kMaxDim>&)>&
        exact_grad,
    double k = 1.0, const std::vector<Box>& skip = {}, int grad_axes = -1) {
  const int D = static_cast<int>(axes.size());
  if (grad_axes < 0) grad_axes = D;
  double l2 = 0.0, h1 = 0.0;
  std::array<int, kMaxDim> e{};
  while (true) {
    std::array<double, kMaxDim> center{};
    for (int d = 0; d < D; ++d)
      center[d] = 0.5 * (axes[d]->axis().node(e[d]) + axes[d]->axis().node(e[d] + 1));
    bool skipped = false;
    for (const auto& box : skip)
      if (box.contains_point(center)) {
        skipped = true;
        break;
      }
    if (!skipped) {
      const int nq = axes[0]->quad_order();
      std::array<int, kMaxDim> q{};
      while (true) {
        std::array<double, kMaxDim> x{};
        double wt = 1.0;
        for (int d = 0; d < D; ++d) {
          x[d] = axes[d]->quad_x(e[d])[q[d]];
          wt *= axes[d]->quad_w(e[d])[q[d]];
        }
        std::array<double, kMaxDim> gh{}, gx{};
        const double vh = approx(x, gh);
        const double vx = exact(x);
        exact_grad(x, gx);
        l2 += wt * (vh - vx) * (vh - vx);
        for (int d = 0; d < grad_axes; ++d) h1 += wt * (gh[d] - gx[d]) * (gh[d] - gx[d]);
        int d = 0;
        for (; d < D; ++d) {
          if (++q[d] < nq) break;
          q[d] = 0;
        }
        if (d == D) break;
      }
    }
    int d = 0;
    for (; d < D; ++d) {
      if (++e[d] < axes[d]->basis().n_elem()) break;
      e[d] = 0;
    }
    if (d == D) break;
  }
  ErrorNorms out;
  out.l2 = std::sqrt(l2);
  out.h1 = std::sqrt(h1);
  out.energy = std::sqrt(k * h1);
  return out;
}

/// Boundary nodes of a tensor mesh, optionally excluding one face
/// (axis, side) pair — e.g. a Neumann top surface or the final-time face.
inline std::vector<std::int64_t> boundary_nodes(const TensorMesh& mesh,
                                                const std::vector<std::pair<int, int>>& exclude = {}) {
  std::vector<std::int64_t> out;
  for (std::int64_t i = 0; i < mesh.n_nodes(); ++i) {
    auto mi = mesh.node_multi_index(i);
    bool on = false;
    for (int d = 0; d < mesh.dim() && !on; ++d) {
      for (int side = 0; side < 2; ++side) {
        const bool at = (side == 0) ? (mi[d] == 0) : (mi[d] == mesh.axis(d).n_nodes() - 1);
        if (!at) continue;
        bool excl = false;
        for (auto& [ax, sd] : exclude)
          if (ax == d && sd == side) excl = true;
        if (!excl) {
          on = true;
          break;
        }
      }
    }
    if (on) out.push_back(i);
  }
  return out;
}

}  // namespace mlvms
