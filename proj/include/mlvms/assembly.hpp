#pragma once

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <functional>

#include "mlvms/separated.hpp"

namespace mlvms {

using PointFn = std::function<double(const std::array<double, kMaxDim>&)>;

/// Assembled linear system with Dirichlet bookkeeping.
struct SparseSystem {
  SpMat A;
  Eigen::VectorXd b;
  bool symmetric = true;
  std::vector<char> constrained;       // per node, 1 after apply_dirichlet
  Eigen::VectorXd constrained_value;   // prescribed values (0 where free)

  void init_constraints() {
    if (constrained.empty()) {
      constrained.assign(A.rows(), 0);
      constrained_value = Eigen::VectorXd::Zero(A.rows());
    }
  }
};

namespace detail {

/// Tensor Gauss points of one element; invokes fn(point, weight).
template <typename Fn>
void element_quadrature(const TensorMesh& mesh, const std::array<int, kMaxDim>& elem,
                        const QuadRule& rule, Fn&& fn) {
  const int dim = mesh.dim();
  std::array<std::vector<double>, kMaxDim> x, w;
  for (int d = 0; d < dim; ++d)
    rule.mapped(mesh.axis(d).node(elem[d]), mesh.axis(d).node(elem[d] + 1), x[d], w[d]);
  std::array<int, kMaxDim> q{};
  while (true) {
    std::array<double, kMaxDim> pt{};
    double wt = 1.0;
    for (int d = 0; d < dim; ++d) {
      pt[d] = x[d][q[d]];
      wt *= w[d][q[d]];
    }
    fn(pt, wt);
    int d = 0;
    for (; d < dim; ++d) {
      if (++q[d] < rule.order) break;
      q[d] = 0;
    }
    if (d == dim) break;
  }
}

}  // namespace detail

/// Element-wise assembly of the elliptic form K_IJ = int grad N_I . k grad N_J,
/// F_I = int N_I f, with the d-dimensional convolution-patch shape functions.
inline SparseSystem assemble_elliptic(const TensorMesh& mesh, const PatchTable& table,
                                      double k, const PointFn& f, int quad_order = -1) {
  const int p = table.hyper().p;
  if (quad_order < 0) quad_order = p + 2;
  if (quad_order < p + 1)
    throw std::invalid_argument("assemble_elliptic: quadrature order below p+1");
  QuadRule rule(quad_order);
  const int dim = mesh.dim();

  std::vector<Triplet> trips;
  SparseSystem sys;
  sys.b = Eigen::VectorXd::Zero(mesh.n_nodes());
  for (std::int64_t e = 0; e < mesh.n_elements(); ++e) {
    auto em = mesh.element_multi_index(e);
    detail::element_quadrature(mesh, em, rule, [&](const auto& pt, double wt) {
      ShapeEval se = eval_shape(mesh, em, pt, table);
      const int n = static_cast<int>(se.nodes.size());
      const double fv = f ? f(pt) : 0.0;
      for (int i = 0; i < n; ++i) {
        if (fv != 0.0) sys.b(se.nodes[i]) += wt * se.values(i) * fv;
        for (int j = 0; j < n; ++j) {
          double v = 0.0;
          for (int d = 0; d < dim; ++d) v += se.grads(d, i) * se.grads(d, j);
          trips.emplace_back(se.nodes[i], se.nodes[j], wt * k * v);
        }
      }
    });
  }
  sys.A.resize(mesh.n_nodes(), mesh.n_nodes());
  sys.A.setFromTriplets(trips.begin(), trips.end());
  sys.A.makeCompressed();
  sys.symmetric = true;
  return sys;
}

/// Element-wise space-time assembly (last axis = time):
/// int int (rho_cp w u_t + k grad_x w . grad_x u) dx dt. Nonsymmetric.
inline SparseSystem assemble_spacetime(const TensorMesh& mesh, const PatchTable& table,
                                       double rho_cp, double k, const PointFn& f,
                                       int quad_order = -1) {
  const int p = table.hyper().p;
  if (quad_order < 0) quad_order = p + 2;
  if (quad_order < p + 1)
    throw std::invalid_argument("assemble_spacetime: quadrature order below p+1");
  QuadRule rule(quad_order);
  const int dim = mesh.dim();
  const int td = dim - 1;  // time axis

  std::vector<Triplet> trips;
  SparseSystem sys;
  sys.b = Eigen::VectorXd::Zero(mesh.n_nodes());
  for (std::int64_t e = 0; e < mesh.n_elements(); ++e) {
    auto em = mesh.element_multi_index(e);
    detail::element_quadrature(mesh, em, rule, [&](const auto& pt, double wt) {
      ShapeEval se = eval_shape(mesh, em, pt, table);
      const int n = static_cast<int>(se.nodes.size());
      const double fv = f ? f(pt) : 0.0;
      for (int i = 0; i < n; ++i) {
        if (fv != 0.0) sys.b(se.nodes[i]) += wt * se.values(i) * fv;
        for (int j = 0; j < n; ++j) {
          double v = rho_cp * se.values(i) * se.grads(td, j);
          for (int d = 0; d < td; ++d) v += k * se.grads(d, i) * se.grads(d, j);
          trips.emplace_back(se.nodes[i], se.nodes[j], wt * v);
        }
      }
    });
  }
  sys.A.resize(mesh.n_nodes(), mesh.n_nodes());
  sys.A.setFromTriplets(trips.begin(), trips.end());
  sys.A.makeCompressed();
  sys.symmetric = false;
  return sys;
}

/// Dirichlet rows by row replacement with column elimination: known values
/// move to the RHS, constrained rows become identity rows. Preserves symmetry.
inline void apply_dirichlet(SparseSystem& sys, const std::vector<std::int64_t>& nodes,
                            const std::vector<double>& values) {
  if (nodes.size() != values.size())
    throw std::invalid_argument("apply_dirichlet: node/value count mismatch");
  sys.init_constraints();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (sys.constrained[nodes[i]] &&
        sys.constrained_value(nodes[i]) != values[i])
      throw std::invalid_argument("apply_dirichlet: conflicting values for one node");
    sys.constrained[nodes[i]] = 1;
    sys.constrained_value(nodes[i]) = values[i];
  }

  const Eigen::VectorXd& g = sys.constrained_value;
  std::vector<Triplet> trips;
  trips.reserve(sys.A.nonZeros());
  for (int col = 0; col < sys.A.outerSize(); ++col) {
    for (SpMat::InnerIterator it(sys.A, col); it; ++it) {
      const auto i = it.row();
      const auto j = it.col();
      if (sys.constrained[i]) continue;        // row replaced below
      if (sys.constrained[j]) {
        sys.b(i) -= it.value() * g(j);         // column elimination
      } else {
        trips.emplace_back(i, j, it.value());
      }
    }
  }
  for (Eigen::Index i = 0; i < sys.A.rows(); ++i) {
    if (sys.constrained[i]) {
      trips.emplace_back(i, i, 1.0);
      sys.b(i) = g(i);
    }
  }
  SpMat A2(sys.A.rows(), sys.A.cols());
  A2.setFromTriplets(trips.begin(), trips.end());
  A2.makeCompressed();
  sys.A.swap(A2);
}

/// Convenience: Dirichlet from a coordinate function on a node set.
inline void apply_dirichlet(SparseSystem& sys, const TensorMesh& mesh,
                            const std::vector<std::int64_t>& nodes, const PointFn& g) {
  std::vector<double> vals(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) vals[i] = g(mesh.node_coord(nodes[i]));
  apply_dirichlet(sys, nodes, vals);
}

/// Sparse direct solve; SimplicialLDLT for symmetric systems, SparseLU
/// otherwise. Verifies the relative residual.
inline Eigen::VectorXd solve_linear(const SparseSystem& sys) {
  Eigen::VectorXd x;
  if (sys.symmetric) {
    Eigen::SimplicialLDLT<SpMat> solver(sys.A);
    if (solver.info() != Eigen::Success)
      throw std::runtime_error("solve_linear: LDLT factorization failed (singular or indefinite)");
    x = solver.solve(sys.b);
  } else {
    Eigen::SparseLU<SpMat> solver(sys.A);
    if (solver.info() != Eigen::Success)
      throw std::runtime_error("solve_linear: LU factorization failed (singular system)");
    x = solver.solve(sys.b);
  }
  const double bn = sys.b.norm();
  const double res = (sys.A * x - sys.b).norm();
  if (res > 1e-10 * std::max(bn, 1.0))
    throw std::runtime_error("solve_linear: residual " + std::to_string(res / std::max(bn, 1.0)) +
                             " exceeds 1e-10 (ill-conditioned system)");
  return x;
}

/// Reusable factorization for repeated solves with the same matrix.
class LinearSolver {
 public:
  explicit LinearSolver(const SpMat& A, bool symmetric) : symmetric_(symmetric) {
    if (symmetric_) {
      ldlt_.compute(A);
      if (ldlt_.info() != Eigen::Success)
        throw std::runtime_error("LinearSolver: LDLT factorization failed");
    } else {
      lu_.compute(A);
      if (lu_.info() != Eigen::Success)
        throw std::runtime_error("LinearSolver: LU factorization failed");
    }
  }
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
    return symmetric_ ? Eigen::VectorXd(ldlt_.solve(b)) : Eigen::VectorXd(lu_.solve(b));
  }

 private:
  bool symmetric_;
  Eigen::SimplicialLDLT<SpMat> ldlt_;
  Eigen::SparseLU<SpMat> lu_;
};

}  // namespace mlvms
