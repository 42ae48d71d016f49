#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <functional>
#include <limits>
#include <optional>

#include "mlvms/chidenn.hpp"
#include "mlvms/quadrature.hpp"

namespace mlvms {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// One axis of a tensor-product discretization: 1D C-HiDeNN basis plus cached
/// quadrature tables (points, weights, basis values/derivatives per element).
class AxisDisc {
 public:
  AxisDisc(const Axis& axis, const HyperParams& hyper, int quad_order)
      : basis_(axis, hyper), rule_(quad_order) {
    if (quad_order < hyper.p + 1)
      throw std::invalid_argument("AxisDisc: quadrature order below p+1 (under-integration)");
    const int ne = axis.n_elem;
    const int nq = rule_.order;
    xq_.resize(ne);
    wq_.resize(ne);
    vals_.resize(ne);
    ders_.resize(ne);
    for (int e = 0; e < ne; ++e) {
      rule_.mapped(axis.node(e), axis.node(e + 1), xq_[e], wq_[e]);
      auto [j0, j1] = basis_.element_support(e);
      vals_[e].resize(nq, j1 - j0 + 1);
      ders_[e].resize(nq, j1 - j0 + 1);
      Eigen::VectorXd v, d;
      for (int q = 0; q < nq; ++q) {
        basis_.eval(e, xq_[e][q], v, d);
        vals_[e].row(q) = v.transpose();
        ders_[e].row(q) = d.transpose();
      }
    }
  }

  const AxisBasis& basis() const { return basis_; }
  const Axis& axis() const { return basis_.axis(); }
  int n_nodes() const { return basis_.n_nodes(); }
  int quad_order() const { return rule_.order; }
  const std::vector<double>& quad_x(int e) const { return xq_[e]; }
  const std::vector<double>& quad_w(int e) const { return wq_[e]; }
  const Eigen::MatrixXd& quad_vals(int e) const { return vals_[e]; }
  const Eigen::MatrixXd& quad_ders(int e) const { return ders_[e]; }

  /// 1D weak-form matrix M_ij = int w(x) D^da N_i D^db N_j dx over
  /// [lo,hi] intersected with the axis (sub-element cuts re-quadratured).
  SpMat matrix(int da, int db, const std::function<double(double)>& w = nullptr,
               double lo = -std::numeric_limits<double>::infinity(),
               double hi = std::numeric_limits<double>::infinity()) const {
    const int n = n_nodes();
    std::vector<Triplet> trips;
    Eigen::VectorXd v, d;
    for (int e = 0; e < basis_.n_elem(); ++e) {
      double a = axis().node(e), b = axis().node(e + 1);
      double ca = std::max(a, lo), cb = std::min(b, hi);
      if (cb - ca <= 1e-14 * axis().h()) continue;
      auto [j0, j1] = basis_.element_support(e);
      const int ns = j1 - j0 + 1;
      Eigen::MatrixXd ke = Eigen::MatrixXd::Zero(ns, ns);
      const bool cached = (ca == a && cb == b);
      std::vector<double> x, wt;
      if (!cached) rule_.mapped(ca, cb, x, wt);
      const int nq = rule_.order;
      for (int q = 0; q < nq; ++q) {
        const double xx = cached ? xq_[e][q] : x[q];
        const double ww = (cached ? wq_[e][q] : wt[q]) * (w ? w(xx) : 1.0);
        const Eigen::MatrixXd& tv = vals_[e];
        const Eigen::MatrixXd& td = ders_[e];
        Eigen::RowVectorXd ra, rb;
        if (cached) {
          ra = (da == 0) ? tv.row(q) : td.row(q);
          rb = (db == 0) ? tv.row(q) : td.row(q);
        } else {
          basis_.eval(e, xx, v, d);
          ra = ((da == 0) ? v : d).transpose();
          rb = ((db == 0) ? v : d).transpose();
        }
        ke.noalias() += ww * (ra.transpose() * rb);
      }
      for (int i = 0; i < ns; ++i)
        for (int j = 0; j < ns; ++j)
          if (ke(i, j) != 0.0) trips.emplace_back(j0 + i, j0 + j, ke(i, j));
    }
    SpMat M(n, n);
    M.setFromTriplets(trips.begin(), trips.end());
    return M;
  }

  /// 1D load vector f_i = int w(x) N_i dx over [lo,hi] intersected with axis.
  Eigen::VectorXd load(const std::function<double(double)>& w = nullptr,
                       double lo = -std::numeric_limits<double>::infinity(),
                       double hi = std::numeric_limits<double>::infinity()) const {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(n_nodes());
    Eigen::VectorXd v, d;
    for (int e = 0; e < basis_.n_elem(); ++e) {
      double a = axis().node(e), b = axis().node(e + 1);
      double ca = std::max(a, lo), cb = std::min(b, hi);
      if (cb - ca <= 1e-14 * axis().h()) continue;
      auto [j0, j1] = basis_.element_support(e);
      const bool cached = (ca == a && cb == b);
      std::vector<double> x, wt;
      if (!cached) rule_.mapped(ca, cb, x, wt);
      for (int q = 0; q < rule_.order; ++q) {
        const double xx = cached ? xq_[e][q] : x[q];
        const double ww = (cached ? wq_[e][q] : wt[q]) * (w ? w(xx) : 1.0);
        if (cached) {
          f.segment(j0, j1 - j0 + 1) += ww * vals_[e].row(q).transpose();
        } else {
          basis_.eval(e, xx, v, d);
          f.segment(j0, j1 - j0 + 1) += ww * v;
        }
      }
    }
    return f;
  }

 private:
  AxisBasis basis_;
  QuadRule rule_;
  std::vector<std::vector<double>> xq_, wq_;
  std::vector<Eigen::MatrixXd> vals_, ders_;
};

/// Separable weak-form operator: a(w,u) = sum_t c_t prod_d
/// int w_d(x_d) D^{da} N D^{db} N dx_d, each term restricted to an axis box.
struct SeparatedOperator {
  struct Term {
    double coef = 1.0;
    std::array<int, kMaxDim> da{};  // test-function derivative order per axis
    std::array<int, kMaxDim> db{};  // trial-function derivative order per axis
    std::array<std::function<double(double)>, kMaxDim> weight{};  // null = 1
    std::array<double, kMaxDim> lo{};
    std::array<double, kMaxDim> hi{};
    Term() {
      lo.fill(-std::numeric_limits<double>::infinity());
      hi.fill(std::numeric_limits<double>::infinity());
    }
  };
  int dim = 0;
  std::vector<Term> terms;

  /// Standard diffusion sum_d k int dw/dx_d du/dx_d.
  static SeparatedOperator diffusion(int dim, double k = 1.0) {
    SeparatedOperator op;
    op.dim = dim;
    for (int d = 0; d < dim; ++d) {
      Term t;
      t.coef = k;
      t.da[d] = 1;
      t.db[d] = 1;
      op.terms.push_back(t);
    }
    return op;
  }

  /// Space-time heat: rho_cp * w u_t + k grad_x w . grad_x u (last axis time).
  static SeparatedOperator heat(int dim_total, double rho_cp, double k) {
    SeparatedOperator op;
    op.dim = dim_total;
    Term time;
    time.coef = rho_cp;
    time.db[dim_total - 1] = 1;
    op.terms.push_back(time);
    for (int d = 0; d < dim_total - 1; ++d) {
      Term t;
      t.coef = k;
      t.da[d] = 1;
      t.db[d] = 1;
      op.terms.push_back(t);
    }
    return op;
  }
};

/// Separable source: f(x) = sum_t c_t prod_d g_{t,d}(x_d).
struct SeparatedSource {
  struct Term {
    double coef = 1.0;
    std::array<std::function<double(double)>, kMaxDim> factor{};  // null = 1
  };
  int dim = 0;
  std::vector<Term> terms;

  double eval(const std::array<double, kMaxDim>& x) const {
    double s = 0.0;
    for (const auto& t : terms) {
      double p = t.coef;
      for (int d = 0; d < dim; ++d)
        if (t.factor[d]) p *= t.factor[d](x[d]);
      s += p;
    }
    return s;
  }
};

/// Sparse Kronecker product C = A kron B with B's index fastest
/// (row (ia*nb+ib), matching lexicographic node ids when applied as
/// M_{D-1} kron ... kron M_0).
inline SpMat kron(const SpMat& A, const SpMat& B) {
  SpMat C(A.rows() * B.rows(), A.cols() * B.cols());
  std::vector<Triplet> trips;
  trips.reserve(static_cast<std::size_t>(A.nonZeros()) * B.nonZeros());
  for (int ka = 0; ka < A.outerSize(); ++ka)
    for (SpMat::InnerIterator ita(A, ka); ita; ++ita)
      for (int kb = 0; kb < B.outerSize(); ++kb)
        for (SpMat::InnerIterator itb(B, kb); itb; ++itb)
          trips.emplace_back(ita.row() * B.rows() + itb.row(),
                             ita.col() * B.cols() + itb.col(), ita.value() * itb.value());
  C.setFromTriplets(trips.begin(), trips.end());
  return C;
}

/// Full tensor-product matrix of a separable operator: for each term,
/// kron over axes (axis 0 index fastest, matching TensorMesh node ids).
inline SpMat assemble_separated(const std::vector<const AxisDisc*>& axes,
                                const SeparatedOperator& op) {
  const int dim = static_cast<int>(axes.size());
  if (op.dim != dim) throw std::invalid_argument("assemble_separated: dimension mismatch");
  std::int64_t n = 1;
  for (auto* a : axes) n *= a->n_nodes();
  SpMat A(n, n);
  for (const auto& t : op.terms) {
    SpMat term = axes[0]->matrix(t.da[0], t.db[0], t.weight[0], t.lo[0], t.hi[0]);
    for (int d = 1; d < dim; ++d)
      term = kron(axes[d]->matrix(t.da[d], t.db[d], t.weight[d], t.lo[d], t.hi[d]), term);
    A += t.coef * term;
  }
  A.makeCompressed();
  return A;
}

/// Full tensor-product load vector of a separable source.
inline Eigen::VectorXd assemble_separated_load(const std::vector<const AxisDisc*>& axes,
                                               const SeparatedSource& src) {
  const int dim = static_cast<int>(axes.size());
  if (src.dim != dim) throw std::invalid_argument("assemble_separated_load: dimension mismatch");
  std::int64_t n = 1;
  for (auto* a : axes) n *= a->n_nodes();
  Eigen::VectorXd F = Eigen::VectorXd::Zero(n);
  for (const auto& t : src.terms) {
    Eigen::VectorXd term = axes[0]->load(t.factor[0]);
    for (int d = 1; d < dim; ++d) {
      Eigen::VectorXd fd = axes[d]->load(t.factor[d]);
      Eigen::VectorXd next(term.size() * fd.size());
      for (Eigen::Index i = 0; i < fd.size(); ++i) next.segment(i * term.size(), term.size()) = fd(i) * term;
      term.swap(next);
    }
    F += t.coef * term;
  }
  return F;
}

}  // namespace mlvms
