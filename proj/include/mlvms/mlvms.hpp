#pragma once

#include <memory>

#include "mlvms/assembly.hpp"
#include "mlvms/fields.hpp"
#include "mlvms/problems.hpp"

namespace mlvms {

/// Problem description consumed by the level solvers: separable operator and
/// source, Dirichlet data on the outer boundary, excluded (natural) faces.
struct ProblemDef {
  int dim = 0;
  bool symmetric = true;
  SeparatedOperator op;
  SeparatedSource source;
  PointFn bc;  // Dirichlet trace on the outer boundary
  std::vector<std::pair<int, int>> natural_faces;  // (axis, side) without Dirichlet

  static ProblemDef from_manufactured(const ManufacturedProblem& pb) {
    ProblemDef def;
    def.dim = pb.dim;
    def.symmetric = !pb.spacetime;
    def.op = pb.spacetime ? SeparatedOperator::heat(pb.dim, pb.rho_cp, pb.k)
                          : SeparatedOperator::diffusion(pb.dim, pb.k);
    def.source = pb.source_sep;
    def.bc = pb.exact;
    def.natural_faces = pb.neumann_faces;
    return def;
  }
};

struct LevelState {
  int level = 0;
  TensorMesh mesh;
  std::vector<std::shared_ptr<AxisDisc>> axes_store;  // keeps axes alive
  std::vector<const AxisDisc*> axes;
  Eigen::VectorXd u;
  std::vector<std::int64_t> interface_nodes;
  Eigen::VectorXd interface_values;

  TensorField field() const { return TensorField{axes, u}; }
};

struct AlternationReport {
  int iterations = 0;
  bool converged = false;
  std::vector<double> change_norms;  // per sweep: max over levels
};

/// Nodal extraction of a finer-level field at coarse node coordinates
/// (coarse nodes are fine points by nesting, so this is evaluation).
inline Eigen::VectorXd coarse_projection(const TensorField& fine, const TensorMesh& coarse) {
  Eigen::VectorXd out(coarse.n_nodes());
  for (std::int64_t i = 0; i < coarse.n_nodes(); ++i) {
    auto x = coarse.node_coord(i);
    for (int d = 0; d < coarse.dim(); ++d) {
      const Axis& a = fine.axes[d]->axis();
      if (x[d] < a.lo - 1e-9 * a.h() || x[d] > a.hi + 1e-9 * a.h())
        throw std::invalid_argument("coarse_projection: coarse node outside fine domain");
    }
    out(i) = fine.eval(x);
  }
  return out;
}

namespace detail {

/// Scatter of one fine element's quadrature contribution to the coarse
/// correction load: sum_terms coef * w(x) D^{da} N_coarse * D^{db}(uk - proj).
inline void accumulate_correction(const std::vector<const AxisDisc*>& coarse_axes,
                                  const SeparatedOperator& op, const TensorField& uk,
                                  const TensorField& proj,
                                  const std::vector<const AxisDisc*>& fine_axes,
                                  const std::array<int, kMaxDim>& fe,
                                  const std::array<int, kMaxDim>& host, Eigen::VectorXd& corr) {
  const int D = op.dim;
  const int nq = fine_axes[0]->quad_order();
  std::array<int, kMaxDim> q{};
  while (true) {
    std::array<double, kMaxDim> x{};
    double wt = 1.0;
    for (int d = 0; d < D; ++d) {
      x[d] = fine_axes[d]->quad_x(fe[d])[q[d]];
      wt *= fine_axes[d]->quad_w(fe[d])[q[d]];
    }
    std::array<double, kMaxDim> g1{}, g2{};
    const double v = uk.eval_grad(x, g1) - proj.eval_grad(x, g2);
    std::array<double, kMaxDim> dg{};
    for (int d = 0; d < D; ++d) dg[d] = g1[d] - g2[d];

    std::array<Eigen::VectorXd, kMaxDim> tv, td;
    std::array<int, kMaxDim> j0{}, cnt{};
    for (int d = 0; d < D; ++d) {
      const AxisBasis& b = coarse_axes[d]->basis();
      b.eval(host[d], x[d], tv[d], td[d]);
      auto [a0, a1] = b.element_support(host[d]);
      j0[d] = a0;
      cnt[d] = a1 - a0 + 1;
    }
    std::array<std::int64_t, kMaxDim> stride{};
    std::int64_t s = 1;
    for (int d = 0; d < D; ++d) {
      stride[d] = s;
      s *= coarse_axes[d]->n_nodes();
    }

    for (const auto& term : op.terms) {
      bool inside = true;
      double wfac = term.coef;
      for (int d = 0; d < D; ++d) {
        if (x[d] < term.lo[d] || x[d] > term.hi[d]) inside = false;
        if (term.weight[d]) wfac *= term.weight[d](x[d]);
      }
      if (!inside) continue;
      double trial = v;
      for (int d = 0; d < D; ++d)
        if (term.db[d] == 1) trial = dg[d];
      const double scale = wt * wfac * trial;
      std::array<int, kMaxDim> kk{};
      while (true) {
        double tval = 1.0;
        std::int64_t id = 0;
        for (int d = 0; d < D; ++d) {
          id += (j0[d] + kk[d]) * stride[d];
          tval *= (term.da[d] == 1) ? td[d](kk[d]) : tv[d](kk[d]);
        }
        corr(id) += scale * tval;
        int d = 0;
        for (; d < D; ++d) {
          if (++kk[d] < cnt[d]) break;
          kk[d] = 0;
        }
        if (d == D) break;
      }
    }
    int d = 0;
    for (; d < D; ++d) {
      if (++q[d] < nq) break;
      q[d] = 0;
    }
    if (d == D) break;
  }
}

}  // namespace detail

/// Coarse-level load a(w_coarse, uk - proj) over the fine domain minus an
/// optional skip box, integrated element-by-element on the fine mesh (each
/// fine element nests inside one coarse element by the hierarchy invariant).
inline Eigen::VectorXd assemble_correction_load(const std::vector<const AxisDisc*>& coarse_axes,
                                                const SeparatedOperator& op,
                                                const std::vector<const AxisDisc*>& fine_axes,
                                                const TensorField& uk, const TensorField& proj,
                                                const Box* skip = nullptr) {
  const int D = op.dim;
  std::int64_t n = 1;
  for (auto* a : coarse_axes) n *= a->n_nodes();
  Eigen::VectorXd corr = Eigen::VectorXd::Zero(n);
  std::array<int, kMaxDim> e{};
  while (true) {
    std::array<double, kMaxDim> center{};
    for (int d = 0; d < D; ++d)
      center[d] = 0.5 * (fine_axes[d]->axis().node(e[d]) + fine_axes[d]->axis().node(e[d] + 1));
    if (!(skip && skip->contains_point(center))) {
      std::array<int, kMaxDim> host{};
      for (int d = 0; d < D; ++d) host[d] = coarse_axes[d]->basis().locate(center[d]);
      detail::accumulate_correction(coarse_axes, op, uk, proj, fine_axes, e, host, corr);
    }
    int d = 0;
    for (; d < D; ++d) {
      if (++e[d] < fine_axes[d]->basis().n_elem()) break;
      e[d] = 0;
    }
    if (d == D) break;
  }
  return corr;
}

/// Alternating-level solver over a nested hierarchy: each sweep solves
/// levels coarse-to-fine, intermediate levels carrying the fine-residual
/// correction loads, every level l > 0 taking interface Dirichlet data from
/// the coarser composite.
struct MLVMSOptions {
  double tol = 1e-8;
  int max_iter = 50;
  int quad_order = -1;  // default p+2 per level
};

class MLVMSSolver {
 public:
  using Options = MLVMSOptions;

  MLVMSSolver(const ProblemDef& def, const std::vector<LevelSpec>& specs,
              const Options& opt = MLVMSOptions())
      : def_(def), opt_(opt), hierarchy_(specs) {
    const int m = hierarchy_.n_levels();
    levels_.reserve(m);
    for (int l = 0; l < m; ++l) {
      const LevelSpec& spec = hierarchy_.level(l).spec;
      auto lev = std::make_unique<Level>();
      lev->spec = spec;
      lev->mesh = hierarchy_.level(l).mesh;
      auto axes = spec.make_axes();
      const int q = (opt.quad_order > 0) ? opt.quad_order : spec.hyper.p + 2;
      for (auto& ax : axes) {
        lev->axes_store.push_back(std::make_shared<AxisDisc>(ax, spec.hyper, q));
        lev->axes.push_back(lev->axes_store.back().get());
      }
      lev->A = assemble_separated(lev->axes, def.op);
      lev->F = assemble_separated_load(lev->axes, def.source);
      lev->dirichlet = dirichlet_nodes(l, lev->mesh);
      constrain(*lev);
      lev->u = Eigen::VectorXd::Zero(lev->mesh.n_nodes());
      levels_.push_back(std::move(lev));
    }
  }

  int n_levels() const { return static_cast<int>(levels_.size()); }
  const MultilevelMesh& hierarchy() const { return hierarchy_; }

  AlternationReport solve() {
    AlternationReport rep;
    const int m = n_levels();
    for (int it = 0; it < opt_.max_iter; ++it) {
      double change = 0.0;
      for (int l = 0; l < m; ++l) {
        Level& lev = *levels_[l];
        Eigen::VectorXd b = lev.F;
        if (l < m - 1) b -= correction_load(l);
        Eigen::VectorXd g = boundary_values(l);
        // column elimination with the current interface values
        for (std::size_t i = 0; i < lev.dirichlet.size(); ++i) {
          const auto j = lev.dirichlet[i];
          for (SpMat::InnerIterator itc(lev.A, j); itc; ++itc)
            if (!lev.is_dirichlet[itc.row()]) b(itc.row()) -= itc.value() * g(i);
        }
        for (std::size_t i = 0; i < lev.dirichlet.size(); ++i) b(lev.dirichlet[i]) = g(i);
        Eigen::VectorXd u_new = lev.solver->solve(b);
        const double num = (u_new - lev.u).cwiseAbs().maxCoeff();
        const double den = u_new.cwiseAbs().maxCoeff() + 1e-14;
        change = std::max(change, num / den);
        lev.u = std::move(u_new);
        lev.interface_values = g;
      }
      rep.change_norms.push_back(change);
      rep.iterations = it + 1;
      if (change < opt_.tol) {
        rep.converged = true;
        break;
      }
    }
    return rep;
  }

  /// Value of the composite field (finest level containing x).
  double composite_eval(const std::array<double, kMaxDim>& x) const {
    int l = hierarchy_.finest_level_containing(x);
    if (l < 0) throw std::invalid_argument("composite_eval: point outside domain");
    return levels_[l]->field().eval(x);
  }
  double composite_eval_grad(const std::array<double, kMaxDim>& x,
                             std::array<double, kMaxDim>& grad) const {
    int l = hierarchy_.finest_level_containing(x);
    if (l < 0) throw std::invalid_argument("composite_eval: point outside domain");
    return levels_[l]->field().eval_grad(x, grad);
  }

  LevelState state(int l) const {
    const Level& lev = *levels_[l];
    LevelState st;
    st.level = l;
    st.mesh = lev.mesh;
    st.axes_store = lev.axes_store;
    st.axes = lev.axes;
    st.u = lev.u;
    st.interface_nodes = lev.dirichlet;
    st.interface_values = lev.interface_values;
    return st;
  }

  const std::vector<const AxisDisc*>& axes(int l) const { return levels_[l]->axes; }
  const Eigen::VectorXd& u(int l) const { return levels_[l]->u; }

  /// Composite error norms against an exact solution: per level, quadrature
  /// over Omega_l minus the next level's box.
  ErrorNorms composite_error(const ManufacturedProblem& pb) const {
    double l2 = 0.0, h1 = 0.0;
    const int grad_axes = pb.spacetime ? def_.dim - 1 : def_.dim;
    for (int l = 0; l < n_levels(); ++l) {
      std::vector<Box> skip;
      if (l + 1 < n_levels()) skip.push_back(levels_[l + 1]->spec.domain);
      TensorField f = levels_[l]->field();
      auto norms = error_norms(
          levels_[l]->axes,
          [&](const std::array<double, kMaxDim>& x, std::array<double, kMaxDim>& g) {
            return f.eval_grad(x, g);
          },
          pb.exact, pb.exact_grad, pb.k, skip, grad_axes);
      l2 += norms.l2 * norms.l2;
      h1 += norms.h1 * norms.h1;
    }
    ErrorNorms out;
    out.l2 = std::sqrt(l2);
    out.h1 = std::sqrt(h1);
    out.energy = std::sqrt(pb.k * h1);
    return out;
  }

 private:
  struct Level {
    LevelSpec spec;
    TensorField field() const { return TensorField{axes, u}; }
    TensorMesh mesh;
    std::vector<std::shared_ptr<AxisDisc>> axes_store;
    std::vector<const AxisDisc*> axes;
    SpMat A;   // unconstrained operator
    Eigen::VectorXd F;
    std::vector<std::int64_t> dirichlet;
    std::vector<char> is_dirichlet;
    std::unique_ptr<LinearSolver> solver;  // factorization of the constrained matrix
    Eigen::VectorXd u;
    Eigen::VectorXd interface_values;
  };

  /// Dirichlet node set of level l: all boundary nodes except those lying
  /// only on globally excluded (natural) faces.
  std::vector<std::int64_t> dirichlet_nodes(int l, const TensorMesh& mesh) const {
    const Box& global = hierarchy_.level(0).spec.domain;
    std::vector<std::pair<int, int>> exclude;
    for (auto& [ax, side] : def_.natural_faces) {
      const double face = (side == 0) ? mesh.axis(ax).lo : mesh.axis(ax).hi;
      const double gface = (side == 0) ? global.lo[ax] : global.hi[ax];
      if (std::abs(face - gface) < 1e-9 * mesh.axis(ax).h()) exclude.emplace_back(ax, side);
    }
    return boundary_nodes(mesh, exclude);
  }

  void constrain(Level& lev) const {
    lev.is_dirichlet.assign(lev.mesh.n_nodes(), 0);
    for (auto n : lev.dirichlet) lev.is_dirichlet[n] = 1;
    std::vector<Triplet> trips;
    trips.reserve(lev.A.nonZeros());
    for (int c = 0; c < lev.A.outerSize(); ++c)
      for (SpMat::InnerIterator it(lev.A, c); it; ++it)
        if (!lev.is_dirichlet[it.row()] && !lev.is_dirichlet[it.col()])
          trips.emplace_back(it.row(), it.col(), it.value());
    for (std::int64_t i = 0; i < lev.mesh.n_nodes(); ++i)
      if (lev.is_dirichlet[i]) trips.emplace_back(i, i, 1.0);
    SpMat Ac(lev.A.rows(), lev.A.cols());
    Ac.setFromTriplets(trips.begin(), trips.end());
    Ac.makeCompressed();
    lev.solver = std::make_unique<LinearSolver>(Ac, def_.symmetric);
  }

  /// Interface/boundary values of level l: outer Dirichlet data for l = 0,
  /// the coarser composite for l > 0.
  Eigen::VectorXd boundary_values(int l) const {
    const Level& lev = *levels_[l];
    Eigen::VectorXd g(lev.dirichlet.size());
    for (std::size_t i = 0; i < lev.dirichlet.size(); ++i) {
      auto x = lev.mesh.node_coord(lev.dirichlet[i]);
      if (l == 0) {
        g(i) = def_.bc ? def_.bc(x) : 0.0;
      } else {
        // composite of levels < l (x is on the level-l box boundary, hence
        // inside level l-1's domain)
        int src = -1;
        for (int k = l - 1; k >= 0; --k)
          if (levels_[k]->spec.domain.contains_point(x, 1e-12)) {
            src = k;
            break;
          }
        g(i) = levels_[src]->field().eval(x);
      }
    }
    return g;
  }

  /// Virtual level-l nodal values of the level-k field: extraction inside
  /// Omega_k, composite of coarser levels outside.
  Eigen::VectorXd virtual_nodal(int l, int k) const {
    const Level& lev = *levels_[l];
    const Box& box_k = levels_[k]->spec.domain;
    Eigen::VectorXd c(lev.mesh.n_nodes());
    for (std::int64_t i = 0; i < lev.mesh.n_nodes(); ++i) {
      auto x = lev.mesh.node_coord(i);
      if (box_k.contains_point(x, 1e-12)) {
        c(i) = levels_[k]->field().eval(x);
      } else {
        int src = hierarchy_.finest_level_containing(x);
        if (src >= k) src = k - 1;  // only coarser information
        while (src > 0 && !levels_[src]->spec.domain.contains_point(x, 1e-12)) --src;
        c(i) = levels_[src]->field().eval(x);
      }
    }
    return c;
  }

  /// Correction load of level l:
  /// sum_{k>l} a(w_l, u_k - I^(l) u_k)_{Omega_k \ Omega_{k+1}}.
  Eigen::VectorXd correction_load(int l) const {
    const Level& lev = *levels_[l];
    Eigen::VectorXd corr = Eigen::VectorXd::Zero(lev.mesh.n_nodes());
    for (int k = l + 1; k < n_levels(); ++k) {
      const Level& fin = *levels_[k];
      const Box* box_next = (k + 1 < n_levels()) ? &levels_[k + 1]->spec.domain : nullptr;
      TensorField uk = fin.field();
      TensorField proj{lev.axes, virtual_nodal(l, k)};
      corr += assemble_correction_load(lev.axes, def_.op, fin.axes, uk, proj, box_next);
    }
    return corr;
  }

  ProblemDef def_;
  Options opt_;
  MultilevelMesh hierarchy_;
  std::vector<std::unique_ptr<Level>> levels_;
};

/// Algorithm for m levels; returns per-level states and the sweep report.
inline std::pair<std::vector<LevelState>, AlternationReport> solve_m_level(
    const ProblemDef& def, const std::vector<LevelSpec>& specs, double tol = 1e-8,
    int max_iter = 50) {
  if (specs.size() < 2) throw std::invalid_argument("solve_m_level: needs >= 2 levels");
  MLVMSSolver solver(def, specs, {tol, max_iter, -1});
  auto rep = solver.solve();
  std::vector<LevelState> states;
  for (int l = 0; l < solver.n_levels(); ++l) states.push_back(solver.state(l));
  return {std::move(states), rep};
}

/// Two-level special case (identical code path to the m-level solver).
inline std::pair<std::vector<LevelState>, AlternationReport> solve_two_level(
    const ProblemDef& def, const std::vector<LevelSpec>& specs, double tol = 1e-8,
    int max_iter = 50) {
  if (specs.size() != 2) throw std::invalid_argument("solve_two_level: needs exactly 2 levels");
  return solve_m_level(def, specs, tol, max_iter);
}

}  // namespace mlvms
