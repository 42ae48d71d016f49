#pragma once

#include <random>

#include "mlvms/assembly.hpp"
#include "mlvms/fields.hpp"
#include "mlvms/mlvms.hpp"

namespace mlvms {

/// Canonical-polyadic solution: Q modes, each a per-axis nodal factor vector.
struct TDSolution {
  std::vector<std::shared_ptr<AxisDisc>> axes_store;
  std::vector<const AxisDisc*> axes;
  std::vector<std::vector<Eigen::VectorXd>> modes;  // [mode][axis]

  int dim() const { return static_cast<int>(axes.size()); }
  int n_modes() const { return static_cast<int>(modes.size()); }

  double eval(const std::array<double, kMaxDim>& x) const {
    double s = 0.0;
    for (const auto& mode : modes) {
      double p = 1.0;
      for (int d = 0; d < dim(); ++d) p *= axes[d]->basis().interpolate(mode[d], x[d]);
      s += p;
    }
    return s;
  }

  double eval_grad(const std::array<double, kMaxDim>& x, std::array<double, kMaxDim>& grad) const {
    const int D = dim();
    double s = 0.0;
    for (int d = 0; d < D; ++d) grad[d] = 0.0;
    for (const auto& mode : modes) {
      double v[kMaxDim], dv[kMaxDim];
      for (int d = 0; d < D; ++d) {
        v[d] = axes[d]->basis().interpolate(mode[d], x[d]);
        dv[d] = axes[d]->basis().interpolate_deriv(mode[d], x[d]);
      }
      double p = 1.0;
      for (int d = 0; d < D; ++d) p *= v[d];
      s += p;
      for (int g = 0; g < D; ++g) {
        double pg = 1.0;
        for (int d = 0; d < D; ++d) pg *= (d == g) ? dv[d] : v[d];
        grad[g] += pg;
      }
    }
    return s;
  }

  /// Expansion to the full lexicographic nodal vector (axis 0 fastest).
  Eigen::VectorXd expand() const {
    std::int64_t n = 1;
    for (auto* a : axes) n *= a->n_nodes();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
    for (const auto& mode : modes) {
      Eigen::VectorXd term = mode[0];
      for (int d = 1; d < dim(); ++d) {
        Eigen::VectorXd next(term.size() * mode[d].size());
        for (Eigen::Index i = 0; i < mode[d].size(); ++i)
          next.segment(i * term.size(), term.size()) = mode[d](i) * term;
        term.swap(next);
      }
      out += term;
    }
    return out;
  }

  /// Serialized solution payload: factors only.
  std::int64_t storage_bytes() const {
    std::int64_t n = 0;
    for (const auto& mode : modes)
      for (const auto& f : mode) n += f.size();
    return n * static_cast<std::int64_t>(sizeof(double));
  }

  /// TD unknown count sum_d n_d per mode.
  std::int64_t n_dofs() const {
    std::int64_t per_mode = 0;
    for (auto* a : axes) per_mode += a->n_nodes();
    return per_mode * n_modes();
  }
};

inline double td_eval(const TDSolution& sol, const std::array<double, kMaxDim>& x) {
  for (int d = 0; d < sol.dim(); ++d) {
    const Axis& a = sol.axes[d]->axis();
    if (x[d] < a.lo - 1e-9 * a.h() || x[d] > a.hi + 1e-9 * a.h())
      throw std::invalid_argument("td_eval: point outside domain");
  }
  return sol.eval(x);
}

struct TDOptions {
  double tol = 1e-8;
  int max_sweeps = 200;
  unsigned seed = 42;
  int stagnation_window = 5;  // sweeps without >1% improvement above tol
  bool check_stagnation = true;
};

struct TDReport {
  int sweeps = 0;
  bool converged = false;
  std::vector<double> change_norms;
  std::vector<double> energy;  // functional history (symmetric operators)
};

struct ModeReport {
  std::vector<double> enrichment_norms;  // PGD, in solve order
  std::vector<double> deviations;        // TD-vs-full per Q (estimate_modes)
  int chosen_q = 0;
};

/// Per-axis Dirichlet rows of the factor vectors: node -> one value per mode.
struct TDConstraint {
  int axis = 0;
  int node = 0;
  Eigen::VectorXd values;  // length Q
};

/// Block alternating solver: per axis, all requested modes solved jointly
/// from one coupled sparse system; axis sweeps iterate to a fixed point.
class TDSolver {
 public:
  TDSolver(std::vector<const AxisDisc*> axes, const SeparatedOperator& op,
           const SeparatedSource& src, const TDOptions& opt = TDOptions())
      : axes_(std::move(axes)), opt_(opt), symmetric_(true) {
    const int D = static_cast<int>(axes_.size());
    if (op.dim != D) throw std::invalid_argument("TDSolver: operator dimension mismatch");
    for (const auto& t : op.terms) {
      OpTerm ot;
      ot.coef = t.coef;
      bool sym = true;
      for (int d = 0; d < D; ++d) {
        ot.M[d] = axes_[d]->matrix(t.da[d], t.db[d], t.weight[d], t.lo[d], t.hi[d]);
        if (t.da[d] != t.db[d]) sym = false;
      }
      if (!sym) symmetric_ = false;
      terms_.push_back(std::move(ot));
    }
    if (src.dim != 0 && src.dim != D)
      throw std::invalid_argument("TDSolver: source dimension mismatch");
    for (const auto& t : src.terms) {
      SrcTerm st;
      st.coef = t.coef;
      for (int d = 0; d < D; ++d) st.f[d] = axes_[d]->load(t.factor[d]);
      sources_.push_back(std::move(st));
    }
  }

  bool symmetric() const { return symmetric_; }
  const std::vector<const AxisDisc*>& axes() const { return axes_; }

  /// Additional full-grid load vector (e.g. multilevel correction terms).
  void set_extra_load(Eigen::VectorXd b) { extra_ = std::move(b); }
  void clear_extra_load() { extra_.resize(0); }

  void set_constraints(std::vector<TDConstraint> c) { constraints_ = std::move(c); }

  /// All-at-once TD solve with Q modes; the first `first_free` modes are
  /// held fixed (boundary lifting), so `init` must supply them.
  /// Modes not covered by `init` are ramped in one at a time (greedy warm
  /// start): a cold all-at-once start with many modes leaves the random
  /// factors nearly parallel after the first sweep, which makes the joint
  /// axis systems singular.
  TDSolution solve(int Q, TDReport* report = nullptr, const TDSolution* init = nullptr,
                   int first_free = 0) const {
    if (Q < 1) throw std::invalid_argument("TDSolver: Q must be positive");
    if (first_free < 0 || first_free >= Q || (first_free > 0 && (!init || init->n_modes() < first_free)))
      throw std::invalid_argument("TDSolver: frozen modes require initial data");
    const int covered = init ? std::min<int>(init->n_modes(), Q) : 0;
    const int q0 = std::max(covered, first_free + 1);
    TDReport rep;
    std::vector<std::vector<Eigen::VectorXd>> modes = initial_modes(q0, init, first_free);
    const double ramp_tol = std::max(opt_.tol, 1e-2);
    const int ramp_sweeps = std::min(opt_.max_sweeps, 10);
    while (static_cast<int>(modes.size()) < Q) {
      if (static_cast<int>(modes.size()) > covered) {
        TDReport sub;
        run_als(modes, first_free, sub, ramp_tol, ramp_sweeps, /*stagnation=*/false);
        rep.sweeps += sub.sweeps;
      }
      const int q = static_cast<int>(modes.size());
      modes.push_back(random_mode(q));
      for (const auto& c : constraints_) modes[q][c.axis](c.node) = c.values(q);
    }
    TDReport sub;
    run_als(modes, first_free, sub, opt_.tol, opt_.max_sweeps, opt_.check_stagnation);
    rep.sweeps += sub.sweeps;
    rep.converged = sub.converged;
    rep.change_norms = std::move(sub.change_norms);
    rep.energy = std::move(sub.energy);
    if (report) *report = rep;
    return make_solution(std::move(modes));
  }

  /// Greedy enrichment: each new mode solved with the previous ones frozen.
  std::pair<TDSolution, ModeReport> pgd(double mode_tol, int max_modes,
                                        TDReport* report = nullptr) const {
    if (mode_tol <= 0) throw std::invalid_argument("TDSolver: mode_tol must be positive");
    if (!constraints_.empty())
      throw std::invalid_argument("TDSolver: PGD path supports homogeneous constraints only");
    std::vector<std::vector<Eigen::VectorXd>> modes;
    ModeReport mrep;
    TDReport rep;
    double first_norm = 0.0;
    for (int q = 0; q < max_modes; ++q) {
      modes.push_back(random_mode(q));
      TDReport sub;
      run_als(modes, q, sub);
      rep.sweeps += sub.sweeps;
      double nrm = 1.0;
      for (const auto& f : modes.back()) nrm *= f.norm();
      mrep.enrichment_norms.push_back(nrm);
      if (q == 0) first_norm = nrm;
      if (q > 0 && nrm < mode_tol * first_norm) {
        mrep.chosen_q = q + 1;
        rep.converged = true;
        break;
      }
    }
    if (mrep.chosen_q == 0) mrep.chosen_q = static_cast<int>(modes.size());
    if (report) *report = rep;
    return {make_solution(std::move(modes)), mrep};
  }

 private:
  struct OpTerm {
    double coef = 1.0;
    std::array<SpMat, kMaxDim> M;
  };
  struct SrcTerm {
    double coef = 1.0;
    std::array<Eigen::VectorXd, kMaxDim> f;
  };

  TDSolution make_solution(std::vector<std::vector<Eigen::VectorXd>> modes) const {
    TDSolution sol;
    sol.axes = axes_;
    sol.modes = std::move(modes);
    return sol;
  }

  std::vector<Eigen::VectorXd> random_mode(int q) const {
    const int D = static_cast<int>(axes_.size());
    std::mt19937 rng(opt_.seed + 1000003u * static_cast<unsigned>(q));
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    std::vector<Eigen::VectorXd> mode(D);
    for (int d = 0; d < D; ++d) {
      mode[d].resize(axes_[d]->n_nodes());
      for (Eigen::Index i = 0; i < mode[d].size(); ++i) mode[d](i) = U(rng);
      mode[d] /= mode[d].norm();
    }
    return mode;
  }

  std::vector<std::vector<Eigen::VectorXd>> initial_modes(int Q, const TDSolution* init,
                                                          int first_free) const {
    std::vector<std::vector<Eigen::VectorXd>> modes;
    for (int q = 0; q < Q; ++q) {
      if (init && q < init->n_modes()) {
        modes.push_back(init->modes[q]);
      } else {
        modes.push_back(random_mode(q));
      }
    }
    // seed constrained rows so boundary data is present from the start
    for (const auto& c : constraints_)
      for (int q = first_free; q < Q; ++q) modes[q][c.axis](c.node) = c.values(q);
    return modes;
  }

  /// Alternating axis sweeps over modes [first_free, Q). Convergence is
  /// measured on the expanded nodal field: the factor split between modes is
  /// not unique (redundant modes shuffle content), the field is.
  void run_als(std::vector<std::vector<Eigen::VectorXd>>& modes, int first_free,
               TDReport& rep) const {
    run_als(modes, first_free, rep, opt_.tol, opt_.max_sweeps, opt_.check_stagnation);
  }

  void run_als(std::vector<std::vector<Eigen::VectorXd>>& modes, int first_free, TDReport& rep,
               double tol, int max_sweeps, bool check_stagnation) const {
    const int D = static_cast<int>(axes_.size());
    const int Q = static_cast<int>(modes.size());
    Eigen::VectorXd nodal_prev;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
      for (int d = 0; d < D; ++d) {
        std::vector<Eigen::VectorXd> fresh = solve_axis(modes, d, first_free);
        for (int q = first_free; q < Q; ++q) modes[q][d] = std::move(fresh[q - first_free]);
      }
      Eigen::VectorXd nodal = expand_modes(modes);
      double change = 1.0;
      if (nodal_prev.size() == nodal.size())
        change = (nodal - nodal_prev).cwiseAbs().maxCoeff() /
                 (nodal.cwiseAbs().maxCoeff() + 1e-14);
      nodal_prev = std::move(nodal);
      rep.change_norms.push_back(change);
      rep.sweeps = sweep + 1;
      if (symmetric_) rep.energy.push_back(energy_functional(modes));
      if (change < tol) {
        rep.converged = true;
        return;
      }
      if (check_stagnation && sweep + 1 >= 2 * opt_.stagnation_window) {
        const double now = rep.change_norms.back();
        const double then = rep.change_norms[rep.change_norms.size() - opt_.stagnation_window];
        if (now > tol && now > 0.99 * then)
          throw std::runtime_error("TDSolver: stagnation (change plateau above tolerance)");
      }
    }
  }

  Eigen::VectorXd expand_modes(const std::vector<std::vector<Eigen::VectorXd>>& modes) const {
    TDSolution tmp;
    tmp.axes = axes_;
    tmp.modes = modes;
    return tmp.expand();
  }

  /// Joint sparse solve for all free factors of axis d.
  std::vector<Eigen::VectorXd> solve_axis(const std::vector<std::vector<Eigen::VectorXd>>& modes,
                                          int d, int first_free) const {
    const int D = static_cast<int>(axes_.size());
    const int Q = static_cast<int>(modes.size());
    const int nf = Q - first_free;
    const int n = axes_[d]->n_nodes();
    const Eigen::Index N = static_cast<Eigen::Index>(n) * nf;
    // node-major unknown ordering (node i, then mode q): keeps the joint
    // system block-banded so the sparse LU does not fill in
    auto dof = [nf](int bq, Eigen::Index i) { return i * nf + bq; };

    std::vector<Triplet> trips;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(N);

    // operator blocks: alpha_t(q,q') = coef_t prod_{d'!=d} u_q^T M u_q'
    for (const auto& t : terms_) {
      Eigen::MatrixXd alpha(Q, Q);
      for (int q = 0; q < Q; ++q)
        for (int qp = 0; qp < Q; ++qp) {
          double a = t.coef;
          for (int dp = 0; dp < D; ++dp)
            if (dp != d) a *= modes[q][dp].dot(t.M[dp] * modes[qp][dp]);
          alpha(q, qp) = a;
        }
      for (int q = first_free; q < Q; ++q) {
        const int bq = q - first_free;
        for (int qp = 0; qp < Q; ++qp) {
          if (qp >= first_free) {
            const int bqp = qp - first_free;
            if (alpha(q, qp) != 0.0)
              for (int c = 0; c < t.M[d].outerSize(); ++c)
                for (SpMat::InnerIterator it(t.M[d], c); it; ++it)
                  trips.emplace_back(dof(bq, it.row()), dof(bqp, it.col()),
                                     alpha(q, qp) * it.value());
          } else {
            const Eigen::VectorXd contrib = alpha(q, qp) * (t.M[d] * modes[qp][d]);
            for (Eigen::Index i = 0; i < n; ++i) rhs(dof(bq, i)) -= contrib(i);
          }
        }
      }
    }

    // separated sources
    for (const auto& s : sources_) {
      for (int q = first_free; q < Q; ++q) {
        double beta = s.coef;
        for (int dp = 0; dp < D; ++dp)
          if (dp != d) beta *= modes[q][dp].dot(s.f[dp]);
        const int bq = q - first_free;
        for (Eigen::Index i = 0; i < n; ++i) rhs(dof(bq, i)) += beta * s.f[d](i);
      }
    }

    // extra full-grid load: contract over all axes except d
    if (extra_.size() > 0) {
      for (int q = first_free; q < Q; ++q) {
        const Eigen::VectorXd contrib = contract_extra(modes[q], d);
        const int bq = q - first_free;
        for (Eigen::Index i = 0; i < n; ++i) rhs(dof(bq, i)) += contrib(i);
      }
    }

    SpMat B(N, N);
    B.setFromTriplets(trips.begin(), trips.end());

    // Dirichlet rows on the factors of this axis
    std::vector<char> fixed(N, 0);
    Eigen::VectorXd fval = Eigen::VectorXd::Zero(N);
    for (const auto& c : constraints_) {
      if (c.axis != d) continue;
      for (int q = first_free; q < Q; ++q) {
        const Eigen::Index row = dof(q - first_free, c.node);
        fixed[row] = 1;
        fval(row) = c.values(q);
      }
    }
    if (std::find(fixed.begin(), fixed.end(), 1) != fixed.end()) {
      std::vector<Triplet> t2;
      t2.reserve(B.nonZeros());
      for (int c = 0; c < B.outerSize(); ++c)
        for (SpMat::InnerIterator it(B, c); it; ++it) {
          if (fixed[it.row()]) continue;
          if (fixed[it.col()])
            rhs(it.row()) -= it.value() * fval(it.col());
          else
            t2.emplace_back(it.row(), it.col(), it.value());
        }
      for (Eigen::Index i = 0; i < N; ++i)
        if (fixed[i]) {
          t2.emplace_back(i, i, 1.0);
          rhs(i) = fval(i);
        }
      B.setZero();
      B.setFromTriplets(t2.begin(), t2.end());
    }
    B.makeCompressed();

    Eigen::VectorXd x = factor_solve(B, rhs);
    std::vector<Eigen::VectorXd> out(nf);
    for (int q = 0; q < nf; ++q) {
      out[q].resize(n);
      for (Eigen::Index i = 0; i < n; ++i) out[q](i) = x(dof(q, i));
    }
    return out;
  }

  /// Direct solve with a Tikhonov retry on singular blocks (mode redundancy).
  Eigen::VectorXd factor_solve(SpMat& B, const Eigen::VectorXd& rhs) const {
    auto attempt = [&](const SpMat& M, Eigen::VectorXd& out) {
      Eigen::SparseLU<SpMat> lu(M);
      if (lu.info() != Eigen::Success) return false;
      out = lu.solve(rhs);
      return (M * out - rhs).norm() <= 1e-8 * std::max(rhs.norm(), 1.0);
    };
    Eigen::VectorXd x;
    if (attempt(B, x)) return x;
    // Redundant modes make the joint system (near-)singular and possibly
    // inconsistent. Fall back to Tikhonov-regularized least squares: always
    // well-posed, keeps the sweep moving, and the redundant directions it
    // leaves behind cost accuracy but not correctness (convergence is
    // measured on the expanded field).
    const SpMat Bt = SpMat(B.transpose());
    SpMat N = Bt * B;
    double scale = N.diagonal().cwiseAbs().maxCoeff();
    if (scale <= 0.0) scale = 1.0;
    SpMat I(B.rows(), B.cols());
    I.setIdentity();
    N += (1e-12 * scale) * I;
    Eigen::SimplicialLDLT<SpMat> ldlt(N);
    if (ldlt.info() != Eigen::Success)
      throw std::runtime_error("TDSolver: singular axis system (redundant modes)");
    return ldlt.solve(Bt * rhs);
  }

  /// 1/2 a(u,u) - (f,u) for the current modes (symmetric operators).
  double energy_functional(const std::vector<std::vector<Eigen::VectorXd>>& modes) const {
    const int D = static_cast<int>(axes_.size());
    const int Q = static_cast<int>(modes.size());
    double j = 0.0;
    for (const auto& t : terms_)
      for (int q = 0; q < Q; ++q)
        for (int qp = 0; qp < Q; ++qp) {
          double a = t.coef;
          for (int d = 0; d < D; ++d) a *= modes[q][d].dot(t.M[d] * modes[qp][d]);
          j += 0.5 * a;
        }
    for (const auto& s : sources_)
      for (int q = 0; q < Q; ++q) {
        double b = s.coef;
        for (int d = 0; d < D; ++d) b *= modes[q][d].dot(s.f[d]);
        j -= b;
      }
    if (extra_.size() > 0)
      for (int q = 0; q < Q; ++q) {
        // dot(extra, kron expansion of mode q) via contraction on axis 0
        Eigen::VectorXd c0 = contract_extra(modes[q], 0);
        j -= c0.dot(modes[q][0]);
      }
    return j;
  }

  /// contract extra_ with all factor vectors except axis d.
  Eigen::VectorXd contract_extra(const std::vector<Eigen::VectorXd>& mode, int d) const {
    const int D = static_cast<int>(axes_.size());
    Eigen::VectorXd out = Eigen::VectorXd::Zero(axes_[d]->n_nodes());
    std::array<int, kMaxDim> idx{};
    std::array<int, kMaxDim> nn{};
    for (int dp = 0; dp < D; ++dp) nn[dp] = axes_[dp]->n_nodes();
    for (Eigen::Index flat = 0; flat < extra_.size(); ++flat) {
      double p = extra_(flat);
      if (p != 0.0) {
        for (int dp = 0; dp < D; ++dp)
          if (dp != d) p *= mode[dp](idx[dp]);
        out(idx[d]) += p;
      }
      int dp = 0;
      for (; dp < D; ++dp) {
        if (++idx[dp] < nn[dp]) break;
        idx[dp] = 0;
      }
    }
    return out;
  }

  std::vector<const AxisDisc*> axes_;
  TDOptions opt_;
  bool symmetric_;
  std::vector<OpTerm> terms_;
  std::vector<SrcTerm> sources_;
  std::vector<TDConstraint> constraints_;
  Eigen::VectorXd extra_;
};

/// Boundary-row constraints of a finer level from a coarser TD solution:
/// the first Q_coarse modes carry interpolated coarse factor traces, the
/// remaining modes zero boundary rows. Requires Q_fine > Q_coarse.
inline std::vector<TDConstraint> nest_boundary_modes(
    const std::vector<const AxisDisc*>& fine_axes, const TDSolution& coarse, int q_fine) {
  const int qc = coarse.n_modes();
  if (q_fine <= qc)
    throw std::invalid_argument("nest_boundary_modes: mode counts must strictly increase");
  std::vector<TDConstraint> out;
  for (int d = 0; d < static_cast<int>(fine_axes.size()); ++d) {
    const Axis& fa = fine_axes[d]->axis();
    for (int node : {0, fa.n_nodes() - 1}) {
      TDConstraint c;
      c.axis = d;
      c.node = node;
      c.values = Eigen::VectorXd::Zero(q_fine);
      for (int q = 0; q < qc; ++q)
        c.values(q) = coarse.axes[d]->basis().interpolate(coarse.modes[q][d], fa.node(node));
      out.push_back(std::move(c));
    }
  }
  return out;
}

struct DecompositionCheck {
  double e_td = 0.0;
  double e_full = 0.0;
  double deviation = 0.0;
  double residual = 0.0;  // |e_td^2 - e_full^2 - dev^2|
};

namespace detail {

/// Essential boundary factor rows of one grid: both ends of every axis except
/// faces coinciding with a globally natural face. Values zero (homogeneous).
inline std::vector<TDConstraint> homogeneous_td_constraints(
    const std::vector<const AxisDisc*>& axes, int q,
    const std::vector<std::pair<int, int>>& natural_faces = {}) {
  std::vector<TDConstraint> out;
  for (int d = 0; d < static_cast<int>(axes.size()); ++d) {
    for (int side = 0; side < 2; ++side) {
      bool natural = false;
      for (auto& [ax, s] : natural_faces)
        if (ax == d && s == side) natural = true;
      if (natural) continue;
      TDConstraint c;
      c.axis = d;
      c.node = (side == 0) ? 0 : axes[d]->n_nodes() - 1;
      c.values = Eigen::VectorXd::Zero(q);
      out.push_back(std::move(c));
    }
  }
  return out;
}

/// Symmetric (diffusion) part of a separable operator, used for energy norms.
inline SeparatedOperator symmetric_part(const SeparatedOperator& op) {
  SeparatedOperator sym;
  sym.dim = op.dim;
  for (const auto& t : op.terms) {
    if (t.da == t.db) sym.terms.push_back(t);
  }
  return sym;
}

}  // namespace detail

/// Single-grid TD solve of a separable problem with homogeneous essential
/// data (the manufactured problems decay below machine precision on the
/// Dirichlet boundary).
inline std::pair<TDSolution, TDReport> solve_td(const ProblemDef& def,
                                                const std::vector<const AxisDisc*>& axes, int q,
                                                const TDOptions& opt = TDOptions()) {
  TDSolver solver(axes, def.op, def.source, opt);
  solver.set_constraints(detail::homogeneous_td_constraints(axes, q, def.natural_faces));
  TDReport rep;
  TDSolution sol = solver.solve(q, &rep);
  return {std::move(sol), rep};
}

/// Greedy rank-one enrichment with the stopping rule
/// ||mode_q|| / ||mode_1|| < mode_tol.
inline std::pair<TDSolution, ModeReport> solve_pgd(const ProblemDef& def,
                                                   const std::vector<const AxisDisc*>& axes,
                                                   double mode_tol, int max_modes,
                                                   const TDOptions& opt = TDOptions()) {
  TDSolver solver(axes, def.op, def.source, opt);
  return solver.pgd(mode_tol, max_modes);
}

/// Energy-norm deviation sqrt(d^T K d) between the TD and full solutions of
/// the same grid, with K the symmetric (diffusion) part of the operator.
inline double td_deviation(const std::vector<const AxisDisc*>& axes, const SeparatedOperator& op,
                           const TDSolution& td, const Eigen::VectorXd& u_full,
                           double* full_norm = nullptr) {
  SpMat K = assemble_separated(axes, detail::symmetric_part(op));
  Eigen::VectorXd d = td.expand() - u_full;
  if (full_norm) *full_norm = std::sqrt(std::max(0.0, u_full.dot(K * u_full)));
  return std::sqrt(std::max(0.0, d.dot(K * d)));
}

/// Full (tensor-product) Galerkin solve of the same problem and grid.
inline Eigen::VectorXd solve_full(const ProblemDef& def,
                                  const std::vector<const AxisDisc*>& axes) {
  SparseSystem sys;
  sys.A = assemble_separated(axes, def.op);
  sys.b = assemble_separated_load(axes, def.source);
  sys.symmetric = def.symmetric;
  std::vector<Axis> ax;
  for (auto* a : axes) ax.push_back(a->axis());
  TensorMesh mesh(ax);
  auto bnodes = boundary_nodes(mesh, def.natural_faces);
  if (def.bc) {
    apply_dirichlet(sys, mesh, bnodes, def.bc);
  } else {
    apply_dirichlet(sys, bnodes, std::vector<double>(bnodes.size(), 0.0));
  }
  return solve_linear(sys);
}

/// Smallest mode count whose relative energy deviation from the full solve
/// on the same (coarse) grid falls below tol.
inline int estimate_modes(const ProblemDef& def, const std::vector<const AxisDisc*>& axes,
                          double tol, int max_modes, ModeReport* report = nullptr,
                          const TDOptions& opt = TDOptions()) {
  if (tol <= 0) throw std::invalid_argument("estimate_modes: tol must be positive");
  Eigen::VectorXd u_full = solve_full(def, axes);
  SpMat K = assemble_separated(axes, detail::symmetric_part(def.op));
  const double ref = std::sqrt(std::max(u_full.dot(K * u_full), 1e-300));
  ModeReport rep;
  int chosen = max_modes;
  TDSolution prev;
  for (int q = 1; q <= max_modes; ++q) {
    TDSolver solver(axes, def.op, def.source, opt);
    solver.set_constraints(detail::homogeneous_td_constraints(axes, q, def.natural_faces));
    TDSolution sol = solver.solve(q, nullptr, (q > 1) ? &prev : nullptr);
    Eigen::VectorXd d = sol.expand() - u_full;
    const double dev = std::sqrt(std::max(0.0, d.dot(K * d))) / ref;
    rep.deviations.push_back(dev);
    prev = std::move(sol);
    if (dev < tol) {
      chosen = q;
      break;
    }
  }
  rep.chosen_q = chosen;
  if (report) *report = rep;
  return chosen;
}

/// Error decomposition e_td^2 = e_full^2 + deviation^2 (energy norm): the
/// full solution is the Galerkin projection, the TD solution lies in the
/// same discrete space, so the cross term vanishes up to quadrature error.
inline DecompositionCheck error_decomposition_check(const ManufacturedProblem& pb,
                                                    const std::vector<const AxisDisc*>& axes,
                                                    int q, const TDOptions& opt = TDOptions()) {
  ProblemDef def = ProblemDef::from_manufactured(pb);
  Eigen::VectorXd u_full = solve_full(def, axes);
  auto [td, rep] = solve_td(def, axes, q, opt);

  const int grad_axes = pb.spacetime ? pb.dim - 1 : pb.dim;
  TensorField ff{axes, u_full};
  auto full_norms = error_norms(
      axes,
      [&](const std::array<double, kMaxDim>& x, std::array<double, kMaxDim>& g) {
        return ff.eval_grad(x, g);
      },
      pb.exact, pb.exact_grad, pb.k, {}, grad_axes);
  auto td_norms = error_norms(
      axes,
      [&](const std::array<double, kMaxDim>& x, std::array<double, kMaxDim>& g) {
        return td.eval_grad(x, g);
      },
      pb.exact, pb.exact_grad, pb.k, {}, grad_axes);

  DecompositionCheck out;
  out.e_full = full_norms.energy;
  out.e_td = td_norms.energy;
  // deviation in the same k-weighted energy norm as the errors (the
  // symmetric part of the operator already carries the factor k)
  out.deviation = td_deviation(axes, def.op, td, u_full);
  out.residual = std::abs(out.e_td * out.e_td - out.e_full * out.e_full -
                          out.deviation * out.deviation);
  return out;
}

/// Per-level TD state of the multilevel solver.
struct TDLevelState {
  int level = 0;
  TensorMesh mesh;
  TDSolution sol;
};

struct TDMLOptions {
  double tol = 1e-6;   // outer alternation tolerance (relative nodal change)
  int max_iter = 20;   // outer sweeps
  int quad_order = -1;  // default p+2 per level
  bool corrections = true;
  TDOptions inner;
  TDMLOptions() { inner.tol = 1e-7; }
};

/// Multilevel TD: the alternating-level algorithm with every level solved in
/// separated form. Finer levels inherit boundary data through nested modes;
/// coarser levels carry the fine-residual correction loads (assembled from
/// the expanded fine fields).
class TDMLSolver {
 public:
  TDMLSolver(const ProblemDef& def, const std::vector<LevelSpec>& specs,
             const TDMLOptions& opt = TDMLOptions())
      : def_(def), opt_(opt), hierarchy_(specs) {
    const int m = hierarchy_.n_levels();
    for (int l = 1; l < m; ++l)
      if (specs[l].mode_count <= specs[l - 1].mode_count)
        throw std::invalid_argument("TDMLSolver: mode counts must strictly increase");
    for (int l = 0; l < m; ++l) {
      const LevelSpec& spec = hierarchy_.level(l).spec;
      auto lev = std::make_unique<Level>();
      lev->spec = spec;
      lev->mesh = hierarchy_.level(l).mesh;
      const int q = (opt.quad_order > 0) ? opt.quad_order : spec.hyper.p + 2;
      for (auto& ax : spec.make_axes()) {
        lev->axes_store.push_back(std::make_shared<AxisDisc>(ax, spec.hyper, q));
        lev->axes.push_back(lev->axes_store.back().get());
      }
      lev->solver = std::make_unique<TDSolver>(lev->axes, def.op, def.source, opt.inner);
      lev->natural = natural_faces_of_level(*lev);
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
        const int q = lev.spec.mode_count;
        if (opt_.corrections && l < m - 1 && levels_[l + 1]->sol.n_modes() > 0) {
          lev.solver->set_extra_load(-correction_load(l));
        } else {
          lev.solver->clear_extra_load();
        }
        lev.solver->set_constraints(
            detail::homogeneous_td_constraints(lev.axes, q, lev.natural));
        // boundary lifting: the first Q_{l-1} modes are the coarse modes
        // interpolated onto this level (frozen), the rest are solved with
        // zero boundary rows
        int frozen = 0;
        TDSolution init;
        if (l > 0) {
          const TDSolution& cs = levels_[l - 1]->sol;
          frozen = cs.n_modes();
          init.axes = lev.axes;
          for (int m2 = 0; m2 < frozen; ++m2) {
            std::vector<Eigen::VectorXd> mode;
            for (int d = 0; d < def_.dim; ++d) {
              const Axis& fa = lev.axes[d]->axis();
              Eigen::VectorXd f(fa.n_nodes());
              for (int i = 0; i < fa.n_nodes(); ++i)
                f(i) = cs.axes[d]->basis().interpolate(cs.modes[m2][d], fa.node(i));
              mode.push_back(std::move(f));
            }
            init.modes.push_back(std::move(mode));
          }
          // warm start the free modes from the previous sweep
          for (int m2 = frozen; m2 < lev.sol.n_modes(); ++m2)
            init.modes.push_back(lev.sol.modes[m2]);
        } else if (lev.sol.n_modes() > 0) {
          init = lev.sol;
        }
        TDReport inner;
        TDSolution fresh =
            lev.solver->solve(q, &inner, init.n_modes() > 0 ? &init : nullptr, frozen);
        Eigen::VectorXd nodal = fresh.expand();
        if (lev.nodal.size() == nodal.size()) {
          const double num = (nodal - lev.nodal).cwiseAbs().maxCoeff();
          const double den = nodal.cwiseAbs().maxCoeff() + 1e-14;
          change = std::max(change, num / den);
        } else {
          change = 1.0;
        }
        lev.sol = std::move(fresh);
        lev.nodal = std::move(nodal);
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

  double composite_eval(const std::array<double, kMaxDim>& x) const {
    int l = hierarchy_.finest_level_containing(x);
    if (l < 0) throw std::invalid_argument("composite_eval: point outside domain");
    return levels_[l]->sol.eval(x);
  }
  double composite_eval_grad(const std::array<double, kMaxDim>& x,
                             std::array<double, kMaxDim>& grad) const {
    int l = hierarchy_.finest_level_containing(x);
    if (l < 0) throw std::invalid_argument("composite_eval: point outside domain");
    return levels_[l]->sol.eval_grad(x, grad);
  }

  TDLevelState state(int l) const {
    TDLevelState st;
    st.level = l;
    st.mesh = levels_[l]->mesh;
    st.sol = levels_[l]->sol;
    st.sol.axes_store = levels_[l]->axes_store;
    return st;
  }
  const std::vector<const AxisDisc*>& axes(int l) const { return levels_[l]->axes; }
  const TDSolution& solution(int l) const { return levels_[l]->sol; }

  /// sum_l Q_l * sum_d n_d^(l)
  std::int64_t n_dofs() const {
    std::int64_t n = 0;
    for (const auto& lev : levels_) {
      std::int64_t per = 0;
      for (auto* a : lev->axes) per += a->n_nodes();
      n += per * lev->spec.mode_count;
    }
    return n;
  }
  std::int64_t storage_bytes() const {
    std::int64_t n = 0;
    for (const auto& lev : levels_) n += lev->sol.storage_bytes();
    return n;
  }

  ErrorNorms composite_error(const ManufacturedProblem& pb) const {
    double l2 = 0.0, h1 = 0.0;
    const int grad_axes = pb.spacetime ? def_.dim - 1 : def_.dim;
    for (int l = 0; l < n_levels(); ++l) {
      std::vector<Box> skip;
      if (l + 1 < n_levels()) skip.push_back(levels_[l + 1]->spec.domain);
      const TDSolution& sol = levels_[l]->sol;
      auto norms = error_norms(
          levels_[l]->axes,
          [&](const std::array<double, kMaxDim>& x, std::array<double, kMaxDim>& g) {
            return sol.eval_grad(x, g);
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
    TensorMesh mesh;
    std::vector<std::shared_ptr<AxisDisc>> axes_store;
    std::vector<const AxisDisc*> axes;
    std::unique_ptr<TDSolver> solver;
    std::vector<std::pair<int, int>> natural;  // faces without essential data
    TDSolution sol;
    Eigen::VectorXd nodal;  // expanded field, for the convergence metric
  };

  std::vector<std::pair<int, int>> natural_faces_of_level(const Level& lev) const {
    const Box& global = hierarchy_.level(0).spec.domain;
    std::vector<std::pair<int, int>> out;
    for (auto& [ax, side] : def_.natural_faces) {
      const double face = (side == 0) ? lev.mesh.axis(ax).lo : lev.mesh.axis(ax).hi;
      const double gface = (side == 0) ? global.lo[ax] : global.hi[ax];
      if (std::abs(face - gface) < 1e-9 * lev.mesh.axis(ax).h()) out.emplace_back(ax, side);
    }
    return out;
  }

  /// sum_{k>l} a(w_l, u_k - I^(l) u_k) over Omega_k \ Omega_{k+1}, with the
  /// TD fields expanded to nodal vectors on their grids.
  Eigen::VectorXd correction_load(int l) const {
    const Level& lev = *levels_[l];
    Eigen::VectorXd corr = Eigen::VectorXd::Zero(lev.mesh.n_nodes());
    for (int k = l + 1; k < n_levels(); ++k) {
      const Level& fin = *levels_[k];
      if (fin.sol.n_modes() == 0) continue;
      const Box* box_next = (k + 1 < n_levels()) ? &levels_[k + 1]->spec.domain : nullptr;
      TensorField uk{fin.axes, fin.sol.expand()};
      TensorField proj{lev.axes, virtual_nodal(l, k)};
      corr += assemble_correction_load(lev.axes, def_.op, fin.axes, uk, proj, box_next);
    }
    return corr;
  }

  Eigen::VectorXd virtual_nodal(int l, int k) const {
    const Level& lev = *levels_[l];
    const Box& box_k = levels_[k]->spec.domain;
    Eigen::VectorXd c(lev.mesh.n_nodes());
    for (std::int64_t i = 0; i < lev.mesh.n_nodes(); ++i) {
      auto x = lev.mesh.node_coord(i);
      if (box_k.contains_point(x, 1e-12)) {
        c(i) = levels_[k]->sol.eval(x);
      } else {
        int src = hierarchy_.finest_level_containing(x);
        if (src >= k) src = k - 1;
        while (src > 0 && !levels_[src]->spec.domain.contains_point(x, 1e-12)) --src;
        c(i) = (levels_[src]->sol.n_modes() > 0) ? levels_[src]->sol.eval(x) : 0.0;
      }
    }
    return c;
  }

  ProblemDef def_;
  TDMLOptions opt_;
  MultilevelMesh hierarchy_;
  std::vector<std::unique_ptr<Level>> levels_;
};

}  // namespace mlvms
