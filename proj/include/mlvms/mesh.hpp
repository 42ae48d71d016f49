#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mlvms {

constexpr int kMaxDim = 4;

/// Basis controls for one refinement level: dilation a, patch size s (element
/// layers), reproducing order p. s == 0 degenerates to plain linear FE.
struct HyperParams {
  double a = 3.0;
  int s = 3;
  int p = 3;

  void validate() const {
    if (a <= 0.0) throw std::invalid_argument("HyperParams: dilation a must be positive");
    if (p < 1) throw std::invalid_argument("HyperParams: reproducing order p must be >= 1");
    if (s < 0) throw std::invalid_argument("HyperParams: patch size s must be >= 0");
    if (s > 0 && 2 * s < p) throw std::invalid_argument("HyperParams: need s >= p/2");
    if (s == 0 && p != 1) throw std::invalid_argument("HyperParams: s = 0 requires p = 1");
  }
};

/// One uniform 1D axis of a tensor-product mesh.
struct Axis {
  double lo = 0.0;
  double hi = 1.0;
  int n_elem = 1;

  Axis() = default;
  Axis(double lo_, double hi_, int n_elem_) : lo(lo_), hi(hi_), n_elem(n_elem_) {
    if (n_elem <= 0) throw std::invalid_argument("Axis: n_elem must be positive");
    if (!(hi > lo)) throw std::invalid_argument("Axis: requires hi > lo");
  }

  double h() const { return (hi - lo) / n_elem; }
  int n_nodes() const { return n_elem + 1; }
  double node(int i) const { return lo + i * h(); }

  std::vector<double> node_coords() const {
    std::vector<double> x(n_nodes());
    for (int i = 0; i < n_nodes(); ++i) x[i] = node(i);
    return x;
  }
};

/// Tensor-product structured mesh over 1-4 axes. Nodes and elements are
/// indexed lexicographically (axis 0 fastest).
class TensorMesh {
 public:
  TensorMesh() = default;
  explicit TensorMesh(std::vector<Axis> axes) : axes_(std::move(axes)) {
    if (axes_.empty() || axes_.size() > kMaxDim)
      throw std::invalid_argument("TensorMesh: 1-4 axes required");
  }

  int dim() const { return static_cast<int>(axes_.size()); }
  const Axis& axis(int d) const { return axes_.at(d); }
  const std::vector<Axis>& axes() const { return axes_; }

  std::int64_t n_nodes() const {
    std::int64_t n = 1;
    for (const auto& a : axes_) n *= a.n_nodes();
    return n;
  }
  std::int64_t n_elements() const {
    std::int64_t n = 1;
    for (const auto& a : axes_) n *= a.n_elem;
    return n;
  }

  std::int64_t node_index(const std::array<int, kMaxDim>& idx) const {
    std::int64_t id = 0;
    for (int d = dim() - 1; d >= 0; --d) id = id * axes_[d].n_nodes() + idx[d];
    return id;
  }
  std::array<int, kMaxDim> node_multi_index(std::int64_t id) const {
    std::array<int, kMaxDim> idx{};
    for (int d = 0; d < dim(); ++d) {
      idx[d] = static_cast<int>(id % axes_[d].n_nodes());
      id /= axes_[d].n_nodes();
    }
    return idx;
  }
  std::int64_t element_index(const std::array<int, kMaxDim>& idx) const {
    std::int64_t id = 0;
    for (int d = dim() - 1; d >= 0; --d) id = id * axes_[d].n_elem + idx[d];
    return id;
  }
  std::array<int, kMaxDim> element_multi_index(std::int64_t id) const {
    std::array<int, kMaxDim> idx{};
    for (int d = 0; d < dim(); ++d) {
      idx[d] = static_cast<int>(id % axes_[d].n_elem);
      id /= axes_[d].n_elem;
    }
    return idx;
  }

  std::array<double, kMaxDim> node_coord(std::int64_t id) const {
    auto mi = node_multi_index(id);
    std::array<double, kMaxDim> x{};
    for (int d = 0; d < dim(); ++d) x[d] = axes_[d].node(mi[d]);
    return x;
  }

  bool contains(const std::array<double, kMaxDim>& x, double tol = 0.0) const {
    for (int d = 0; d < dim(); ++d)
      if (x[d] < axes_[d].lo - tol || x[d] > axes_[d].hi + tol) return false;
    return true;
  }

  /// Element containing x; points on shared faces go to the lower element
  /// except at the upper domain boundary.
  std::array<int, kMaxDim> locate(const std::array<double, kMaxDim>& x) const {
    std::array<int, kMaxDim> e{};
    for (int d = 0; d < dim(); ++d) {
      const Axis& a = axes_[d];
      double t = (x[d] - a.lo) / a.h();
      int i = static_cast<int>(std::floor(t));
      e[d] = std::clamp(i, 0, a.n_elem - 1);
    }
    return e;
  }

  bool is_boundary_node(std::int64_t id) const {
    auto mi = node_multi_index(id);
    for (int d = 0; d < dim(); ++d)
      if (mi[d] == 0 || mi[d] == axes_[d].n_nodes() - 1) return true;
    return false;
  }

 private:
  std::vector<Axis> axes_;
};

inline TensorMesh build_tensor_mesh(std::vector<Axis> axes) { return TensorMesh(std::move(axes)); }

/// 1D patch node range for node i with s element layers, shifted inward at
/// boundaries so the 2s+1 nodes stay inside the axis.
inline std::pair<int, int> patch_range_1d(int n_nodes, int node, int s) {
  if (s == 0) return {node, node};
  if (n_nodes < 2 * s + 1)
    throw std::invalid_argument("patch_range_1d: mesh smaller than 2s+1 nodes");
  int start = std::clamp(node - s, 0, n_nodes - (2 * s + 1));
  return {start, start + 2 * s};
}

/// Nodal convolution patch: (2s+1)^d tensor block around `node`, shifted
/// inward near boundaries; lexicographic ordering.
inline std::vector<std::int64_t> nodal_patch(const TensorMesh& mesh, std::int64_t node, int s) {
  if (s < 1) throw std::invalid_argument("nodal_patch: s must be >= 1");
  auto mi = mesh.node_multi_index(node);
  std::array<std::pair<int, int>, kMaxDim> range{};
  for (int d = 0; d < mesh.dim(); ++d)
    range[d] = patch_range_1d(mesh.axis(d).n_nodes(), mi[d], s);

  std::vector<std::int64_t> out;
  std::int64_t count = 1;
  for (int d = 0; d < mesh.dim(); ++d) count *= (range[d].second - range[d].first + 1);
  out.reserve(count);
  std::array<int, kMaxDim> idx{};
  for (int d = 0; d < mesh.dim(); ++d) idx[d] = range[d].first;
  while (true) {
    out.push_back(mesh.node_index(idx));
    int d = 0;
    for (; d < mesh.dim(); ++d) {
      if (++idx[d] <= range[d].second) break;
      idx[d] = range[d].first;
    }
    if (d == mesh.dim()) break;
  }
  return out;
}

/// Axis-aligned box, per-dimension [lo, hi].
struct Box {
  std::array<double, kMaxDim> lo{};
  std::array<double, kMaxDim> hi{};
  int dim = 0;

  bool contains_point(const std::array<double, kMaxDim>& x, double tol = 0.0) const {
    for (int d = 0; d < dim; ++d)
      if (x[d] < lo[d] - tol || x[d] > hi[d] + tol) return false;
    return true;
  }
};

/// Description of one refinement level prior to mesh construction.
struct LevelSpec {
  Box domain;
  HyperParams hyper;
  std::array<double, kMaxDim> h{};  // element size per dimension
  int mode_count = 0;               // Q_l, TD runs only

  std::vector<Axis> make_axes() const {
    std::vector<Axis> axes;
    for (int d = 0; d < domain.dim; ++d) {
      double len = domain.hi[d] - domain.lo[d];
      int n = static_cast<int>(std::llround(len / h[d]));
      if (n <= 0 || std::abs(n * h[d] - len) > 1e-9 * h[d])
        throw std::invalid_argument("LevelSpec: box extent is not an integer multiple of h");
      axes.emplace_back(domain.lo[d], domain.hi[d], n);
    }
    return axes;
  }
};

/// Nested hierarchy of tensor meshes with per-pair integer element size
/// ratios and interface node sets.
class MultilevelMesh {
 public:
  struct Level {
    LevelSpec spec;
    TensorMesh mesh;
    std::vector<std::int64_t> interface_nodes;  // nodes on the level box boundary, l > 0
  };

  explicit MultilevelMesh(std::vector<LevelSpec> specs) {
    if (specs.empty()) throw std::invalid_argument("MultilevelMesh: needs at least one level");
    const int dim = specs.front().domain.dim;
    levels_.reserve(specs.size());
    for (std::size_t l = 0; l < specs.size(); ++l) {
      const LevelSpec& spec = specs[l];
      if (spec.domain.dim != dim)
        throw std::invalid_argument("MultilevelMesh: inconsistent dimensions across levels");
      spec.hyper.validate();
      Level lev{spec, TensorMesh(spec.make_axes()), {}};
      if (l > 0) {
        const LevelSpec& coarse = specs[l - 1];
        check_nesting(coarse, spec, static_cast<int>(l));
        ratios_.push_back(static_cast<int>(std::llround(coarse.h[0] / spec.h[0])));
        lev.interface_nodes = boundary_nodes(lev.mesh);
      }
      levels_.push_back(std::move(lev));
    }
  }

  int n_levels() const { return static_cast<int>(levels_.size()); }
  const Level& level(int l) const { return levels_.at(l); }
  int ratio(int l) const { return ratios_.at(l - 1); }  // h_{l-1} / h_l
  int dim() const { return levels_.front().mesh.dim(); }

  /// Finest level whose domain contains x.
  int finest_level_containing(const std::array<double, kMaxDim>& x) const {
    int best = -1;
    for (int l = 0; l < n_levels(); ++l) {
      double tol = 1e-12 * (levels_[l].spec.domain.hi[0] - levels_[l].spec.domain.lo[0]);
      if (levels_[l].spec.domain.contains_point(x, tol)) best = l;
    }
    return best;
  }

 private:
  static std::vector<std::int64_t> boundary_nodes(const TensorMesh& mesh) {
    std::vector<std::int64_t> out;
    for (std::int64_t i = 0; i < mesh.n_nodes(); ++i)
      if (mesh.is_boundary_node(i)) out.push_back(i);
    return out;
  }

  static void check_nesting(const LevelSpec& coarse, const LevelSpec& fine, int l) {
    for (int d = 0; d < coarse.domain.dim; ++d) {
      const double hc = coarse.h[d];
      const double tol = 1e-9 * hc;
      if (fine.domain.lo[d] < coarse.domain.lo[d] - tol ||
          fine.domain.hi[d] > coarse.domain.hi[d] + tol)
        throw std::invalid_argument("MultilevelMesh: level " + std::to_string(l + 1) +
                                    " box not nested in level " + std::to_string(l));
      // fine box edges must lie on coarse element edges
      for (double edge : {fine.domain.lo[d], fine.domain.hi[d]}) {
        double t = (edge - coarse.domain.lo[d]) / hc;
        if (std::abs(t - std::llround(t)) > 1e-9)
          throw std::invalid_argument("MultilevelMesh: level " + std::to_string(l + 1) +
                                      " boundary not aligned with coarse element edges");
      }
      // integer element size ratio, identical across dimensions
      double r = hc / fine.h[d];
      if (std::abs(r - std::llround(r)) > 1e-9 || std::llround(r) < 1)
        throw std::invalid_argument("MultilevelMesh: non-integer element size ratio at level " +
                                    std::to_string(l + 1));
      double r0 = coarse.h[0] / fine.h[0];
      if (std::llround(r) != std::llround(r0))
        throw std::invalid_argument("MultilevelMesh: element size ratio differs across axes");
    }
  }

  std::vector<Level> levels_;
  std::vector<int> ratios_;
};

inline MultilevelMesh build_hierarchy(std::vector<LevelSpec> specs) {
  return MultilevelMesh(std::move(specs));
}

}  // namespace mlvms
