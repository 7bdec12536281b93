#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include <Eigen/Sparse>

#include "common.hpp"
#include "dielectric.hpp"
#include "grid.hpp"
#include "topology.hpp"

namespace capmat {

/// 8x8 Q1 stiffness of one cubic cell for a constant tensor (without eps0).
/// Local vertex bits: bit0 = x, bit1 = y, bit2 = z.
using ElementMatrix = std::array<double, 64>;

/// Exact integral of grad(phi_v) . E grad(phi_w) over a cube of edge h.
inline ElementMatrix element_matrix(const Tensor3& E, double h) {
  // 1-D factors on [0, h] with t = x/h; f0 = 1 - t, f1 = t.
  auto mass = [&](int a, int b) { return a == b ? h / 3.0 : h / 6.0; };
  auto stiff = [&](int a, int b) { return (a == b ? 1.0 : -1.0) / h; };
  auto mixed = [](int a) { return a == 1 ? 0.5 : -0.5; };  // int f_a' f_b dx, independent of b
  ElementMatrix K{};
  for (int v = 0; v < 8; ++v)
    for (int w = 0; w < 8; ++w) {
      const int bv[3] = {v & 1, (v >> 1) & 1, (v >> 2) & 1};
      const int bw[3] = {w & 1, (w >> 1) & 1, (w >> 2) & 1};
      double sum = 0.0;
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
          if (E(a, b) == 0.0) continue;
          double term = 1.0;
          if (a == b) {
            for (int d = 0; d < 3; ++d) term *= d == a ? stiff(bv[d], bw[d]) : mass(bv[d], bw[d]);
          } else {
            for (int d = 0; d < 3; ++d) {
              if (d == a) term *= mixed(bv[d]);
              else if (d == b) term *= mixed(bw[d]);
              else term *= mass(bv[d], bw[d]);
            }
          }
          sum += E(a, b) * term;
        }
      K[v * 8 + w] = sum;
    }
  // Symmetrize bit-exactly and force exact zero row sums.
  for (int v = 0; v < 8; ++v)
    for (int w = v + 1; w < 8; ++w) K[w * 8 + v] = K[v * 8 + w];
  for (int v = 0; v < 8; ++v) {
    double off = 0.0;
    for (int w = 0; w < 8; ++w)
      if (w != v) off += K[v * 8 + w];
    K[v * 8 + v] = -off;
  }
  return K;
}

namespace vertex_tag {
inline constexpr std::int32_t free = -1;
inline constexpr std::int32_t outer = -2;     // grounded box, u = 0
inline constexpr std::int32_t interior = -3;  // inside a conductor, never coupled
}  // namespace vertex_tag

inline constexpr std::uint16_t kConductorMaterial = 0xFFFF;
inline constexpr std::int16_t kGeneralRow = -1;

/// Matrix-free stiffness operator of the anisotropic Laplacian on the voxel
/// grid. Rows of vertices whose 8 cells share one material use a 27-point
/// stencil; the rest gather element rows cell by cell.
class DiscreteOperator {
public:
  struct ComponentVertices {
    std::vector<std::int64_t> free;
    std::vector<std::int16_t> stencil;  // material id or kGeneralRow
    std::vector<double> diagonal;
    std::vector<int> surfaces;
    bool has_outer = false;  // touches grounded box vertices
  };

  std::array<int, 3> dims{};
  double h = 1.0;
  OuterBc outer_bc = OuterBc::grounded;
  std::vector<std::uint16_t> cell_material;
  std::vector<double> cell_scale;  // empty unless the field varies per cell
  std::vector<std::int32_t> cell_component;
  std::vector<ElementMatrix> materials;
  std::vector<std::array<double, 27>> stencils;
  std::vector<std::int32_t> vertex_tag;
  std::vector<std::vector<std::int64_t>> surface_vertices;
  std::vector<int> surface_component;
  std::vector<ComponentVertices> components;
  std::array<std::int64_t, 27> offsets{};

  std::int64_t vertex_count() const {
    return static_cast<std::int64_t>(dims[0] + 1) * (dims[1] + 1) * (dims[2] + 1);
  }
  std::int64_t cell_count() const { return static_cast<std::int64_t>(dims[0]) * dims[1] * dims[2]; }
  std::int64_t free_count() const {
    std::int64_t n = 0;
    for (const auto& c : components) n += static_cast<std::int64_t>(c.free.size());
    return n;
  }
  int surface_count() const { return static_cast<int>(surface_vertices.size()); }

  std::int64_t cell_index(int i, int j, int k) const {
    return i + static_cast<std::int64_t>(dims[0]) * (j + static_cast<std::int64_t>(dims[1]) * k);
  }
  std::int64_t vertex_index(int i, int j, int k) const {
    return i + static_cast<std::int64_t>(dims[0] + 1) * (j + static_cast<std::int64_t>(dims[1] + 1) * k);
  }
  std::array<int, 3> vertex_coords(std::int64_t v) const {
    const int i = static_cast<int>(v % (dims[0] + 1));
    const std::int64_t r = v / (dims[0] + 1);
    return {i, static_cast<int>(r % (dims[1] + 1)), static_cast<int>(r / (dims[1] + 1))};
  }
  std::array<int, 3> cell_coords(std::int64_t c) const {
    const int i = static_cast<int>(c % dims[0]);
    const std::int64_t r = c / dims[0];
    return {i, static_cast<int>(r % dims[1]), static_cast<int>(r / dims[1])};
  }
  /// Global vertex of local corner `l` of cell c.
  std::int64_t cell_vertex(std::int64_t c, int l) const {
    const auto [i, j, k] = cell_coords(c);
    return vertex_index(i + (l & 1), j + ((l >> 1) & 1), k + ((l >> 2) & 1));
  }
  bool is_domain_cell(std::int64_t c) const { return cell_material[c] != kConductorMaterial; }
  double scale(std::int64_t c) const { return cell_scale.empty() ? 1.0 : cell_scale[c]; }

  /// (K x)_v gathered from the incident domain cells.
  double row_general(std::int64_t v, const double* x) const {
    const auto [i, j, k] = vertex_coords(v);
    double sum = 0.0;
    for (int cz = 0; cz < 2; ++cz)
      for (int cy = 0; cy < 2; ++cy)
        for (int cx = 0; cx < 2; ++cx) {
          const int ci = i - 1 + cx, cj = j - 1 + cy, ck = k - 1 + cz;
          if (ci < 0 || cj < 0 || ck < 0 || ci >= dims[0] || cj >= dims[1] || ck >= dims[2]) continue;
          const std::int64_t c = cell_index(ci, cj, ck);
          if (!is_domain_cell(c)) continue;
          const int lv = (1 - cx) | ((1 - cy) << 1) | ((1 - cz) << 2);
          const double* K = materials[cell_material[c]].data() + lv * 8;
          const std::int64_t base = vertex_index(ci, cj, ck);
          double local = 0.0;
          for (int lw = 0; lw < 8; ++lw) local += K[lw] * x[base + offsets[13 + (lw & 1) + 3 * ((lw >> 1) & 1) + 9 * ((lw >> 2) & 1)]];
          sum += scale(c) * local;
        }
    return sum;
  }

  double row(std::int64_t v, std::int16_t stencil, const double* x) const {
    if (stencil == kGeneralRow) return row_general(v, x);
    const auto& s = stencils[stencil];
    const double* xv = x + v;
    double sum = 0.0;
    for (int d = 0; d < 27; ++d) sum += s[d] * xv[offsets[d]];
    return sum;
  }

  double diagonal_general(std::int64_t v) const {
    const auto [i, j, k] = vertex_coords(v);
    double sum = 0.0;
    for (int cz = 0; cz < 2; ++cz)
      for (int cy = 0; cy < 2; ++cy)
        for (int cx = 0; cx < 2; ++cx) {
          const int ci = i - 1 + cx, cj = j - 1 + cy, ck = k - 1 + cz;
          if (ci < 0 || cj < 0 || ck < 0 || ci >= dims[0] || cj >= dims[1] || ck >= dims[2]) continue;
          const std::int64_t c = cell_index(ci, cj, ck);
          if (!is_domain_cell(c)) continue;
          const int lv = (1 - cx) | ((1 - cy) << 1) | ((1 - cz) << 2);
          sum += scale(c) * materials[cell_material[c]][lv * 9];
        }
    return sum;
  }
};

namespace detail {

inline std::array<double, 27> stencil_of(const ElementMatrix& K) {
  std::array<double, 27> s{};
  for (int cz = 0; cz < 2; ++cz)
    for (int cy = 0; cy < 2; ++cy)
      for (int cx = 0; cx < 2; ++cx) {
        const int lv = (1 - cx) | ((1 - cy) << 1) | ((1 - cz) << 2);
        for (int lw = 0; lw < 8; ++lw) {
          const int dx = cx - 1 + (lw & 1), dy = cy - 1 + ((lw >> 1) & 1), dz = cz - 1 + ((lw >> 2) & 1);
          s[(dx + 1) + 3 * (dy + 1) + 9 * (dz + 1)] += K[lv * 8 + lw];
        }
      }
  return s;
}

}  // namespace detail

/// Builds the operator: per-cell materials from one tensor sample at each
/// cell center, vertex tags from the topology's surfaces, and per-component
/// free-vertex lists.
inline DiscreteOperator assemble(const LabeledGrid& grid, const PermittivityField& field, const Topology& t) {
  DiscreteOperator op;
  op.dims = grid.dims();
  op.h = grid.h();
  op.outer_bc = grid.outer_bc();
  const std::int64_t nc = grid.cell_count();
  const std::int64_t nv = grid.vertex_count();
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx)
        op.offsets[(dx + 1) + 3 * (dy + 1) + 9 * (dz + 1)] =
            dx + static_cast<std::int64_t>(op.dims[0] + 1) * (dy + static_cast<std::int64_t>(op.dims[1] + 1) * dz);

  // Materials.
  op.cell_material.assign(static_cast<std::size_t>(nc), kConductorMaterial);
  op.cell_component = t.cell_component;
  const bool per_cell_scalar = field.kind() == DielectricKind::isotropic_function;
  if (per_cell_scalar) {
    op.materials.push_back(element_matrix(Tensor3::Identity(), op.h));
    op.cell_scale.assign(static_cast<std::size_t>(nc), 0.0);
    for (std::int64_t c = 0; c < nc; ++c) {
      if (!grid.is_domain(c)) continue;
      op.cell_material[c] = 0;
      op.cell_scale[c] = field.at(grid.cell_center(c))(0, 0);
    }
  } else {
    std::map<std::array<double, 9>, std::uint16_t> index;
    for (std::int64_t c = 0; c < nc; ++c) {
      if (!grid.is_domain(c)) continue;
      const Tensor3 E = field.at(grid.cell_center(c));
      std::array<double, 9> key{};
      for (int a = 0; a < 9; ++a) key[a] = E.data()[a];
      auto [it, inserted] = index.try_emplace(key, static_cast<std::uint16_t>(op.materials.size()));
      if (inserted) {
        if (op.materials.size() >= kConductorMaterial - 1)
          throw input_error("TooManyMaterials", "dielectric has too many distinct cell tensors");
        op.materials.push_back(element_matrix(E, op.h));
      }
      op.cell_material[c] = it->second;
    }
  }
  for (const auto& K : op.materials) op.stencils.push_back(detail::stencil_of(K));

  // Vertex tags.
  op.vertex_tag.assign(static_cast<std::size_t>(nv), vertex_tag::free);
  for (std::int64_t c = 0; c < nc; ++c)
    if (!grid.is_domain(c))
      for (int l = 0; l < 8; ++l) op.vertex_tag[op.cell_vertex(c, l)] = vertex_tag::interior;
  op.surface_vertices.resize(t.surfaces.size());
  op.surface_component.resize(t.surfaces.size());
  for (const auto& s : t.surfaces) {
    op.surface_component[s.id] = s.component;
    for (std::int64_t f : s.faces) {
      const int axis = static_cast<int>(f % 3);
      auto ijk = grid.cell_coords(f / 3);
      ijk[axis] += 1;
      const int b = (axis + 1) % 3, d = (axis + 2) % 3;
      for (int q = 0; q < 4; ++q) {
        auto v = ijk;
        v[b] += q & 1;
        v[d] += q >> 1;
        const std::int64_t vi = op.vertex_index(v[0], v[1], v[2]);
        std::int32_t& tag = op.vertex_tag[vi];
        if (tag >= 0 && tag != s.id)
          throw internal_error("VertexOnTwoSurfaces", "vertex shared by surfaces " + std::to_string(tag) + " and " +
                                                          std::to_string(s.id));
        if (tag != s.id) {
          tag = s.id;
          op.surface_vertices[s.id].push_back(vi);
        }
      }
    }
    std::sort(op.surface_vertices[s.id].begin(), op.surface_vertices[s.id].end());
  }
  const bool grounded = grid.outer_bc() == OuterBc::grounded;
  op.components.resize(t.components.size());
  for (const auto& comp : t.components) op.components[comp.id].surfaces = comp.surfaces;
  for (std::int64_t v = 0; v < nv; ++v) {
    if (op.vertex_tag[v] != vertex_tag::free) continue;
    const auto [i, j, k] = op.vertex_coords(v);
    const bool on_box = i == 0 || j == 0 || k == 0 || i == op.dims[0] || j == op.dims[1] || k == op.dims[2];
    // Any incident cell names the component; all are dielectric here.
    const std::int64_t c = op.cell_index(std::min(i, op.dims[0] - 1), std::min(j, op.dims[1] - 1),
                                         std::min(k, op.dims[2] - 1));
    auto& comp = op.components[t.cell_component[c]];
    if (on_box && grounded) {
      op.vertex_tag[v] = vertex_tag::outer;
      comp.has_outer = true;
      continue;
    }
    std::int16_t stencil = kGeneralRow;
    if (!on_box) {
      const std::uint16_t m = op.cell_material[c];
      bool uniform = true;
      for (int q = 0; q < 8 && uniform; ++q) {
        const std::int64_t cq = op.cell_index(i - 1 + (q & 1), j - 1 + ((q >> 1) & 1), k - 1 + ((q >> 2) & 1));
        uniform = op.cell_material[cq] == m && (op.cell_scale.empty() || op.cell_scale[cq] == op.cell_scale[c]);
      }
      if (uniform && op.cell_scale.empty()) stencil = static_cast<std::int16_t>(m);
    }
    comp.free.push_back(v);
    comp.stencil.push_back(stencil);
    comp.diagonal.push_back(stencil == kGeneralRow ? op.diagonal_general(v) : op.stencils[stencil][13]);
  }
  return op;
}

/// Full vertex-by-vertex stiffness (without eps0), for small grids and tests.
inline Eigen::SparseMatrix<double> assemble_sparse(const DiscreteOperator& op) {
  std::vector<Eigen::Triplet<double>> trips;
  for (std::int64_t c = 0; c < op.cell_count(); ++c) {
    if (!op.is_domain_cell(c)) continue;
    const auto& K = op.materials[op.cell_material[c]];
    for (int v = 0; v < 8; ++v)
      for (int w = 0; w < 8; ++w)
        trips.emplace_back(static_cast<int>(op.cell_vertex(c, v)), static_cast<int>(op.cell_vertex(c, w)),
                           op.scale(c) * K[v * 8 + w]);
  }
  const int n = static_cast<int>(op.vertex_count());
  Eigen::SparseMatrix<double> A(n, n);
  A.setFromTriplets(trips.begin(), trips.end());
  return A;
}

struct PotentialField {
  std::vector<double> values;  // per vertex, volts; 0 at conductor-interior vertices
  int bc_tag = -1;             // surface index for auxiliary fields, -1 otherwise
  double residual_norm = 0.0;  // worst relative residual over solved components
  int iterations = 0;
};

struct SolveOptions {
  double tol = 1e-10;
  std::optional<int> max_iterations;
  /// Optional initial guess (full vertex vector); Dirichlet entries are ignored.
  const std::vector<double>* initial = nullptr;
};

struct ComponentSolveStats {
  double residual = 0.0;
  int iterations = 0;
};

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace detail

/// Jacobi-preconditioned CG for the free vertices of one component. `x` is a
/// full vertex vector holding the Dirichlet data; its free entries are the
/// initial guess on entry and the solution on exit.
inline ComponentSolveStats solve_component(const DiscreteOperator& op, int component, std::vector<double>& x,
                                           const SolveOptions& opt) {
  const auto& cv = op.components[component];
  const std::size_t n = cv.free.size();
  ComponentSolveStats stats;
  if (n == 0) return stats;
  if (!(opt.tol > 0.0 && opt.tol <= 1e-4)) throw input_error("InvalidTolerance", "tol must lie in (0, 1e-4]");

  // b = -K_fd x_d, measured with the free entries zeroed.
  std::vector<double> guess(n);
  for (std::size_t k = 0; k < n; ++k) {
    guess[k] = x[cv.free[k]];
    x[cv.free[k]] = 0.0;
  }
  double bnorm = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double b = op.row(cv.free[k], cv.stencil[k], x.data());
    bnorm += b * b;
  }
  bnorm = std::sqrt(bnorm);
  if (bnorm == 0.0) return stats;  // homogeneous data: x = 0 on the free set
  for (std::size_t k = 0; k < n; ++k) x[cv.free[k]] = guess[k];

  const int max_it = opt.max_iterations.value_or(static_cast<int>(20.0 * std::sqrt(static_cast<double>(n))) + 1000);
  std::vector<double> r(n), z(n), q(n);
  std::vector<double> p(x.size(), 0.0);  // full-size so rows can read neighbours; Dirichlet entries stay 0
  auto true_residual = [&]() {
    double rr = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      r[k] = -op.row(cv.free[k], cv.stencil[k], x.data());
      rr += r[k] * r[k];
    }
    return std::sqrt(rr);
  };
  double rnorm = true_residual();
  int it = 0;
  while (rnorm > opt.tol * bnorm) {
    // (Re)start from the current true residual.
    for (std::size_t k = 0; k < n; ++k) {
      z[k] = r[k] / cv.diagonal[k];
      p[cv.free[k]] = z[k];
    }
    double rz = detail::dot(r, z);
    bool converged = false;
    while (it < max_it) {
      ++it;
      for (std::size_t k = 0; k < n; ++k) q[k] = op.row(cv.free[k], cv.stencil[k], p.data());
      double pq = 0.0;
      for (std::size_t k = 0; k < n; ++k) pq += p[cv.free[k]] * q[k];
      if (!(pq > 0.0)) break;
      const double alpha = rz / pq;
      double rr = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        x[cv.free[k]] += alpha * p[cv.free[k]];
        r[k] -= alpha * q[k];
        rr += r[k] * r[k];
      }
      if (std::sqrt(rr) <= opt.tol * bnorm) {
        converged = true;
        break;
      }
      for (std::size_t k = 0; k < n; ++k) z[k] = r[k] / cv.diagonal[k];
      const double rz_new = detail::dot(r, z);
      const double beta = rz_new / rz;
      rz = rz_new;
      for (std::size_t k = 0; k < n; ++k) p[cv.free[k]] = z[k] + beta * p[cv.free[k]];
    }
    const double previous = rnorm;
    rnorm = true_residual();
    if (it >= max_it && rnorm > opt.tol * bnorm)
      throw solver_error("NoConvergence", "CG reached " + std::to_string(it) + " iterations at relative residual " +
                                              std::to_string(rnorm / bnorm));
    if (!converged && rnorm >= previous)
      throw solver_error("NoConvergence", "CG stagnated at relative residual " + std::to_string(rnorm / bnorm));
  }
  stats.residual = rnorm / bnorm;
  stats.iterations = it;
  return stats;
}

/// Solves every domain component with the given surface values (outer box 0).
/// A component whose Dirichlet data is a single constant gets that constant
/// exactly.
inline PotentialField solve_dirichlet(const DiscreteOperator& op, const std::vector<double>& boundary_values,
                                      const SolveOptions& opt = {}, std::optional<int> only_component = std::nullopt) {
  if (static_cast<int>(boundary_values.size()) != op.surface_count())
    throw input_error("LengthMismatch", "need one boundary value per surface");
  PotentialField field;
  field.values.assign(static_cast<std::size_t>(op.vertex_count()), 0.0);
  for (std::size_t c = 0; c < op.components.size(); ++c) {
    if (only_component && static_cast<int>(c) != *only_component) continue;
    const auto& cv = op.components[c];
    for (int s : cv.surfaces)
      for (std::int64_t v : op.surface_vertices[s]) field.values[v] = boundary_values[s];
    std::optional<double> constant;
    bool uniform = true;
    if (cv.has_outer) constant = 0.0;
    for (int s : cv.surfaces) {
      if (!constant) constant = boundary_values[s];
      else if (*constant != boundary_values[s]) uniform = false;
    }
    if (uniform && constant) {
      for (std::int64_t v : cv.free) field.values[v] = *constant;
      continue;
    }
    if (opt.initial)
      for (std::int64_t v : cv.free) field.values[v] = (*opt.initial)[v];
    const auto stats = solve_component(op, static_cast<int>(c), field.values, opt);
    field.residual_norm = std::max(field.residual_norm, stats.residual);
    field.iterations = std::max(field.iterations, stats.iterations);
  }
  return field;
}

/// Worker count: CAPMAT_THREADS if set, else min(jobs, hardware threads).
inline int parallel_jobs(int jobs) {
  if (const char* env = std::getenv("CAPMAT_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return std::min(n, std::max(jobs, 1));
  }
  const int hw = std::max(1u, std::thread::hardware_concurrency());
  return std::max(1, std::min(jobs, hw));
}

/// Runs fn(i) for i in [0, count) on up to `workers` threads; rethrows the
/// first failure.
template <class Fn>
void parallel_for(int count, int workers, Fn fn) {
  if (workers <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

/// u_i: 1 on S_i, 0 on every other surface and the grounded box; solved only
/// on the component owning S_i and zero elsewhere.
inline std::vector<PotentialField> auxiliary_potentials(const DiscreteOperator& op, const Topology& t,
                                                        const SolveOptions& opt = {}, int jobs = 0) {
  const int n = t.N;
  std::vector<PotentialField> out(n);
  parallel_for(n, jobs > 0 ? jobs : parallel_jobs(n), [&](int i) {
    std::vector<double> bv(n, 0.0);
    bv[i] = 1.0;
    out[i] = solve_dirichlet(op, bv, opt, t.surfaces[i].component);
    out[i].bc_tag = i;
  });
  return out;
}

/// Phi = phi_inf + sum_i (phi_i - phi_inf) u_i, vertexwise.
inline PotentialField superpose(const std::vector<PotentialField>& potentials, const std::vector<double>& phi,
                                double phi_inf) {
  if (potentials.size() != phi.size()) throw input_error("LengthMismatch", "need one potential per auxiliary field");
  PotentialField out;
  if (potentials.empty()) return out;
  out.values.assign(potentials.front().values.size(), phi_inf);
  for (std::size_t i = 0; i < potentials.size(); ++i) {
    const double w = phi[i] - phi_inf;
    if (w == 0.0) continue;
    const auto& u = potentials[i].values;
    for (std::size_t v = 0; v < u.size(); ++v) out.values[v] += w * u[v];
    out.residual_norm = std::max(out.residual_norm, potentials[i].residual_norm);
  }
  return out;
}

/// Nodal reaction charge on surface s: eps0 * sum over its vertices of (K u).
inline double surface_charge(const PotentialField& potential, const DiscreteOperator& op, int surface) {
  if (surface < 0 || surface >= op.surface_count()) throw input_error("UnknownSurface", "no surface " + std::to_string(surface));
  long double q = 0.0L;
  for (std::int64_t v : op.surface_vertices[surface]) q += op.row_general(v, potential.values.data());
  return kEpsilon0 * static_cast<double>(q);
}

/// Independent O(h) estimator: flux of -E grad(u) through each face of the
/// surface, with the gradient taken at the adjacent dielectric cell center.
inline double raw_flux_charge(const PotentialField& potential, const DiscreteOperator& op, const Topology& t,
                              const PermittivityField& field, const Vec3& origin, int surface) {
  const auto& s = t.surfaces.at(surface);
  const double h = op.h;
  long double q = 0.0L;
  for (std::int64_t f : s.faces) {
    const int axis = static_cast<int>(f % 3);
    const std::int64_t c0 = f / 3;
    auto ijk = op.cell_coords(c0);
    ijk[axis] += 1;
    const std::int64_t c1 = op.cell_index(ijk[0], ijk[1], ijk[2]);
    const bool dom0 = op.is_domain_cell(c0);
    const std::int64_t dc = dom0 ? c0 : c1;
    // Outward normal of the conductor points into the dielectric cell.
    const double nsign = dom0 ? -1.0 : 1.0;
    double u[8];
    for (int l = 0; l < 8; ++l) u[l] = potential.values[op.cell_vertex(dc, l)];
    Eigen::Vector3d grad;
    for (int a = 0; a < 3; ++a) {
      double g = 0.0;
      for (int l = 0; l < 8; ++l) g += ((l >> a) & 1 ? 1.0 : -1.0) * u[l];
      grad[a] = g / (4.0 * h);
    }
    const auto cc = op.cell_coords(dc);
    const Vec3 center{origin.x + (cc[0] + 0.5) * h, origin.y + (cc[1] + 0.5) * h, origin.z + (cc[2] + 0.5) * h};
    const Eigen::Vector3d D = -(field.at(center) * grad);
    q += nsign * D[axis] * h * h;
  }
  return kEpsilon0 * static_cast<double>(q);
}

/// Bilinear energy form u^T K w over the cells of one component (without
/// eps0), summed as -K_vw (u_v - u_w)(w_v - w_w) over element edges. The
/// result is symmetric in (u, w) bit for bit and vanishes for constants.
inline double energy_form(const DiscreteOperator& op, int component, const std::vector<double>& u,
                          const std::vector<double>& w) {
  struct Pair {
    int v, w;
    double k;
  };
  std::vector<std::vector<Pair>> pairs(op.materials.size());
  for (std::size_t m = 0; m < op.materials.size(); ++m)
    for (int a = 0; a < 8; ++a)
      for (int b = a + 1; b < 8; ++b)
        if (op.materials[m][a * 8 + b] != 0.0) pairs[m].push_back({a, b, -op.materials[m][a * 8 + b]});
  long double total = 0.0L;
  for (std::int64_t c = 0; c < op.cell_count(); ++c) {
    if (op.cell_component[c] != component) continue;
    std::int64_t vid[8];
    for (int l = 0; l < 8; ++l) vid[l] = op.cell_vertex(c, l);
    double cell = 0.0;
    for (const auto& p : pairs[op.cell_material[c]])
      cell += p.k * ((u[vid[p.v]] - u[vid[p.w]]) * (w[vid[p.v]] - w[vid[p.w]]));
    total += op.scale(c) * cell;
  }
  return static_cast<double>(total);
}

}  // namespace capmat
