#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "capmatrix.hpp"
#include "common.hpp"
#include "topology.hpp"

namespace capmat {

enum class ReducedKind { hat, tilde, check };

inline const char* to_string(ReducedKind k) {
  switch (k) {
    case ReducedKind::hat: return "hat";
    case ReducedKind::tilde: return "tilde";
    case ReducedKind::check: return "check";
  }
  return "unknown";
}

inline ReducedKind parse_reduced_kind(const std::string& s) {
  if (s == "hat") return ReducedKind::hat;
  if (s == "tilde") return ReducedKind::tilde;
  if (s == "check") return ReducedKind::check;
  throw input_error("InvalidKind", "reduction kind must be hat, tilde or check");
}

/// One of the three regularized matrices. Row r and column r both belong to
/// surface index[r]; `conductor[r]` owns that surface.
struct ReducedMatrix {
  ReducedKind kind = ReducedKind::hat;
  Eigen::MatrixXd R;
  std::vector<int> index;
  std::vector<int> conductor;
  std::vector<std::string> row_meaning;
  std::vector<std::string> col_meaning;
  double det_value = 0.0;
  UnitsMode units = UnitsMode::si;

  int size() const { return static_cast<int>(R.rows()); }
  /// Row position of conductor p, or -1.
  int row_of_conductor(int p) const {
    for (int r = 0; r < size(); ++r)
      if (conductor[r] == p) return r;
    return -1;
  }
};

namespace detail {

inline std::string surface_name(int s) { return "S" + std::to_string(s + 1); }
inline std::string conductor_name(int p) { return "K" + std::to_string(p); }

/// Surfaces kept by every reduction: all but the outermost (reference)
/// surface of each bounded component.
inline std::vector<int> kept_surfaces(const Topology& t) {
  std::vector<int> keep;
  for (const auto& s : t.surfaces) {
    const auto& comp = t.components.at(s.component);
    if (comp.bounded() && !comp.outermost)
      throw input_error("MissingOutermost", "bounded component " + std::to_string(comp.id) + " has no outermost surface");
    if (!s.outermost) keep.push_back(s.id);
  }
  return keep;
}

/// Name of the reference potential of a surface's component.
inline std::string reference_name(const Topology& t, int s) {
  const auto& comp = t.components.at(t.surfaces.at(s).component);
  if (comp.exterior) return "phi_inf";
  return "phi(" + surface_name(*comp.outermost) + ")";
}

/// Reference for the check convention: infinity, or the potential of the
/// outermost conductor when the whole system is enclosed.
inline std::string global_reference_name(const Topology& t, const CavityMap& c) {
  if (t.exterior_id) return "phi_inf";
  for (const auto& ci : c.conductors)
    if (!ci.outer_surface) return "phi(" + conductor_name(ci.id) + ")";
  return "phi_ref";
}

/// Row-combination matrix T (unit lower/upper triangular up to ordering,
/// det T = 1): row of o_p minus rows of the non-outermost surfaces of the
/// direct cavities of p.
inline Eigen::MatrixXd combination(const Topology& t, const CavityMap& c, const std::vector<int>& keep) {
  const int n = static_cast<int>(keep.size());
  std::vector<int> pos(t.N, -1);
  for (int r = 0; r < n; ++r) pos[keep[r]] = r;
  Eigen::MatrixXd T = Eigen::MatrixXd::Identity(n, n);
  for (int p : c.processing_order) {
    const auto& ci = c.conductor(p);
    if (!ci.outer_surface) continue;
    const int row = pos[*ci.outer_surface];
    for (int a : ci.cavities)
      for (int s : t.components.at(a).surfaces)
        if (pos[s] >= 0) T(row, pos[s]) -= 1.0;
  }
  return T;
}

inline double determinant(const Eigen::MatrixXd& A) {
  return A.size() ? Eigen::PartialPivLU<Eigen::MatrixXd>(A).determinant() : 1.0;
}

}  // namespace detail

/// Version 1: delete the row and column of each bounded component's
/// outermost surface.
inline ReducedMatrix reduce_hat(const CapacitanceMatrix& C, const Topology& t, const CavityMap& c) {
  (void)c;
  if (C.size() != t.N) throw input_error("LengthMismatch", "matrix size differs from the topology's N");
  ReducedMatrix r;
  r.kind = ReducedKind::hat;
  r.units = C.units;
  r.index = detail::kept_surfaces(t);
  const int n = static_cast<int>(r.index.size());
  r.R.resize(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) r.R(i, j) = C.C(r.index[i], r.index[j]);
  for (int s : r.index) {
    r.conductor.push_back(t.surfaces[s].conductor);
    r.row_meaning.push_back("Q(" + detail::surface_name(s) + ")");
    r.col_meaning.push_back("phi(" + detail::surface_name(s) + ") - " + detail::reference_name(t, s));
  }
  r.det_value = detail::determinant(r.R);
  return r;
}

/// Version 2: rows become total conductor charges. Each outer-surface row
/// subtracts the original rows of the inner surfaces of its direct cavities;
/// using the unmodified rows keeps nested cavities from being counted twice.
inline ReducedMatrix reduce_tilde(const CapacitanceMatrix& C, const Topology& t, const CavityMap& c) {
  ReducedMatrix r = reduce_hat(C, t, c);
  const Eigen::MatrixXd T = detail::combination(t, c, r.index);
  r.kind = ReducedKind::tilde;
  r.R = T * r.R;
  for (std::size_t k = 0; k < r.index.size(); ++k) r.row_meaning[k] = "Q(" + detail::conductor_name(r.conductor[k]) + ")";
  r.det_value = detail::determinant(r.R);
  return r;
}

/// Version 3: the same combination applied to columns, T C_hat T^T, acting on
/// conductor potentials relative to the global reference. Exactly symmetric.
inline ReducedMatrix reduce_check(const CapacitanceMatrix& C, const Topology& t, const CavityMap& c) {
  ReducedMatrix r = reduce_hat(C, t, c);
  const Eigen::MatrixXd T = detail::combination(t, c, r.index);
  r.kind = ReducedKind::check;
  const Eigen::MatrixXd full = T * r.R * T.transpose();
  const int n = r.size();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) r.R(i, j) = j >= i ? full(i, j) : full(j, i);
  const std::string ref = detail::global_reference_name(t, c);
  for (int k = 0; k < n; ++k) {
    r.row_meaning[k] = "Q(" + detail::conductor_name(r.conductor[k]) + ")";
    r.col_meaning[k] = "phi(" + detail::conductor_name(r.conductor[k]) + ") - " + ref;
  }
  r.det_value = detail::determinant(r.R);
  return r;
}

inline ReducedMatrix reduce(ReducedKind kind, const CapacitanceMatrix& C, const Topology& t, const CavityMap& c) {
  switch (kind) {
    case ReducedKind::hat: return reduce_hat(C, t, c);
    case ReducedKind::tilde: return reduce_tilde(C, t, c);
    case ReducedKind::check: return reduce_check(C, t, c);
  }
  throw input_error("InvalidKind", "unknown reduction kind");
}

inline Eigen::VectorXd charges_from_potentials(const ReducedMatrix& R, const Eigen::VectorXd& phi) {
  if (phi.size() != R.size()) throw input_error("DimensionMismatch", "potential vector length differs from the matrix");
  return R.R * phi;
}

inline Eigen::VectorXd potentials_from_charges(const ReducedMatrix& R, const Eigen::VectorXd& q) {
  if (q.size() != R.size()) throw input_error("DimensionMismatch", "charge vector length differs from the matrix");
  if (R.size() == 0) return Eigen::VectorXd();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(R.R);
  if (!lu.isInvertible()) throw solver_error("SingularMatrix", "reduced matrix is singular");
  return lu.solve(q);
}

/// Charge on the outermost surface of a bounded component.
inline double bounding_charge(const std::vector<double>& inner) {
  return -std::accumulate(inner.begin(), inner.end(), 0.0);
}

inline nlohmann::json reduced_json(const ReducedMatrix& r) {
  return {{"kind", to_string(r.kind)},
          {"units", unit_symbol(r.units)},
          {"surfaces", r.index},
          {"conductors", r.conductor},
          {"row_meaning", r.row_meaning},
          {"col_meaning", r.col_meaning},
          {"det", r.det_value},
          {"R", matrix_json(r.R)}};
}

}  // namespace capmat
