#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "common.hpp"
#include "solver.hpp"
#include "topology.hpp"

namespace capmat {

enum class MatrixForm { flux, energy, analytic };

inline const char* to_string(MatrixForm f) {
  switch (f) {
    case MatrixForm::flux: return "flux";
    case MatrixForm::energy: return "energy";
    case MatrixForm::analytic: return "analytic";
  }
  return "unknown";
}

struct Block {
  int component = 0;
  bool bounded = true;
  std::vector<int> surfaces;  // indices into the matrix
};

struct CapacitanceMatrix {
  Eigen::MatrixXd C;
  std::vector<int> surfaces;
  MatrixForm form = MatrixForm::energy;
  UnitsMode units = UnitsMode::si;
  std::vector<Block> blocks;

  int size() const { return static_cast<int>(C.rows()); }
  double max_abs() const { return C.size() ? C.cwiseAbs().maxCoeff() : 0.0; }

  /// Same matrix expressed in other units.
  CapacitanceMatrix in_units(UnitsMode target) const {
    CapacitanceMatrix out = *this;
    out.C *= unit_scale(target) / unit_scale(units);
    out.units = target;
    return out;
  }

  Eigen::MatrixXd block(const Block& b) const {
    const int n = static_cast<int>(b.surfaces.size());
    Eigen::MatrixXd A(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) A(r, c) = C(b.surfaces[r], b.surfaces[c]);
    return A;
  }
};

inline std::vector<Block> block_partition(const Topology& t) {
  std::vector<Block> blocks;
  for (const auto& comp : t.components) {
    if (comp.surfaces.empty()) continue;
    blocks.push_back({comp.id, comp.bounded(), comp.surfaces});
  }
  return blocks;
}

/// C_ij = reaction charge of u_j on S_i (Q for unit potential on S_j).
inline CapacitanceMatrix assemble_flux(const std::vector<PotentialField>& potentials, const DiscreteOperator& op,
                                       const Topology& t) {
  const int n = t.N;
  if (static_cast<int>(potentials.size()) != n) throw input_error("LengthMismatch", "need N auxiliary potentials");
  CapacitanceMatrix m;
  m.form = MatrixForm::flux;
  m.C = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) m.surfaces.push_back(i);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      if (t.surfaces[i].component == t.surfaces[j].component) m.C(i, j) = surface_charge(potentials[j], op, i);
  m.blocks = block_partition(t);
  return m;
}

/// C_ij = eps0 u_i^T K u_j; computed once per unordered pair and mirrored.
inline CapacitanceMatrix assemble_energy(const std::vector<PotentialField>& potentials, const DiscreteOperator& op,
                                         const Topology& t) {
  const int n = t.N;
  if (static_cast<int>(potentials.size()) != n) throw input_error("LengthMismatch", "need N auxiliary potentials");
  CapacitanceMatrix m;
  m.form = MatrixForm::energy;
  m.C = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) m.surfaces.push_back(i);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      const int comp = t.surfaces[i].component;
      if (comp != t.surfaces[j].component) continue;
      const double v = kEpsilon0 * energy_form(op, comp, potentials[i].values, potentials[j].values);
      m.C(i, j) = v;
      m.C(j, i) = v;
    }
  m.blocks = block_partition(t);
  return m;
}

/// Tolerances are relative to max|C| (or its square for the pairwise test).
struct PropertyTolerances {
  double exact = 1e-8;          // identities exact in exact arithmetic
  double symmetry = 1e-12;      // energy-form symmetry
  double sign = 1e-12;          // off-diagonal sign slack
  double exterior_delta = 1e-6; // strict Delta_k > 0 on the exterior
  double pairwise = 1e-10;      // C_ii C_jj - C_ij^2 >= -tol max|C|^2
  double nonzero_floor = 1e-6;  // strict nonzero entries (advisory)
};

struct PropertyCheck {
  std::string name;
  bool passed = true;
  bool advisory = false;
  double value = 0.0;
  std::string detail;
};

struct PropertyReport {
  std::vector<double> delta;
  std::vector<int> delta_zero_surfaces;
  double pairwise_inequality = std::numeric_limits<double>::infinity();
  std::vector<double> kernel_residual;  // per bounded block
  std::vector<double> strict_nonzero;   // per multi-surface block, min |entry|
  double symmetry_error = 0.0;
  double scale = 0.0;
  std::vector<PropertyCheck> checks;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed || c.advisory; });
  }
  const PropertyCheck* find(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }
};

/// Structural checks: block pattern, symmetry, signs, row-sum defects,
/// pairwise inequality, kernel of bounded blocks, strict nonzeroness and
/// regularity of the exterior block. `analytic` enables the strict-nonzero
/// check (advisory either way).
inline PropertyReport check_properties(const CapacitanceMatrix& m, const Topology& t,
                                       const PropertyTolerances& tol = {}, bool analytic = true) {
  PropertyReport r;
  const int n = m.size();
  const Eigen::MatrixXd& C = m.C;
  const double scale = m.max_abs();
  r.scale = scale;
  auto add = [&](std::string name, bool ok, double value, std::string detail = {}, bool advisory = false) {
    r.checks.push_back({std::move(name), ok, advisory, value, std::move(detail)});
  };

  double cross = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (t.surfaces[i].component != t.surfaces[j].component) cross = std::max(cross, std::abs(C(i, j)));
  add("block_structure", cross == 0.0, cross, "entries between different components are exactly zero");

  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) r.symmetry_error = std::max(r.symmetry_error, std::abs(C(i, j) - C(j, i)));
  add("symmetry", r.symmetry_error <= tol.symmetry * scale, r.symmetry_error);

  double worst_diag = 0.0, worst_off = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    worst_diag = std::min(worst_diag, C(i, i));
    for (int j = 0; j < n; ++j)
      if (i != j) worst_off = std::max(worst_off, C(i, j));
  }
  add("diagonal_nonnegative", worst_diag >= 0.0, worst_diag);
  if (n > 1) add("offdiagonal_nonpositive", worst_off <= tol.sign * scale, worst_off);

  r.delta.resize(n);
  for (int k = 0; k < n; ++k) {
    double s = C(k, k);
    for (int l = 0; l < n; ++l)
      if (l != k) s -= std::abs(C(k, l));
    r.delta[k] = s;
  }
  double min_delta = std::numeric_limits<double>::infinity(), bounded_delta = 0.0;
  double exterior_delta = std::numeric_limits<double>::infinity();
  for (int k = 0; k < n; ++k) {
    min_delta = std::min(min_delta, r.delta[k]);
    const bool bounded = t.components[t.surfaces[k].component].bounded();
    if (bounded) {
      bounded_delta = std::max(bounded_delta, std::abs(r.delta[k]));
      if (std::abs(r.delta[k]) <= tol.exact * scale) r.delta_zero_surfaces.push_back(k);
    } else {
      exterior_delta = std::min(exterior_delta, r.delta[k]);
    }
  }
  if (n) add("delta_nonnegative", min_delta >= -tol.exact * scale, min_delta);
  add("bounded_delta_zero", bounded_delta <= tol.exact * scale, bounded_delta);
  if (std::isfinite(exterior_delta))
    add("exterior_delta_positive", exterior_delta >= tol.exterior_delta * scale, exterior_delta);

  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) r.pairwise_inequality = std::min(r.pairwise_inequality, C(i, i) * C(j, j) - C(i, j) * C(i, j));
  if (n > 1) add("pairwise_inequality", r.pairwise_inequality >= -tol.pairwise * scale * scale, r.pairwise_inequality);

  double worst_kernel = 0.0, worst_nonzero = std::numeric_limits<double>::infinity();
  bool empty_cavities_zero = true, exterior_regular = true;
  for (const auto& b : m.blocks) {
    const Eigen::MatrixXd A = m.block(b);
    if (b.bounded) {
      const double norm = A.norm();
      const double res = norm > 0.0 ? (A * Eigen::VectorXd::Ones(A.rows())).norm() / norm : 0.0;
      r.kernel_residual.push_back(res);
      worst_kernel = std::max(worst_kernel, res);
      if (b.surfaces.size() == 1 && A(0, 0) != 0.0) empty_cavities_zero = false;
    } else {
      Eigen::LLT<Eigen::MatrixXd> llt(A);
      exterior_regular = llt.info() == Eigen::Success;
    }
    if (b.surfaces.size() > 1) {
      const double mn = A.cwiseAbs().minCoeff();
      r.strict_nonzero.push_back(mn);
      worst_nonzero = std::min(worst_nonzero, mn);
    }
  }
  add("kernel_bounded_blocks", worst_kernel <= tol.exact, worst_kernel);
  add("empty_cavity_blocks_zero", empty_cavities_zero, 0.0);
  add("exterior_block_regular", exterior_regular, 0.0, "Cholesky of the exterior block");
  if (std::isfinite(worst_nonzero) && analytic)
    add("strict_nonzero", worst_nonzero >= tol.nonzero_floor * scale, worst_nonzero,
        "advisory: discretization cannot separate zero from exponentially small coupling", true);
  return r;
}

inline nlohmann::json matrix_json(const Eigen::MatrixXd& C) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < C.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < C.cols(); ++j) row.push_back(C(i, j));
    rows.push_back(row);
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& rows) {
  const int n = static_cast<int>(rows.size());
  Eigen::MatrixXd C(n, n);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(rows[i].size()) != n) throw input_error("InvalidMatrix", "matrix must be square");
    for (int j = 0; j < n; ++j) C(i, j) = rows[i][j].get<double>();
  }
  return C;
}

inline nlohmann::json report_json(const PropertyReport& r) {
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : r.checks)
    checks.push_back({{"name", c.name}, {"passed", c.passed}, {"advisory", c.advisory}, {"value", c.value},
                      {"detail", c.detail}});
  return {{"delta", r.delta},
          {"delta_zero_surfaces", r.delta_zero_surfaces},
          {"pairwise_inequality", std::isfinite(r.pairwise_inequality) ? nlohmann::json(r.pairwise_inequality)
                                                                       : nlohmann::json(nullptr)},
          {"kernel_residual", r.kernel_residual},
          {"strict_nonzero", r.strict_nonzero},
          {"symmetry_error", r.symmetry_error},
          {"passed", r.passed()},
          {"checks", checks}};
}

inline nlohmann::json capacitance_json(const CapacitanceMatrix& m, const PropertyReport* report = nullptr) {
  nlohmann::json j{{"surfaces", m.surfaces},
                   {"units", unit_symbol(m.units)},
                   {"C", matrix_json(m.C)},
                   {"form", to_string(m.form)}};
  j["report"] = report ? report_json(*report) : nlohmann::json::object();
  return j;
}

/// Reads {"surfaces","units","C","form"}; blocks are taken from `t` when given.
inline CapacitanceMatrix capacitance_from_json(const nlohmann::json& j, const Topology* t = nullptr) {
  try {
    CapacitanceMatrix m;
    m.C = matrix_from_json(j.at("C"));
    m.surfaces = j.at("surfaces").get<std::vector<int>>();
    const std::string units = j.value("units", std::string("F"));
    if (units == "F") m.units = UnitsMode::si;
    else if (units == "m") m.units = UnitsMode::reduced;
    else throw input_error("InvalidMatrix", "units must be \"F\" or \"m\"");
    const std::string form = j.value("form", std::string("energy"));
    m.form = form == "flux" ? MatrixForm::flux : form == "analytic" ? MatrixForm::analytic : MatrixForm::energy;
    if (static_cast<int>(m.surfaces.size()) != m.size())
      throw input_error("InvalidMatrix", "surface list does not match matrix size");
    if (t) {
      if (t->N != m.size()) throw input_error("InvalidMatrix", "matrix size differs from the topology's N");
      m.blocks = block_partition(*t);
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw input_error("InvalidMatrix", std::string("malformed matrix JSON: ") + e.what());
  }
}

}  // namespace capmat
