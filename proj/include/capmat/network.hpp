#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "common.hpp"
#include "dielectric.hpp"

namespace capmat {

struct ExchangeResult {
  double delta_q = 0.0;  // charge moved from a to b
  std::array<double, 2> phi_before{0.0, 0.0};
  double phi_after = 0.0;
  std::array<double, 2> q_before{0.0, 0.0};
  std::array<double, 2> q_after{0.0, 0.0};
  double effective_capacitance = 0.0;  // dQ / dphi
};

namespace detail {

/// a*b - c*d with one rounding error (Kahan's fma trick).
inline double diff_of_products(double a, double b, double c, double d) {
  const double w = c * d;
  const double e = std::fma(-c, d, w);
  const double f = std::fma(a, b, -w);
  return f + e;
}

inline void check_pair(int n, int a, int b) {
  if (a < 0 || b < 0 || a >= n || b >= n) throw input_error("InvalidIndex", "conductor index out of range");
  if (a == b) throw input_error("InvalidIndex", "a and b must differ");
}

}  // namespace detail

/// Charge exchanged when conductors a and b are joined, all other conductor
/// charges held fixed. G = C_check^{-1} is applied through an LDLT factor
/// (columns a and b only). `phi` holds potentials relative to infinity.
inline ExchangeResult exchange_charge(const Eigen::MatrixXd& Ccheck, int a, int b, const Eigen::VectorXd& phi) {
  const int n = static_cast<int>(Ccheck.rows());
  detail::check_pair(n, a, b);
  if (phi.size() != n) throw input_error("DimensionMismatch", "potential vector length differs from the matrix");
  Eigen::LDLT<Eigen::MatrixXd> ldlt(Ccheck);
  if (ldlt.info() != Eigen::Success) throw solver_error("SingularMatrix", "cannot factor the reduced matrix");
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(n, 2);
  E(a, 0) = 1.0;
  E(b, 1) = 1.0;
  const Eigen::MatrixXd G = ldlt.solve(E);
  const double gaa = G(a, 0), gbb = G(b, 1), gab = 0.5 * (G(b, 0) + G(a, 1));
  const double denom = gaa + gbb - 2.0 * gab;
  if (!(denom > 0.0)) throw solver_error("DegenerateDenominator", "G_aa + G_bb - 2 G_ab must be positive");
  const Eigen::VectorXd Q = Ccheck * phi;
  ExchangeResult r;
  const double dphi = phi[a] - phi[b];
  r.delta_q = dphi / denom;
  r.phi_before = {phi[a], phi[b]};
  r.phi_after = phi[a] - (gaa - gab) * r.delta_q;
  r.q_before = {Q[a], Q[b]};
  r.q_after = {Q[a] - r.delta_q, Q[b] + r.delta_q};
  r.effective_capacitance = 1.0 / denom;
  return r;
}

/// Same with only the potential difference given (phi_b = 0, others 0).
inline ExchangeResult exchange_charge(const Eigen::MatrixXd& Ccheck, int a, int b, double dphi) {
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(Ccheck.rows());
  detail::check_pair(static_cast<int>(Ccheck.rows()), a, b);
  phi[a] = dphi;
  return exchange_charge(Ccheck, a, b, phi);
}

/// Closed form for a pair: dphi (C_aa C_bb - C_ab^2) / (C_aa + C_bb + 2 C_ab).
inline double exchange_two_conductor(const Eigen::Matrix2d& C, double dphi) {
  const double denom = (C(0, 0) + C(1, 1)) + 2.0 * C(0, 1);
  if (!(denom > 0.0)) throw solver_error("DegenerateDenominator", "C_aa + C_bb + 2 C_ab must be positive");
  const double det = detail::diff_of_products(C(0, 0), C(1, 1), C(0, 1), C(1, 0));
  return dphi * det / denom;
}

/// Re-solves the joined system directly: potentials phi' with
/// (C phi')_i = Q_i for i != a, b, the pair's total charge conserved and
/// phi'_a = phi'_b. Used to validate the closed form.
inline ExchangeResult merge_and_resolve(const Eigen::MatrixXd& Ccheck, int a, int b, const Eigen::VectorXd& phi) {
  const int n = static_cast<int>(Ccheck.rows());
  detail::check_pair(n, a, b);
  if (phi.size() != n) throw input_error("DimensionMismatch", "potential vector length differs from the matrix");
  const Eigen::VectorXd Q = Ccheck * phi;
  Eigen::MatrixXd A = Ccheck;
  Eigen::VectorXd rhs = Q;
  A.row(a) = Ccheck.row(a) + Ccheck.row(b);
  rhs[a] = Q[a] + Q[b];
  A.row(b).setZero();
  A(b, a) = 1.0;
  A(b, b) = -1.0;
  rhs[b] = 0.0;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  if (!lu.isInvertible()) throw solver_error("SingularMatrix", "joined system is singular");
  Eigen::VectorXd p = lu.solve(rhs);
  // One step of iterative refinement.
  p += lu.solve(rhs - A * p);
  const double qa = Ccheck.row(a).dot(p);
  ExchangeResult r;
  r.phi_before = {phi[a], phi[b]};
  r.phi_after = p[a];
  r.q_before = {Q[a], Q[b]};
  r.delta_q = Q[a] - qa;
  r.q_after = {Q[a] - r.delta_q, Q[b] + r.delta_q};
  const double dphi = phi[a] - phi[b];
  r.effective_capacitance = dphi != 0.0 ? r.delta_q / dphi : 0.0;
  return r;
}

struct LumpedPair {
  double c1 = 1.0;
  double c2 = 1.0;
  double delta = 0.0;
};

namespace detail {

inline void check_lumped(const LumpedPair& p) {
  if (!(p.c1 > 0.0 && p.c2 > 0.0)) throw input_error("InvalidLumped", "c1 and c2 must be positive");
  if (!(p.delta >= 0.0 && p.delta < std::min(p.c1, p.c2)))
    throw input_error("InvalidLumped", "delta must satisfy 0 <= delta < min(c1, c2)");
}

}  // namespace detail

/// Parallel connection: the 2x2 regulated matrix fed to the pair formula,
/// equal to C1 + C2 - delta.
inline double parallel_effective(const LumpedPair& p) {
  detail::check_lumped(p);
  if (p.delta == 0.0) throw solver_error("DegenerateDenominator", "delta = 0 gives 0/0 for the parallel pair");
  const double s = p.c1 + p.c2;
  Eigen::Matrix2d C;
  C << s, -(s - 2.0 * p.delta), -(s - 2.0 * p.delta), s;
  return exchange_two_conductor(C, 1.0);
}

/// Regulated three-conductor matrix for two capacitors in series: the joined
/// middle plates first, then the two outer plates.
inline Eigen::Matrix3d series_matrix(const LumpedPair& p) {
  Eigen::Matrix3d M;
  M << p.c1 + p.c2, -(p.c1 - p.delta), -(p.c2 - p.delta),
      -(p.c1 - p.delta), p.c1, 0.0,
      -(p.c2 - p.delta), 0.0, p.c2;
  return M;
}

/// Effective capacitance between nodes a and b of a capacitance network
/// given by a matrix with nonpositive off-diagonals and nonnegative row sums.
/// Every other node floats (fixed charge); the reference node (infinity)
/// carries the row sums. Nodes are eliminated by subtraction-free Kron
/// reduction, which stays accurate when the matrix is nearly singular.
inline double network_effective(const Eigen::MatrixXd& M, int a, int b) {
  const int n = static_cast<int>(M.rows());
  detail::check_pair(n, a, b);
  const int g = n;  // reference node
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(n + 1, n + 1);
  for (int i = 0; i < n; ++i) {
    double off = 0.0;
    for (int j = 0; j < n; ++j)
      if (j != i) {
        if (M(i, j) > 0.0) throw input_error("InvalidNetwork", "off-diagonal entries must be nonpositive");
        W(i, j) = -M(i, j);
        off += -M(i, j);
      }
    const double ground = M(i, i) - off;
    if (ground < 0.0) throw input_error("InvalidNetwork", "row sums must be nonnegative");
    W(i, g) = W(g, i) = ground;
  }
  std::vector<int> alive;
  for (int i = 0; i <= n; ++i) alive.push_back(i);
  for (int k = 0; k <= n; ++k) {
    if (k == a || k == b) continue;
    double total = 0.0;
    for (int j : alive)
      if (j != k) total += W(k, j);
    alive.erase(std::find(alive.begin(), alive.end(), k));
    if (total == 0.0) continue;  // isolated node
    for (int i : alive)
      for (int j : alive)
        if (i < j && W(k, i) != 0.0 && W(k, j) != 0.0) {
          W(i, j) += W(k, i) * W(k, j) / total;
          W(j, i) = W(i, j);
        }
  }
  return W(a, b);
}

struct SeriesResult {
  double value = 0.0;  // dQ/dphi at the given delta
  double limit = 0.0;  // delta -> 0 limit 1 / (1/C1 + 1/C2)
};

/// Series connection: dQ/dphi between the outer plates of the three-conductor
/// matrix with the middle conductor floating.
inline SeriesResult series_effective(const LumpedPair& p) {
  detail::check_lumped(p);
  if (p.delta == 0.0) throw solver_error("SingularAtDelta", "the series matrix is singular at delta = 0");
  SeriesResult r;
  r.value = network_effective(series_matrix(p), 1, 2);
  r.limit = p.c1 * p.c2 / (p.c1 + p.c2);
  return r;
}

enum class PlateCase { a, b, c };

inline PlateCase parse_plate_case(const std::string& s) {
  if (s == "a") return PlateCase::a;
  if (s == "b") return PlateCase::b;
  if (s == "c") return PlateCase::c;
  throw input_error("InvalidCase", "plate case must be a, b or c");
}

/// One dielectric slab of thickness `thickness` (any consistent unit).
struct Slab {
  double epsilon = 1.0;
  double thickness = 1.0;
};

/// Inputs for the parallel-plate approximations; each case reads its own
/// fields. Functions are sampled on the unit square / unit interval.
struct PlateParams {
  std::vector<double> eps_samples;                        // case a: equal-area patches
  std::function<double(double, double)> eps_xy;           // case a: eps(x, y), x,y in [0,1]
  std::vector<Slab> layers;                               // case b
  std::function<double(double)> eps_z;                    // case b: eps(z), z in [0,1]
  std::optional<Tensor3> matrix;                          // case c
  int panels = 10000;
};

namespace detail {

inline void check_eps(double e) {
  if (!(e >= 1.0) || !std::isfinite(e)) throw input_error("InvalidPlateParams", "permittivity samples must be >= 1");
}

}  // namespace detail

/// C11 / C0 with C0 = eps0 A / h: area mean (a), harmonic mean across the
/// gap (b), or eps_zz (c).
inline double plate_capacitance(PlateCase which, const PlateParams& p) {
  switch (which) {
    case PlateCase::a: {
      if (!p.eps_samples.empty()) {
        double s = 0.0;
        for (double e : p.eps_samples) {
          detail::check_eps(e);
          s += e;
        }
        return s / static_cast<double>(p.eps_samples.size());
      }
      if (!p.eps_xy) throw input_error("InvalidPlateParams", "case a needs eps samples or eps(x, y)");
      const int n = std::max(100, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(p.panels)))));
      long double s = 0.0L;
      for (int i = 0; i <= n; ++i)
        for (int j = 0; j <= n; ++j) {
          const double w = (i == 0 || i == n ? 0.5 : 1.0) * (j == 0 || j == n ? 0.5 : 1.0);
          const double e = p.eps_xy(static_cast<double>(i) / n, static_cast<double>(j) / n);
          detail::check_eps(e);
          s += w * e;
        }
      return static_cast<double>(s / (static_cast<long double>(n) * n));
    }
    case PlateCase::b: {
      if (!p.layers.empty()) {
        double total = 0.0, inv = 0.0;
        for (const auto& l : p.layers) {
          detail::check_eps(l.epsilon);
          if (!(l.thickness > 0.0)) throw input_error("InvalidPlateParams", "layer thickness must be positive");
          total += l.thickness;
          inv += l.thickness / l.epsilon;
        }
        return total / inv;
      }
      if (!p.eps_z) throw input_error("InvalidPlateParams", "case b needs layers or eps(z)");
      const int n = std::max(10000, p.panels);
      long double s = 0.0L;
      for (int i = 0; i <= n; ++i) {
        const double e = p.eps_z(static_cast<double>(i) / n);
        detail::check_eps(e);
        s += (i == 0 || i == n ? 0.5L : 1.0L) / e;
      }
      return static_cast<double>(static_cast<long double>(n) / s);
    }
    case PlateCase::c: {
      if (!p.matrix) throw input_error("InvalidPlateParams", "case c needs the permittivity tensor");
      return (*p.matrix)(2, 2);
    }
  }
  throw input_error("InvalidCase", "unknown plate case");
}

}  // namespace capmat
