#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "common.hpp"

namespace capmat {

struct BisphericalParams {
  double a1 = 1.0;
  double a2 = 1.0;
  double b = 4.0;
  double series_tol = 1e-14;
  int max_terms = 100000;
};

struct BisphericalResult {
  Eigen::Matrix2d farads;   // C in F
  Eigen::Matrix2d reduced;  // C / (4 pi eps0), in m
  double xi1 = 0.0;
  double xi2 = 0.0;
  int terms = 0;  // largest term count used by any of the three series
};

/// Positive-branch bispherical coordinates of the two sphere surfaces.
inline std::pair<double, double> xi_parameters(double a1, double a2, double b) {
  if (!(a1 > 0.0 && a2 > 0.0)) throw input_error("InvalidRadius", "sphere radii must be positive");
  if (!(b > a1 + a2)) throw input_error("SpheresOverlap", "center distance must exceed a1 + a2");
  const double c1 = (b * b + a1 * a1 - a2 * a2) / (2.0 * b * a1);
  const double c2 = (b * b + a2 * a2 - a1 * a1) / (2.0 * b * a2);
  return {std::acosh(c1), std::acosh(c2)};
}

namespace detail {

/// Sums term(l) for l = 0, 1, ... until term < tol * partial sum.
template <class Term>
double positive_series(Term term, double tol, int max_terms, int& used) {
  double sum = 0.0;
  for (int l = 0; l < max_terms; ++l) {
    const double t = term(l);
    sum += t;
    if (t < tol * sum) {
      used = l + 1;
      return sum;
    }
  }
  throw solver_error("SeriesNotConverged", "bispherical series needs more than " + std::to_string(max_terms) +
                                               " terms (spheres nearly touching)");
}

}  // namespace detail

/// Exact two-sphere capacitance matrix from the bispherical series.
inline BisphericalResult bispherical_matrix(const BisphericalParams& p) {
  BisphericalResult r;
  std::tie(r.xi1, r.xi2) = xi_parameters(p.a1, p.a2, p.b);
  const double s = r.xi1 + r.xi2;
  // coth(x) and e^{-x}/sinh(x) written with e^{-2x} to avoid overflow.
  auto coth = [](double x) {
    const double e = std::exp(-2.0 * x);
    return (1.0 + e) / (1.0 - e);
  };
  auto exp_over_sinh = [](double x) {
    const double e = std::exp(-2.0 * x);
    return 2.0 * e / (1.0 - e);
  };
  int used = 0;
  auto diag = [&](double a, double xi) {
    const double sum = detail::positive_series(
        [&](int l) { return std::exp(-(2.0 * l + 1.0) * xi) * coth((l + 0.5) * s); }, p.series_tol, p.max_terms, used);
    r.terms = std::max(r.terms, used);
    return a / 2.0 + a * std::sinh(xi) * sum;
  };
  const double c11 = diag(p.a1, r.xi1);
  const double c22 = diag(p.a2, r.xi2);
  const double off = detail::positive_series([&](int l) { return exp_over_sinh((l + 0.5) * s); }, p.series_tol,
                                             p.max_terms, used);
  r.terms = std::max(r.terms, used);
  const double c12 = -p.a1 * std::sinh(r.xi1) * off;
  r.reduced << c11, c12, c12, c22;
  r.farads = kFourPiEpsilon0 * r.reduced;
  return r;
}

/// Far-separation expansion to second order in eta = sqrt(a1 a2) / b, in F.
inline Eigen::Matrix2d bispherical_eta_expansion(double a1, double a2, double b) {
  if (!(b > a1 + a2)) throw input_error("SpheresOverlap", "center distance must exceed a1 + a2");
  const double g = std::sqrt(a1 * a2);
  const double eta = g / b;
  Eigen::Matrix2d m;
  m << a1 * (1.0 + eta * eta), -eta * g, -eta * g, a2 * (1.0 + eta * eta);
  return kFourPiEpsilon0 * m;
}

}  // namespace capmat
