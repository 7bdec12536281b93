#pragma once

#include <algorithm>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "common.hpp"

namespace capmat {

using Tensor3 = Eigen::Matrix3d;

/// One slab of a layered-z dielectric; it covers z < z_max down to the previous layer.
struct Layer {
  double z_max = std::numeric_limits<double>::infinity();
  double epsilon = 1.0;
};

enum class DielectricKind { vacuum, isotropic_const, isotropic_function, layered_z, anisotropic };

inline const char* to_string(DielectricKind kind) {
  switch (kind) {
    case DielectricKind::vacuum: return "vacuum";
    case DielectricKind::isotropic_const: return "isotropic_const";
    case DielectricKind::isotropic_function: return "isotropic_function";
    case DielectricKind::layered_z: return "layered_z";
    case DielectricKind::anisotropic: return "anisotropic";
  }
  return "unknown";
}

/// Relative permittivity tensor field. Every preset is piecewise constant
/// except `isotropic_function`, which wraps a user callable.
class PermittivityField {
public:
  PermittivityField() = default;

  static PermittivityField vacuum() { return PermittivityField(); }

  static PermittivityField isotropic(double epsilon, std::optional<double> kappa = std::nullopt) {
    PermittivityField f;
    f.kind_ = DielectricKind::isotropic_const;
    f.epsilon_ = epsilon;
    f.kappa_ = kappa.value_or(std::max(1.0, epsilon));
    return f;
  }

  static PermittivityField isotropic_function(std::function<double(const Vec3&)> fn, double kappa) {
    PermittivityField f;
    f.kind_ = DielectricKind::isotropic_function;
    f.function_ = std::move(fn);
    f.kappa_ = kappa;
    return f;
  }

  static PermittivityField layered_z(std::vector<Layer> layers, std::optional<double> kappa = std::nullopt) {
    if (layers.empty()) throw input_error("InvalidDielectric", "layered_z needs at least one layer");
    for (std::size_t i = 1; i < layers.size(); ++i) {
      if (!(layers[i].z_max > layers[i - 1].z_max))
        throw input_error("InvalidDielectric", "layer z_max values must be strictly increasing");
    }
    PermittivityField f;
    f.kind_ = DielectricKind::layered_z;
    double top = 1.0;
    for (const auto& l : layers) top = std::max(top, l.epsilon);
    f.layers_ = std::move(layers);
    f.kappa_ = kappa.value_or(top);
    return f;
  }

  static PermittivityField anisotropic(const Tensor3& matrix, std::optional<double> kappa = std::nullopt) {
    PermittivityField f;
    f.kind_ = DielectricKind::anisotropic;
    f.matrix_ = matrix;
    if (kappa) {
      f.kappa_ = *kappa;
    } else {
      Eigen::SelfAdjointEigenSolver<Tensor3> es(0.5 * (matrix + matrix.transpose()), Eigen::EigenvaluesOnly);
      f.kappa_ = std::max(1.0, es.eigenvalues().maxCoeff());
    }
    return f;
  }

  DielectricKind kind() const { return kind_; }
  double kappa() const { return kappa_; }
  double epsilon() const { return epsilon_; }
  const std::vector<Layer>& layers() const { return layers_; }
  const Tensor3& matrix() const { return matrix_; }

  /// True for presets whose tensor is a real-analytic function of position.
  bool is_analytic() const {
    return kind_ == DielectricKind::vacuum || kind_ == DielectricKind::isotropic_const ||
           kind_ == DielectricKind::anisotropic;
  }

  /// Tensor at x with no domain check.
  Tensor3 at(const Vec3& x) const {
    switch (kind_) {
      case DielectricKind::vacuum: return Tensor3::Identity();
      case DielectricKind::isotropic_const: return epsilon_ * Tensor3::Identity();
      case DielectricKind::isotropic_function: return function_(x) * Tensor3::Identity();
      case DielectricKind::layered_z: {
        for (const auto& l : layers_)
          if (x.z < l.z_max) return l.epsilon * Tensor3::Identity();
        return layers_.back().epsilon * Tensor3::Identity();
      }
      case DielectricKind::anisotropic: return matrix_;
    }
    return Tensor3::Identity();
  }

private:
  DielectricKind kind_ = DielectricKind::vacuum;
  double epsilon_ = 1.0;
  double kappa_ = 1.0;
  std::vector<Layer> layers_;
  Tensor3 matrix_ = Tensor3::Identity();
  std::function<double(const Vec3&)> function_;
};

/// Tensor at x; x must lie inside the domain box.
inline Tensor3 evaluate(const PermittivityField& field, const Box& domain, const Vec3& x) {
  if (!domain.contains(x)) throw input_error("OutOfDomain", "point outside the domain box");
  return field.at(x);
}

struct BoundsViolation {
  std::int64_t cell = 0;
  std::string reason;
};

struct BoundsReport {
  bool passed = true;
  double min_eigenvalue = std::numeric_limits<double>::infinity();
  double max_eigenvalue = -std::numeric_limits<double>::infinity();
  std::int64_t cells_checked = 0;
  std::vector<BoundsViolation> violations;
};

namespace detail {
inline constexpr double kBoundsSlack = 1e-12;

inline std::optional<std::string> check_tensor(const Tensor3& t, double kappa, double& lo, double& hi) {
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b)
      if (t(a, b) != t(b, a)) return std::string("tensor not symmetric");
  Eigen::SelfAdjointEigenSolver<Tensor3> es(t, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  lo = std::min(lo, ev.minCoeff());
  hi = std::max(hi, ev.maxCoeff());
  if (ev.minCoeff() < 1.0 - kBoundsSlack) return std::string("eigenvalue below 1");
  if (ev.maxCoeff() > kappa + kBoundsSlack) return std::string("eigenvalue above kappa");
  return std::nullopt;
}
}  // namespace detail

/// Samples the field at every domain cell center of `grid` and checks symmetry
/// and the eigenvalue bounds [1, kappa]. Piecewise-constant presets are checked
/// once per distinct tensor.
template <class Grid>
BoundsReport validate_bounds(const PermittivityField& field, const Grid& grid) {
  BoundsReport report;
  const bool constant = field.kind() != DielectricKind::isotropic_function &&
                        field.kind() != DielectricKind::layered_z;
  std::optional<std::optional<std::string>> cached;
  for (std::int64_t c = 0; c < grid.cell_count(); ++c) {
    if (!grid.is_domain(c)) continue;
    ++report.cells_checked;
    std::optional<std::string> bad;
    if (constant) {
      if (!cached) cached = detail::check_tensor(field.at(grid.cell_center(c)), field.kappa(), report.min_eigenvalue,
                                                 report.max_eigenvalue);
      bad = *cached;
    } else {
      bad = detail::check_tensor(field.at(grid.cell_center(c)), field.kappa(), report.min_eigenvalue,
                                 report.max_eigenvalue);
    }
    if (bad) {
      report.passed = false;
      if (report.violations.size() < 64) report.violations.push_back({c, *bad});
    }
  }
  return report;
}

}  // namespace capmat
