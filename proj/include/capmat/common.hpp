#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>

namespace capmat {

// Vacuum permittivity (CODATA 2018), F/m.
inline constexpr double kEpsilon0 = 8.8541878128e-12;
inline constexpr double kFourPiEpsilon0 = 4.0 * std::numbers::pi * kEpsilon0;

/// Failure classes map onto the CLI exit codes (2 = input, 3 = solver).
enum class ErrorKind { input, solver, validation, internal };

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, std::string code, const std::string& what)
      : std::runtime_error(code + ": " + what), kind_(kind), code_(std::move(code)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& code() const noexcept { return code_; }

private:
  ErrorKind kind_;
  std::string code_;
};

inline Error input_error(std::string code, const std::string& what) {
  return Error(ErrorKind::input, std::move(code), what);
}
inline Error solver_error(std::string code, const std::string& what) {
  return Error(ErrorKind::solver, std::move(code), what);
}
inline Error internal_error(std::string code, const std::string& what) {
  return Error(ErrorKind::internal, std::move(code), what);
}

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr double operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
  constexpr double& operator[](int axis) { return axis == 0 ? x : (axis == 1 ? y : z); }
  friend constexpr Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend constexpr Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend constexpr bool operator==(const Vec3&, const Vec3&) = default;
};

struct Box {
  Vec3 min;
  Vec3 max;

  double extent(int axis) const { return max[axis] - min[axis]; }
  bool contains(const Vec3& p) const {
    return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && p.z >= min.z && p.z <= max.z;
  }
  /// True when `inner` lies inside this box, allowing a relative slack for touching faces.
  bool encloses(const Box& inner, double slack = 1e-9) const {
    for (int a = 0; a < 3; ++a) {
      const double s = slack * std::max(1.0, extent(a));
      if (inner.min[a] < min[a] - s || inner.max[a] > max[a] + s) return false;
    }
    return true;
  }
};

enum class OuterBc { grounded, zero_flux };
enum class UnitsMode { si, reduced };

/// Multiplier from farads to the requested output unit.
inline double unit_scale(UnitsMode units) {
  return units == UnitsMode::si ? 1.0 : 1.0 / kFourPiEpsilon0;
}

inline const char* to_string(OuterBc bc) { return bc == OuterBc::grounded ? "grounded" : "zero_flux"; }
inline const char* unit_symbol(UnitsMode units) { return units == UnitsMode::si ? "F" : "m"; }

}  // namespace capmat
