#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "capmat/capmat.hpp"

namespace capmat::testing {

inline std::string scene_path(const std::string& name) { return std::string(CAPMAT_SCENES_DIR) + "/" + name; }

inline Scene load(const std::string& name) { return load_scene(scene_path(name)); }

inline Scene two_sphere_scene(double half_width, double a1 = 1.0, double a2 = 1.0, double b = 4.0) {
  Scene s;
  const double L = half_width;
  s.domain_box = {{-L, -L, -L}, {L, L, L}};
  s.units = UnitsMode::reduced;
  s.shapes.push_back(Shape::sphere({-b / 2, 0, 0}, a1, 1));
  s.shapes.push_back(Shape::sphere({b / 2, 0, 0}, a2, 2));
  return s;
}

inline Scene sphere_scene(double half_width, double radius = 1.0) {
  Scene s;
  const double L = half_width;
  s.domain_box = {{-L, -L, -L}, {L, L, L}};
  s.units = UnitsMode::reduced;
  s.shapes.push_back(Shape::sphere({0, 0, 0}, radius, 1));
  return s;
}

/// Seeded multi-conductor scene in a grounded [-4,4]^3 box: a spherical shell
/// holding one inner conductor, plus two or three exterior bodies, one of
/// which may carry an empty cavity. Draws are repeated until the scene
/// voxelizes cleanly at `resolution`.
inline Scene random_scene(unsigned seed, int resolution = 48) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (;;) {
    Scene s;
    s.domain_box = {{-4, -4, -4}, {4, 4, 4}};
    s.units = UnitsMode::reduced;
    struct Body {
      Vec3 c;
      double r;
    };
    std::vector<Body> bodies;
    int next_id = 1;

    const double R = 1.5 + 0.4 * U(rng);
    const Vec3 c0{-1.5 + U(rng), -0.5 + U(rng), -0.5 + U(rng)};
    const double void_r = R - 0.55;
    const double inner_r = 0.45 + 0.2 * U(rng);
    const double room = std::max(0.0, void_r - inner_r - 0.45);
    const Vec3 off{room * (2 * U(rng) - 1) / std::sqrt(3.0), room * (2 * U(rng) - 1) / std::sqrt(3.0),
                   room * (2 * U(rng) - 1) / std::sqrt(3.0)};
    s.shapes.push_back(Shape::sphere(c0, R, next_id++));
    s.shapes.push_back(Shape::sphere(c0, void_r, std::nullopt));
    s.shapes.push_back(Shape::sphere(c0 + off, inner_r, next_id++));
    bodies.push_back({c0, R});

    const int extra = 2 + static_cast<int>(U(rng) * 2.0);
    int attempts = 0;
    while (static_cast<int>(bodies.size()) < 1 + extra && attempts++ < 200) {
      // The first extra body is always a box hollowed by an empty cavity.
      const bool first = bodies.size() == 1;
      const int kind = first ? 1 : static_cast<int>(U(rng) * 3.0);
      const double size = first ? 0.9 + 0.15 * U(rng) : 0.55 + 0.5 * U(rng);
      const double lim = 4.0 - size - 0.6;
      const Vec3 c{lim * (2 * U(rng) - 1), lim * (2 * U(rng) - 1), lim * (2 * U(rng) - 1)};
      bool ok = true;
      for (const auto& b : bodies) {
        const Vec3 d = c - b.c;
        if (std::sqrt(d.x * d.x + d.y * d.y + d.z * d.z) < b.r + size * std::sqrt(3.0) + 0.6) ok = false;
      }
      if (!ok) continue;
      const int id = next_id++;
      if (kind == 0) {
        s.shapes.push_back(Shape::sphere(c, size, id));
      } else if (kind == 1) {
        s.shapes.push_back(Shape::cuboid(c - Vec3{size, size, size}, c + Vec3{size, size, size}, id));
      } else {
        s.shapes.push_back(Shape::ellipsoid(c, {size, 0.75 * size + 0.15, size}, id));
      }
      if (first) {
        s.shapes.push_back(Shape::sphere(c, size - 0.5, std::nullopt));
      }
      bodies.push_back({c, size * std::sqrt(3.0)});
    }
    if (static_cast<int>(bodies.size()) < 1 + extra) continue;
    try {
      check_scene(s);
      if (validate_basic(voxelize(s, resolution)).passed()) return s;
    } catch (const Error&) {
    }
  }
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace capmat::testing
