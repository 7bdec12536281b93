#pragma once

#include <algorithm>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "common.hpp"
#include "dielectric.hpp"

namespace capmat {

enum class ShapeKind { sphere, box, ellipsoid };

inline const char* to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::sphere: return "sphere";
    case ShapeKind::box: return "box";
    case ShapeKind::ellipsoid: return "ellipsoid";
  }
  return "unknown";
}

/// A primitive solid. `conductor` is empty for a void carve-out.
struct Shape {
  ShapeKind kind = ShapeKind::sphere;
  Vec3 center;
  double radius = 0.0;
  Vec3 semi_axes;
  Box box;
  std::optional<int> conductor;

  static Shape sphere(Vec3 c, double r, std::optional<int> id) {
    Shape s;
    s.kind = ShapeKind::sphere;
    s.center = c;
    s.radius = r;
    s.conductor = id;
    return s;
  }
  static Shape cuboid(Vec3 lo, Vec3 hi, std::optional<int> id) {
    Shape s;
    s.kind = ShapeKind::box;
    s.box = {lo, hi};
    s.conductor = id;
    return s;
  }
  static Shape ellipsoid(Vec3 c, Vec3 axes, std::optional<int> id) {
    Shape s;
    s.kind = ShapeKind::ellipsoid;
    s.center = c;
    s.semi_axes = axes;
    s.conductor = id;
    return s;
  }

  bool contains(const Vec3& p) const {
    switch (kind) {
      case ShapeKind::sphere: {
        const Vec3 d = p - center;
        return d.x * d.x + d.y * d.y + d.z * d.z < radius * radius;
      }
      case ShapeKind::box:
        return p.x > box.min.x && p.x < box.max.x && p.y > box.min.y && p.y < box.max.y && p.z > box.min.z &&
               p.z < box.max.z;
      case ShapeKind::ellipsoid: {
        const Vec3 d = p - center;
        const double q = (d.x * d.x) / (semi_axes.x * semi_axes.x) + (d.y * d.y) / (semi_axes.y * semi_axes.y) +
                         (d.z * d.z) / (semi_axes.z * semi_axes.z);
        return q < 1.0;
      }
    }
    return false;
  }

  Box bounds() const {
    switch (kind) {
      case ShapeKind::sphere:
        return {{center.x - radius, center.y - radius, center.z - radius},
                {center.x + radius, center.y + radius, center.z + radius}};
      case ShapeKind::box: return box;
      case ShapeKind::ellipsoid:
        return {center - semi_axes, center + semi_axes};
    }
    return box;
  }
};

/// Declarative conductor + dielectric geometry. Shapes are painted in order;
/// a later shape overwrites the cells of earlier ones.
struct Scene {
  std::vector<Shape> shapes;
  Box domain_box{{-1, -1, -1}, {1, 1, 1}};
  OuterBc outer_bc = OuterBc::grounded;
  UnitsMode units = UnitsMode::si;
  PermittivityField dielectric;

  int conductor_count() const {
    int n = 0;
    for (const auto& s : shapes)
      if (s.conductor) n = std::max(n, *s.conductor);
    return n;
  }
};

namespace detail {

using nlohmann::json;

inline std::string line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

inline void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; }))
      throw input_error("UnknownKey", "unknown key '" + it.key() + "' in " + where);
  }
}

inline const json& need(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw input_error("MissingKey", "missing key '" + std::string(key) + "' in " + where);
  return obj.at(key);
}

inline double number(const json& v, const std::string& where) {
  if (!v.is_number()) throw input_error("TypeError", where + " must be a number");
  return v.get<double>();
}

inline Vec3 vec3(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 3) throw input_error("TypeError", where + " must be an array of 3 numbers");
  return {number(v[0], where), number(v[1], where), number(v[2], where)};
}

inline PermittivityField parse_dielectric(const json& d) {
  if (!d.is_object()) throw input_error("TypeError", "dielectric must be an object");
  reject_unknown(d, {"kind", "epsilon", "layers", "matrix", "kappa"}, "dielectric");
  const std::string kind = need(d, "kind", "dielectric").get<std::string>();
  std::optional<double> kappa;
  if (d.contains("kappa")) kappa = number(d.at("kappa"), "dielectric.kappa");
  if (kind == "vacuum") {
    auto f = PermittivityField::vacuum();
    if (kappa) f = PermittivityField::isotropic(1.0, kappa);
    return f;
  }
  if (kind == "isotropic_const") return PermittivityField::isotropic(number(need(d, "epsilon", "dielectric"), "epsilon"), kappa);
  if (kind == "layered_z") {
    const json& layers = need(d, "layers", "dielectric");
    if (!layers.is_array()) throw input_error("TypeError", "dielectric.layers must be an array");
    std::vector<Layer> out;
    for (const auto& l : layers) {
      reject_unknown(l, {"z_max", "epsilon"}, "dielectric.layers[]");
      Layer layer;
      layer.epsilon = number(need(l, "epsilon", "dielectric.layers[]"), "epsilon");
      if (l.contains("z_max")) layer.z_max = number(l.at("z_max"), "z_max");
      out.push_back(layer);
    }
    return PermittivityField::layered_z(std::move(out), kappa);
  }
  if (kind == "anisotropic") {
    const json& m = need(d, "matrix", "dielectric");
    if (!m.is_array() || m.size() != 3) throw input_error("TypeError", "dielectric.matrix must be 3x3");
    Tensor3 t;
    for (int r = 0; r < 3; ++r) {
      const Vec3 row = vec3(m[r], "dielectric.matrix row");
      for (int c = 0; c < 3; ++c) t(r, c) = row[c];
    }
    return PermittivityField::anisotropic(t, kappa);
  }
  throw input_error("InvalidDielectric", "unknown dielectric kind '" + kind + "'");
}

inline Shape parse_shape(const json& s, std::size_t index) {
  const std::string where = "shapes[" + std::to_string(index) + "]";
  if (!s.is_object()) throw input_error("TypeError", where + " must be an object");
  const std::string kind = need(s, "kind", where).get<std::string>();
  const json& tag = need(s, "conductor", where);
  std::optional<int> id;
  if (tag.is_string()) {
    if (tag.get<std::string>() != "void") throw input_error("TypeError", where + ".conductor must be an integer or \"void\"");
  } else if (tag.is_number_integer()) {
    id = tag.get<int>();
    if (*id < 1) throw input_error("InvalidConductor", where + ".conductor must be >= 1");
  } else {
    throw input_error("TypeError", where + ".conductor must be an integer or \"void\"");
  }
  if (kind == "sphere") {
    reject_unknown(s, {"kind", "conductor", "center", "radius"}, where);
    const double r = number(need(s, "radius", where), where + ".radius");
    if (!(r > 0)) throw input_error("InvalidShape", where + ".radius must be positive");
    return Shape::sphere(vec3(need(s, "center", where), where + ".center"), r, id);
  }
  if (kind == "box") {
    reject_unknown(s, {"kind", "conductor", "min", "max"}, where);
    const Vec3 lo = vec3(need(s, "min", where), where + ".min");
    const Vec3 hi = vec3(need(s, "max", where), where + ".max");
    if (!(hi.x > lo.x && hi.y > lo.y && hi.z > lo.z)) throw input_error("InvalidShape", where + " has max <= min");
    return Shape::cuboid(lo, hi, id);
  }
  if (kind == "ellipsoid") {
    reject_unknown(s, {"kind", "conductor", "center", "semi_axes"}, where);
    const Vec3 axes = vec3(need(s, "semi_axes", where), where + ".semi_axes");
    if (!(axes.x > 0 && axes.y > 0 && axes.z > 0)) throw input_error("InvalidShape", where + ".semi_axes must be positive");
    return Shape::ellipsoid(vec3(need(s, "center", where), where + ".center"), axes, id);
  }
  throw input_error("InvalidShape", where + " has unknown kind '" + kind + "'");
}

}  // namespace detail

/// Checks id consistency and box containment; throws on the first problem.
inline void check_scene(const Scene& scene) {
  const Box& b = scene.domain_box;
  if (!(b.max.x > b.min.x && b.max.y > b.min.y && b.max.z > b.min.z))
    throw input_error("InvalidDomain", "domain_box max must exceed min on every axis");
  std::set<int> ids;
  for (std::size_t i = 0; i < scene.shapes.size(); ++i) {
    const auto& s = scene.shapes[i];
    if (!b.encloses(s.bounds()))
      throw input_error("ShapeOutsideDomain", "shape " + std::to_string(i) + " extends outside domain_box");
    if (s.conductor) {
      if (!ids.insert(*s.conductor).second)
        throw input_error("DuplicateConductor", "duplicate conductor id " + std::to_string(*s.conductor));
    }
  }
  int expected = 1;
  for (int id : ids) {
    if (id != expected) throw input_error("NonConsecutiveIds", "non-consecutive conductor ids");
    ++expected;
  }
}

namespace detail {
inline Scene parse_scene_document(const json& doc);
}

inline Scene parse_scene(const std::string& text) {
  using detail::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw input_error("SyntaxError", "scene JSON syntax error at " + detail::line_col(text, e.byte > 0 ? e.byte - 1 : 0));
  }
  try {
    return detail::parse_scene_document(doc);
  } catch (const json::exception& e) {
    throw input_error("TypeError", std::string("scene has a value of the wrong type: ") + e.what());
  }
}

inline Scene detail::parse_scene_document(const json& doc) {
  if (!doc.is_object()) throw input_error("TypeError", "scene must be a JSON object");
  detail::reject_unknown(doc, {"domain_box", "outer_bc", "units", "shapes", "dielectric"}, "scene");

  Scene scene;
  const json& box = detail::need(doc, "domain_box", "scene");
  detail::reject_unknown(box, {"min", "max"}, "domain_box");
  scene.domain_box = {detail::vec3(detail::need(box, "min", "domain_box"), "domain_box.min"),
                      detail::vec3(detail::need(box, "max", "domain_box"), "domain_box.max")};
  if (doc.contains("outer_bc")) {
    const std::string bc = doc.at("outer_bc").get<std::string>();
    if (bc == "grounded") scene.outer_bc = OuterBc::grounded;
    else if (bc == "zero_flux") scene.outer_bc = OuterBc::zero_flux;
    else throw input_error("InvalidValue", "outer_bc must be \"grounded\" or \"zero_flux\"");
  }
  if (doc.contains("units")) {
    const std::string u = doc.at("units").get<std::string>();
    if (u == "si") scene.units = UnitsMode::si;
    else if (u == "reduced") scene.units = UnitsMode::reduced;
    else throw input_error("InvalidValue", "units must be \"si\" or \"reduced\"");
  }
  if (doc.contains("shapes")) {
    const json& shapes = doc.at("shapes");
    if (!shapes.is_array()) throw input_error("TypeError", "shapes must be an array");
    for (std::size_t i = 0; i < shapes.size(); ++i) scene.shapes.push_back(detail::parse_shape(shapes[i], i));
  }
  if (doc.contains("dielectric")) scene.dielectric = detail::parse_dielectric(doc.at("dielectric"));
  check_scene(scene);
  return scene;
}

inline Scene load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw input_error("FileNotFound", "cannot open scene file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scene(ss.str());
}

}  // namespace capmat
