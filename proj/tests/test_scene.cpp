#include <gtest/gtest.h>

#include "support.hpp"

using namespace capmat;
using namespace capmat::testing;

namespace {

std::string code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "none";
}

const char* kMinimal = R"({
  "domain_box": {"min": [-1, -1, -1], "max": [1, 1, 1]},
  "shapes": [{"kind": "sphere", "conductor": 1, "center": [0, 0, 0], "radius": 0.5}]
})";

}  // namespace

TEST(SceneParse, MinimalSceneDefaults) {
  const Scene s = parse_scene(kMinimal);
  EXPECT_EQ(s.outer_bc, OuterBc::grounded);
  EXPECT_EQ(s.units, UnitsMode::si);
  EXPECT_EQ(s.dielectric.kind(), DielectricKind::vacuum);
  ASSERT_EQ(s.shapes.size(), 1u);
  EXPECT_EQ(s.conductor_count(), 1);
  EXPECT_EQ(s.shapes[0].kind, ShapeKind::sphere);
  EXPECT_DOUBLE_EQ(s.shapes[0].radius, 0.5);
}

TEST(SceneParse, AllShapeAndDielectricKinds) {
  const Scene s = parse_scene(R"({
    "domain_box": {"min": [0, 0, 0], "max": [4, 4, 4]},
    "outer_bc": "zero_flux", "units": "reduced",
    "dielectric": {"kind": "anisotropic", "matrix": [[2, 0.5, 0], [0.5, 3, 0], [0, 0, 1.5]]},
    "shapes": [
      {"kind": "box", "conductor": 1, "min": [0.5, 0.5, 0.5], "max": [1.5, 1.5, 1.5]},
      {"kind": "ellipsoid", "conductor": 2, "center": [3, 3, 3], "semi_axes": [0.5, 0.6, 0.7]},
      {"kind": "sphere", "conductor": "void", "center": [1, 1, 1], "radius": 0.2}
    ]})");
  EXPECT_EQ(s.outer_bc, OuterBc::zero_flux);
  EXPECT_EQ(s.units, UnitsMode::reduced);
  EXPECT_EQ(s.dielectric.kind(), DielectricKind::anisotropic);
  EXPECT_DOUBLE_EQ(s.dielectric.matrix()(0, 1), 0.5);
  EXPECT_EQ(s.conductor_count(), 2);
  EXPECT_FALSE(s.shapes[2].conductor.has_value());
}

TEST(SceneParse, ErrorCodes) {
  EXPECT_EQ(code_of([] { parse_scene("{\"domain_box\": "); }), "SyntaxError");
  EXPECT_EQ(code_of([] { parse_scene(R"({"domain_box": {"min": [1,1,1], "max": [0,2,2]}})"); }), "InvalidDomain");
  EXPECT_EQ(code_of([] {
              parse_scene(R"({"domain_box": {"min": [-1,-1,-1], "max": [1,1,1]},
                "shapes": [{"kind": "sphere", "conductor": 1, "center": [0.8,0,0], "radius": 0.5}]})");
            }),
            "ShapeOutsideDomain");
  EXPECT_EQ(code_of([] {
              parse_scene(R"({"domain_box": {"min": [-1,-1,-1], "max": [1,1,1]},
                "shapes": [{"kind": "sphere", "conductor": 1, "center": [0.4,0,0], "radius": 0.2},
                           {"kind": "sphere", "conductor": 1, "center": [-0.4,0,0], "radius": 0.2}]})");
            }),
            "DuplicateConductor");
  EXPECT_EQ(code_of([] {
              parse_scene(R"({"domain_box": {"min": [-1,-1,-1], "max": [1,1,1]},
                "shapes": [{"kind": "sphere", "conductor": 2, "center": [0,0,0], "radius": 0.2}]})");
            }),
            "NonConsecutiveIds");
  EXPECT_EQ(code_of([] {
              parse_scene(R"({"domain_box": {"min": [-1,-1,-1], "max": [1,1,1]}, "colour": 3})");
            }),
            "UnknownKey");
  EXPECT_EQ(code_of([] {
              parse_scene(R"({"domain_box": {"min": [-1,-1,-1], "max": [1,1,"x"]}})");
            }),
            "TypeError");
  EXPECT_EQ(code_of([] { parse_scene(R"({"shapes": []})"); }), "MissingKey");
  EXPECT_EQ(code_of([] { load_scene("/nonexistent/scene.json"); }), "FileNotFound");
}

TEST(SceneParse, SyntaxErrorReportsLine) {
  try {
    parse_scene("{\n  \"domain_box\": {\n    \"min\": [0, 0, 0],,\n  }\n}");
    FAIL() << "expected SyntaxError";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::input);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Voxelize, SphereCellCountMatchesBruteForce) {
  const LabeledGrid g = voxelize(parse_scene(kMinimal), 16);
  EXPECT_EQ(g.nx(), 16);
  EXPECT_DOUBLE_EQ(g.h(), 0.125);
  EXPECT_EQ(g.count_label(1), 280);
}

TEST(Voxelize, VolumeConverges) {
  const Scene s = parse_scene(kMinimal);
  const double exact = 4.0 / 3.0 * std::numbers::pi * 0.125;
  const LabeledGrid g32 = voxelize(s, 32), g64 = voxelize(s, 64);
  EXPECT_EQ(g32.count_label(1), 2176);
  EXPECT_EQ(g64.count_label(1), 17256);
  const double v32 = g32.count_label(1) * std::pow(g32.h(), 3);
  const double v64 = g64.count_label(1) * std::pow(g64.h(), 3);
  EXPECT_NEAR(v32 / v64, 1.0, 0.05);
  EXPECT_LT(std::abs(v64 - exact), std::abs(v32 - exact));
}

TEST(Voxelize, Deterministic) {
  const Scene s = load("fig6.json");
  EXPECT_TRUE(voxelize(s, 48) == voxelize(s, 48));
}

TEST(Voxelize, PainterOrderLaterShapeWins) {
  Scene s = parse_scene(kMinimal);
  s.shapes.push_back(Shape::sphere({0, 0, 0}, 0.3, std::nullopt));
  s.shapes.push_back(Shape::sphere({0, 0, 0}, 0.1, std::nullopt));
  const LabeledGrid g = voxelize(s, 32);
  const std::int64_t center = g.cell_index(16, 16, 16);
  EXPECT_TRUE(g.is_domain(center));
  EXPECT_EQ(g.label(g.cell_index(16, 16, 22)), 1);  // center at radius ~0.41, inside the shell
}

TEST(Voxelize, TouchingConductorsRejected) {
  Scene s;
  s.domain_box = {{-2, -2, -2}, {2, 2, 2}};
  s.shapes.push_back(Shape::sphere({-0.505, 0, 0}, 0.5, 1));
  s.shapes.push_back(Shape::sphere({0.505, 0, 0}, 0.5, 2));
  EXPECT_EQ(code_of([&] { voxelize(s, 16); }), "ComponentsTouch");
}

TEST(Voxelize, ThinConductorRejected) {
  Scene s;
  s.domain_box = {{-1, -1, -1}, {1, 1, 1}};
  s.shapes.push_back(Shape::cuboid({-0.5, -0.5, -0.1}, {0.5, 0.5, 0.05}, 1));
  EXPECT_EQ(code_of([&] { voxelize(s, 16); }), "ConductorTooThin");
  s.shapes[0] = Shape::sphere({0, 0, 0}, 0.01, 1);
  EXPECT_EQ(code_of([&] { voxelize(s, 16); }), "ConductorTooThin");
  // A thick conductor with a lone protruding cell (sphere off the grid lattice) is fine.
  s.shapes[0] = Shape::sphere({0.137, -0.071, 0.043}, 0.6, 1);
  EXPECT_EQ(code_of([&] { voxelize(s, 32); }), "none");
  EXPECT_TRUE(validate_basic(voxelize(s, 32)).condition(3).passed);
}

TEST(Voxelize, ResolutionRules) {
  const Scene s = parse_scene(kMinimal);
  EXPECT_EQ(code_of([&] { voxelize(s, 4); }), "InvalidResolution");
  Scene flat = s;
  flat.domain_box = {{-1, -1, -0.25}, {1, 1, 0.25}};
  flat.shapes.clear();
  EXPECT_EQ(code_of([&] { voxelize(flat, 16); }), "InvalidResolution");
  Scene odd = s;
  odd.domain_box = {{0, 0, 0}, {1, 1, 0.77}};
  odd.shapes.clear();
  EXPECT_EQ(code_of([&] { voxelize(odd, 16); }), "InvalidResolution");
}

TEST(ValidateBasic, GroundedSceneConditions) {
  const ValidationReport r = validate_basic(voxelize(load("fig6.json"), 48));
  EXPECT_TRUE(r.passed());
  ASSERT_EQ(r.conditions.size(), 5u);
  EXPECT_EQ(r.domain_components, 3);
  EXPECT_EQ(r.conductor_components, 3);
}

TEST(ValidateBasic, ConductorOnGroundedBoxNextToExteriorFails) {
  Scene s;
  s.domain_box = {{0, 0, 0}, {2, 2, 2}};
  s.shapes.push_back(Shape::cuboid({0, 0, 0}, {0.5, 0.5, 0.5}, 1));
  const ValidationReport r = validate_basic(voxelize(s, 16));
  EXPECT_FALSE(r.condition(2).passed);
  EXPECT_FALSE(r.passed());
}

TEST(ValidateBasic, ZeroFluxBoxAcceptsWallConductors) {
  const ValidationReport r = validate_basic(voxelize(load("plate_a.json"), 32));
  EXPECT_TRUE(r.passed());
  EXPECT_EQ(r.domain_components, 1);
}

TEST(RandomScenes, SeededGeneratorIsReproducible) {
  const Scene a = random_scene(11), b = random_scene(11);
  EXPECT_TRUE(voxelize(a, 48) == voxelize(b, 48));
  EXPECT_GE(a.conductor_count(), 4);
}
