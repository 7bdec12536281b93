#include <gtest/gtest.h>

#include "support.hpp"

using namespace capmat;
using namespace capmat::testing;

namespace {

struct Analyzed {
  LabeledGrid grid;
  Topology t;
  CavityMap c;
  ConductorTree tree;
};

Analyzed analyze(const Scene& s, int res) {
  Analyzed a;
  a.grid = voxelize(s, res);
  a.t = label_components(a.grid);
  a.c = cavity_map(a.t, a.grid);
  a.tree = build_conductor_tree(a.t, a.c);
  return a;
}

using Edge = std::tuple<int, int, int>;  // (u, v, component), u = 0 for infinity

std::vector<Edge> edges(const ConductorTree& tree) {
  std::vector<Edge> out;
  for (const auto& e : tree.edges) out.emplace_back(e.u, e.v, e.component);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::tuple<int, int, bool>> surfaces(const Topology& t) {
  std::vector<std::tuple<int, int, bool>> out;
  for (const auto& s : t.surfaces) out.emplace_back(s.conductor, s.component, s.outermost);
  return out;
}

}  // namespace

TEST(Euler, Identity) {
  EXPECT_TRUE(euler_check(3, 5, 3));
  EXPECT_TRUE(euler_check(1, 2, 2));
  EXPECT_TRUE(euler_check(5, 13, 9));
  EXPECT_FALSE(euler_check(2, 5, 3));
}

TEST(Topology, SingleSphere) {
  const Analyzed a = analyze(load("sphere.json"), 32);
  EXPECT_EQ(a.t.M, 1);
  EXPECT_EQ(a.t.N, 1);
  EXPECT_EQ(a.t.P, 1);
  ASSERT_TRUE(a.t.exterior_id.has_value());
  EXPECT_EQ(*a.t.exterior_id, 0);
  EXPECT_TRUE(a.tree.has_infinity);
  EXPECT_EQ(edges(a.tree), (std::vector<Edge>{{0, 1, 0}}));
}

TEST(Topology, ConductorInsideFilledBox) {
  const Analyzed a = analyze(load("fig5.json"), 48);
  EXPECT_EQ(std::tie(a.t.M, a.t.N, a.t.P), std::make_tuple(1, 2, 2));
  EXPECT_FALSE(a.t.exterior_id.has_value());
  EXPECT_FALSE(a.tree.has_infinity);
  EXPECT_EQ(edges(a.tree), (std::vector<Edge>{{2, 1, 0}}));
  EXPECT_EQ(surfaces(a.t), (std::vector<std::tuple<int, int, bool>>{{1, 0, false}, {2, 0, true}}));
  EXPECT_EQ(a.c.conductor(1).depth, 1);
  EXPECT_EQ(a.c.conductor(2).depth, 0);
  EXPECT_FALSE(a.c.conductor(2).outer_surface.has_value());
  EXPECT_EQ(a.c.processing_order, (std::vector<int>{1, 2}));
}

TEST(Topology, ShellWithTwoOccupiedCavities) {
  const Analyzed a = analyze(load("fig6.json"), 48);
  EXPECT_EQ(std::tie(a.t.M, a.t.N, a.t.P), std::make_tuple(3, 5, 3));
  EXPECT_EQ(surfaces(a.t), (std::vector<std::tuple<int, int, bool>>{
                               {1, 0, false}, {3, 0, true}, {2, 1, false}, {3, 1, true}, {3, 2, false}}));
  EXPECT_EQ(edges(a.tree), (std::vector<Edge>{{0, 3, 2}, {3, 1, 0}, {3, 2, 1}}));
  EXPECT_EQ(a.c.conductor(3).cavities, (std::vector<int>{0, 1}));
  EXPECT_EQ(a.c.conductor(3).outer_surface, std::optional<int>(4));
  EXPECT_EQ(a.c.processing_order.back(), 3);
  EXPECT_TRUE(euler_check(a.t));
}

TEST(Topology, ThreeConductorsOneNested) {
  const Analyzed a = analyze(load("fig1.json"), 64);
  EXPECT_EQ(std::tie(a.t.M, a.t.N, a.t.P), std::make_tuple(4, 6, 3));
  EXPECT_EQ(edges(a.tree), (std::vector<Edge>{{0, 1, 3}, {0, 2, 3}, {2, 3, 2}}));
  EXPECT_EQ(a.c.conductor(3).depth, 1);
  EXPECT_TRUE(euler_check(a.t));
}

TEST(Topology, NineConductorNesting) {
  const Analyzed a = analyze(load("fig2.json"), 144);
  EXPECT_EQ(std::tie(a.t.M, a.t.N, a.t.P), std::make_tuple(5, 13, 9));
  EXPECT_EQ(edges(a.tree), (std::vector<Edge>{{0, 1, 4},
                                              {0, 7, 4},
                                              {1, 2, 0},
                                              {1, 4, 0},
                                              {2, 3, 1},
                                              {4, 5, 2},
                                              {4, 6, 2},
                                              {7, 8, 3},
                                              {7, 9, 3}}));
  EXPECT_EQ(a.c.processing_order, (std::vector<int>{3, 5, 6, 2, 4, 8, 9, 1, 7}));
}

TEST(Topology, DepthThreeNesting) {
  const Analyzed a = analyze(load("nest3.json"), 48);
  EXPECT_EQ(std::tie(a.t.M, a.t.N, a.t.P), std::make_tuple(3, 5, 3));
  EXPECT_EQ(a.c.conductor(1).depth, 2);
  EXPECT_EQ(a.c.conductor(2).depth, 1);
  EXPECT_EQ(a.c.conductor(3).depth, 0);
  EXPECT_EQ(a.c.processing_order, (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(edges(a.tree), (std::vector<Edge>{{0, 3, 2}, {2, 1, 1}, {3, 2, 0}}));
}

TEST(Topology, ZeroFluxPlatesHaveNoExterior) {
  const Analyzed a = analyze(load("plate_a.json"), 32);
  EXPECT_EQ(std::tie(a.t.M, a.t.N, a.t.P), std::make_tuple(1, 2, 2));
  EXPECT_FALSE(a.t.exterior_id.has_value());
  EXPECT_TRUE(a.t.components[0].box_bounded);
  EXPECT_TRUE(a.t.surfaces[1].outermost);
  EXPECT_EQ(a.tree.edges.size(), 1u);
}

TEST(Topology, CanonicalOrderingIgnoresShapeOrder) {
  Scene s = load("fig6.json");
  Scene r = s;
  // Same geometry with conductor ids 1 and 2 swapped.
  r.shapes[3].conductor = 2;
  r.shapes[4].conductor = 1;
  const Analyzed a = analyze(s, 48), b = analyze(r, 48);
  ASSERT_EQ(a.t.N, b.t.N);
  for (int i = 0; i < a.t.N; ++i) {
    EXPECT_EQ(a.t.surfaces[i].min_face_key, b.t.surfaces[i].min_face_key);
    EXPECT_EQ(a.t.surfaces[i].component, b.t.surfaces[i].component);
  }
}

TEST(Topology, DisconnectedConductorRejected) {
  LabeledGrid g({0, 0, 0}, 1.0, {12, 12, 12});
  for (int k = 2; k < 5; ++k)
    for (int j = 2; j < 5; ++j)
      for (int i = 2; i < 5; ++i) {
        g.set_label(g.cell_index(i, j, k), 1);
        g.set_label(g.cell_index(i + 5, j + 5, k + 5), 1);
      }
  try {
    label_components(g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "DisconnectedConductor");
  }
}

TEST(Topology, JsonRoundTrip) {
  const Analyzed a = analyze(load("fig6.json"), 48);
  const nlohmann::json j = topology_json(a.t, a.c, a.tree);
  EXPECT_EQ(j.at("M"), 3);
  EXPECT_TRUE(j.at("euler_identity").get<bool>());
  const auto [t2, c2] = topology_from_json(j);
  EXPECT_EQ(t2.N, a.t.N);
  EXPECT_EQ(t2.exterior_id, a.t.exterior_id);
  for (int i = 0; i < a.t.N; ++i) {
    EXPECT_EQ(t2.surfaces[i].conductor, a.t.surfaces[i].conductor);
    EXPECT_EQ(t2.surfaces[i].outermost, a.t.surfaces[i].outermost);
  }
  EXPECT_EQ(c2.processing_order, a.c.processing_order);
  EXPECT_EQ(c2.conductor(3).cavities, a.c.conductor(3).cavities);
  EXPECT_THROW(topology_from_json(nlohmann::json{{"M", 1}}), Error);
}

TEST(Topology, RandomScenesSatisfyEuler) {
  for (unsigned seed : {11u, 29u, 3u}) {
    const Analyzed a = analyze(random_scene(seed), 48);
    EXPECT_TRUE(euler_check(a.t)) << "seed " << seed;
    EXPECT_EQ(static_cast<int>(a.tree.edges.size()), a.t.P);
  }
}
