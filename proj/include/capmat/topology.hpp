#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "common.hpp"
#include "grid.hpp"

namespace capmat {

/// A connected boundary component S_n: faces between one conductor and one
/// domain component. Face id is 3*cell + axis for the face shared by `cell`
/// and its +axis neighbour.
struct SurfaceInfo {
  int id = 0;
  int conductor = 0;
  int component = 0;
  std::int64_t min_face_key = 0;
  bool outermost = false;
  std::vector<std::int64_t> faces;
};

struct ComponentInfo {
  int id = 0;
  bool exterior = false;
  /// Zero-flux mode only: the component reaches the outer box but is bounded.
  bool box_bounded = false;
  std::int64_t min_cell_key = 0;
  std::int64_t cell_count = 0;
  /// Canonical order; the outermost (reference) surface, if any, is last.
  std::vector<int> surfaces;
  std::optional<int> outermost;

  bool bounded() const { return !exterior; }
};

struct Topology {
  int M = 0;
  int N = 0;
  int P = 0;
  std::optional<int> exterior_id;
  OuterBc outer_bc = OuterBc::grounded;
  std::vector<ComponentInfo> components;
  std::vector<SurfaceInfo> surfaces;
  /// Per cell: canonical domain component id, -1 for conductor cells.
  std::vector<std::int32_t> cell_component;
};

inline bool euler_check(int M, int N, int P) { return M + P == N + 1; }
inline bool euler_check(const Topology& t) { return euler_check(t.M, t.N, t.P); }

namespace detail {

inline std::int64_t face_id(std::int64_t cell, int axis) { return 3 * cell + axis; }

/// Lexicographic key of the face center in doubled coordinates.
inline std::int64_t face_key(const LabeledGrid& g, std::int64_t face) {
  const auto ijk = g.cell_coords(face / 3);
  const int axis = static_cast<int>(face % 3);
  std::array<std::int64_t, 3> d{2 * ijk[0] + 1, 2 * ijk[1] + 1, 2 * ijk[2] + 1};
  d[axis] += 1;
  return (d[0] * (2 * g.ny() + 2) + d[1]) * (2 * g.nz() + 2) + d[2];
}

/// Face between `cell` and cell + e_axis is a conductor/domain interface.
inline bool is_boundary_face(const LabeledGrid& g, std::int64_t cell, int axis) {
  auto ijk = g.cell_coords(cell);
  ijk[axis] += 1;
  if (ijk[axis] >= g.dim(axis)) return false;
  return g.is_domain(cell) != g.is_domain(g.cell_index(ijk[0], ijk[1], ijk[2]));
}

/// Calls fn(face) for every grid face (interior to the grid) containing the
/// edge along `axis` that starts at vertex (v0, v1, v2).
template <class Fn>
void faces_around_edge(const LabeledGrid& g, std::array<int, 3> v, int axis, Fn fn) {
  const int p = (axis + 1) % 3, q = (axis + 2) % 3;
  for (int normal : {p, q}) {
    const int other = normal == p ? q : p;
    for (int off : {-1, 0}) {
      std::array<int, 3> c = v;
      c[normal] = v[normal] - 1;
      c[other] = v[other] + off;
      if (!g.in_cells(c[0], c[1], c[2])) continue;
      if (c[normal] + 1 >= g.dim(normal)) continue;
      fn(face_id(g.cell_index(c[0], c[1], c[2]), normal));
    }
  }
}

/// Calls fn(vertex coords, edge axis) for the 4 edges of a face.
template <class Fn>
void face_edges(const LabeledGrid& g, std::int64_t face, Fn fn) {
  const int a = static_cast<int>(face % 3);
  auto base = g.cell_coords(face / 3);
  base[a] += 1;
  const int b = (a + 1) % 3, d = (a + 2) % 3;
  for (int off : {0, 1}) {
    auto v = base;
    v[d] += off;
    fn(v, b);
    v = base;
    v[b] += off;
    fn(v, d);
  }
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (a > b) std::swap(a, b);
    parent[b] = a;
    return true;
  }
};

/// Marks every cell reachable from the outer cell layer by 6-steps that do
/// not cross a face listed in `blocked` (sorted face ids).
inline std::vector<char> reach_from_box(const LabeledGrid& g, const std::vector<std::int64_t>& blocked) {
  std::vector<char> seen(static_cast<std::size_t>(g.cell_count()), 0);
  std::vector<std::int64_t> stack;
  for (std::int64_t c = 0; c < g.cell_count(); ++c) {
    const auto [i, j, k] = g.cell_coords(c);
    if (g.on_outer_layer(i, j, k)) {
      seen[c] = 1;
      stack.push_back(c);
    }
  }
  auto is_blocked = [&](std::int64_t f) { return std::binary_search(blocked.begin(), blocked.end(), f); };
  while (!stack.empty()) {
    const std::int64_t c = stack.back();
    stack.pop_back();
    const auto ijk = g.cell_coords(c);
    for (int axis = 0; axis < 3; ++axis)
      for (int s : {-1, 1}) {
        auto q = ijk;
        q[axis] += s;
        if (!g.in_cells(q[0], q[1], q[2])) continue;
        const std::int64_t n = g.cell_index(q[0], q[1], q[2]);
        if (seen[n]) continue;
        if (is_blocked(face_id(s > 0 ? c : n, axis))) continue;
        seen[n] = 1;
        stack.push_back(n);
      }
  }
  return seen;
}

}  // namespace detail

/// True when the surface separates `cell` from the outer box.
inline bool surface_encloses(const LabeledGrid& grid, const SurfaceInfo& s, std::int64_t cell) {
  return !detail::reach_from_box(grid, s.faces)[cell];
}

/// Components, conductors and surfaces in canonical numbering: bounded domain
/// components by minimal cell key then the exterior; within a component the
/// non-outermost surfaces by minimal face key, then the outermost surface.
inline Topology label_components(const LabeledGrid& grid) {
  Topology t;
  t.outer_bc = grid.outer_bc();

  auto [raw_comp, m] = domain_components(grid);
  t.M = m;

  // Conductors: one 6-connected piece per label.
  {
    auto [ccomp, count] = label_6connected(
        grid, [&](std::int64_t c) { return !grid.is_domain(c); },
        [&](std::int64_t a, std::int64_t b) { return grid.label(a) == grid.label(b); });
    std::set<Label> labels;
    for (std::int64_t c = 0; c < grid.cell_count(); ++c)
      if (!grid.is_domain(c)) labels.insert(grid.label(c));
    if (static_cast<int>(labels.size()) != count)
      throw input_error("DisconnectedConductor", "a conductor id covers more than one connected piece");
    t.P = count;
    int expected = 1;
    for (Label l : labels)
      if (l != expected++) throw input_error("NonConsecutiveIds", "conductor labels on the grid are not 1..P");
  }

  // Raw component facts.
  std::vector<std::int64_t> min_key(m, std::numeric_limits<std::int64_t>::max()), cells(m, 0);
  std::vector<char> touches(m, 0);
  for (std::int64_t c = 0; c < grid.cell_count(); ++c) {
    const int r = raw_comp[c];
    if (r < 0) continue;
    min_key[r] = std::min(min_key[r], grid.cell_key(c));
    ++cells[r];
    const auto [i, j, k] = grid.cell_coords(c);
    if (grid.on_outer_layer(i, j, k)) touches[r] = 1;
  }

  // Surfaces: union boundary faces that share an edge and separate the same pair.
  std::vector<std::int64_t> faces;
  for (std::int64_t c = 0; c < grid.cell_count(); ++c)
    for (int a = 0; a < 3; ++a)
      if (detail::is_boundary_face(grid, c, a)) faces.push_back(detail::face_id(c, a));
  auto face_pair = [&](std::int64_t f) {
    const std::int64_t c = f / 3;
    auto ijk = grid.cell_coords(c);
    ijk[f % 3] += 1;
    const std::int64_t n = grid.cell_index(ijk[0], ijk[1], ijk[2]);
    const std::int64_t dom = grid.is_domain(c) ? c : n;
    const std::int64_t con = grid.is_domain(c) ? n : c;
    return std::pair<int, int>{grid.label(con), raw_comp[dom]};
  };
  auto index_of = [&](std::int64_t f) -> int {
    auto it = std::lower_bound(faces.begin(), faces.end(), f);
    return (it != faces.end() && *it == f) ? static_cast<int>(it - faces.begin()) : -1;
  };
  detail::UnionFind uf(faces.size());
  for (std::size_t fi = 0; fi < faces.size(); ++fi) {
    const auto pair = face_pair(faces[fi]);
    detail::face_edges(grid, faces[fi], [&](std::array<int, 3> v, int axis) {
      detail::faces_around_edge(grid, v, axis, [&](std::int64_t g) {
        if (g <= faces[fi]) return;
        const int gi = index_of(g);
        if (gi >= 0 && face_pair(g) == pair) uf.unite(static_cast<int>(fi), gi);
      });
    });
  }
  std::map<int, int> root_to_raw;
  std::vector<SurfaceInfo> raw_surfaces;
  for (std::size_t fi = 0; fi < faces.size(); ++fi) {
    const int r = uf.find(static_cast<int>(fi));
    auto [it, inserted] = root_to_raw.try_emplace(r, static_cast<int>(raw_surfaces.size()));
    if (inserted) {
      SurfaceInfo s;
      std::tie(s.conductor, s.component) = face_pair(faces[fi]);
      s.min_face_key = std::numeric_limits<std::int64_t>::max();
      raw_surfaces.push_back(s);
    }
    auto& s = raw_surfaces[it->second];
    s.faces.push_back(faces[fi]);
    s.min_face_key = std::min(s.min_face_key, detail::face_key(grid, faces[fi]));
  }
  t.N = static_cast<int>(raw_surfaces.size());

  // Exterior (grounded) or box-bounded (zero flux) components.
  const bool grounded = grid.outer_bc() == OuterBc::grounded;
  int raw_exterior = -1;
  for (int r = 0; r < m; ++r)
    if (touches[r] && grounded) raw_exterior = r;

  // Outermost surface of each bounded component: the one enclosing its cells.
  std::vector<std::vector<int>> comp_surfaces(m);
  for (int s = 0; s < t.N; ++s) comp_surfaces[raw_surfaces[s].component].push_back(s);
  auto by_key = [&](int a, int b) { return raw_surfaces[a].min_face_key < raw_surfaces[b].min_face_key; };
  std::vector<int> raw_outermost(m, -1);
  std::vector<std::int64_t> probe(m, -1);
  for (std::int64_t c = 0; c < grid.cell_count(); ++c)
    if (raw_comp[c] >= 0 && probe[raw_comp[c]] < 0) probe[raw_comp[c]] = c;
  for (int r = 0; r < m; ++r) {
    std::sort(comp_surfaces[r].begin(), comp_surfaces[r].end(), by_key);
    if (r == raw_exterior || comp_surfaces[r].empty()) continue;
    if (touches[r]) {
      raw_outermost[r] = comp_surfaces[r].back();  // zero-flux reference surface
      continue;
    }
    int found = -1;
    for (int s : comp_surfaces[r]) {
      if (surface_encloses(grid, raw_surfaces[s], probe[r])) {
        if (found >= 0) throw internal_error("AmbiguousOutermost", "two surfaces enclose one domain component");
        found = s;
      }
    }
    if (found < 0) throw internal_error("AmbiguousOutermost", "no surface encloses a bounded domain component");
    raw_outermost[r] = found;
  }

  // Canonical component order.
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if ((a == raw_exterior) != (b == raw_exterior)) return b == raw_exterior;
    return min_key[a] < min_key[b];
  });
  std::vector<int> comp_new(m);
  for (int i = 0; i < m; ++i) comp_new[order[i]] = i;

  std::vector<int> surf_new(t.N, -1);
  int next = 0;
  t.components.resize(m);
  for (int i = 0; i < m; ++i) {
    const int r = order[i];
    ComponentInfo& ci = t.components[i];
    ci.id = i;
    ci.exterior = r == raw_exterior;
    ci.box_bounded = touches[r] && !grounded;
    ci.min_cell_key = min_key[r];
    ci.cell_count = cells[r];
    for (int s : comp_surfaces[r])
      if (s != raw_outermost[r]) surf_new[s] = next++;
    if (raw_outermost[r] >= 0) surf_new[raw_outermost[r]] = next++;
  }
  t.surfaces.resize(t.N);
  for (int s = 0; s < t.N; ++s) {
    SurfaceInfo& out = t.surfaces[surf_new[s]];
    out = std::move(raw_surfaces[s]);
    out.id = surf_new[s];
    out.component = comp_new[out.component];
  }
  for (int r = 0; r < m; ++r)
    if (raw_outermost[r] >= 0) {
      t.surfaces[surf_new[raw_outermost[r]]].outermost = true;
      t.components[comp_new[r]].outermost = surf_new[raw_outermost[r]];
    }
  for (const auto& s : t.surfaces) t.components[s.component].surfaces.push_back(s.id);
  if (raw_exterior >= 0) t.exterior_id = comp_new[raw_exterior];

  t.cell_component.assign(raw_comp.size(), -1);
  for (std::size_t c = 0; c < raw_comp.size(); ++c)
    if (raw_comp[c] >= 0) t.cell_component[c] = comp_new[raw_comp[c]];
  return t;
}

struct ConductorInfo {
  int id = 0;
  /// Surface facing the component that contains this conductor; empty when
  /// the conductor is the outermost body of a bounded region.
  std::optional<int> outer_surface;
  std::vector<int> inner_surfaces;
  std::vector<int> cavities;
  int depth = 0;
};

struct CavityMap {
  std::vector<ConductorInfo> conductors;  // index p-1
  std::vector<ComponentInfo> components;
  /// Conductor ids, innermost first.
  std::vector<int> processing_order;
  /// enclosed[s]: surfaces strictly enclosed by outermost surface s.
  std::map<int, std::vector<int>> enclosed;

  const ConductorInfo& conductor(int p) const { return conductors.at(static_cast<std::size_t>(p - 1)); }
};

/// Builds per-conductor cavity lists and verifies that the flood-fill
/// containment relation between outermost surfaces is a strict partial order.
inline CavityMap cavity_map(const Topology& t, const LabeledGrid& grid) {
  CavityMap map;
  map.components = t.components;
  map.conductors.resize(t.P);
  for (int p = 1; p <= t.P; ++p) map.conductors[p - 1].id = p;
  for (const auto& s : t.surfaces) {
    auto& ci = map.conductors.at(s.conductor - 1);
    if (s.outermost) {
      ci.inner_surfaces.push_back(s.id);
      ci.cavities.push_back(s.component);
    } else {
      if (ci.outer_surface)
        throw internal_error("AmbiguousOutermost", "conductor " + std::to_string(s.conductor) +
                                                      " has two outer surfaces");
      ci.outer_surface = s.id;
    }
  }

  // Containment between outermost surfaces (bounded components only).
  for (const auto& comp : t.components) {
    if (!comp.outermost || comp.box_bounded) continue;
    const int r = *comp.outermost;
    const auto reach = detail::reach_from_box(grid, t.surfaces[r].faces);
    std::vector<int> inside;
    for (const auto& s : t.surfaces) {
      if (s.id == r) continue;
      const std::int64_t f = s.faces.front();
      const std::int64_t c = f / 3;
      auto ijk = grid.cell_coords(c);
      ijk[f % 3] += 1;
      const std::int64_t n = grid.cell_index(ijk[0], ijk[1], ijk[2]);
      if (!reach[grid.is_domain(c) ? c : n]) inside.push_back(s.id);
    }
    map.enclosed[r] = inside;
  }
  for (const auto& [r, inside] : map.enclosed)
    for (int s : inside) {
      auto it = map.enclosed.find(s);
      if (it != map.enclosed.end() && std::count(it->second.begin(), it->second.end(), r))
        throw internal_error("AmbiguousOutermost", "containment between surfaces is cyclic");
    }

  // Depth: number of conductors walking outward through enclosing components.
  std::vector<int> owner(t.components.size(), 0);
  for (const auto& comp : t.components)
    if (comp.outermost) owner[comp.id] = t.surfaces[*comp.outermost].conductor;
  for (auto& ci : map.conductors) {
    int depth = 0, p = ci.id;
    for (int guard = 0; guard <= t.P; ++guard) {
      const auto& cur = map.conductors[p - 1];
      if (!cur.outer_surface) break;
      const int comp = t.surfaces[*cur.outer_surface].component;
      if (owner[comp] == 0) break;
      if (t.components[comp].box_bounded) break;
      p = owner[comp];
      ++depth;
    }
    ci.depth = depth;
  }
  map.processing_order.resize(t.P);
  std::iota(map.processing_order.begin(), map.processing_order.end(), 1);
  std::stable_sort(map.processing_order.begin(), map.processing_order.end(),
                   [&](int a, int b) { return map.conductors[a - 1].depth > map.conductors[b - 1].depth; });
  return map;
}

struct TreeEdge {
  int u = 0;  // 0 is the infinity vertex
  int v = 0;
  int component = 0;
  friend bool operator==(const TreeEdge&, const TreeEdge&) = default;
};

struct ConductorTree {
  bool has_infinity = true;
  int conductor_count = 0;
  std::vector<TreeEdge> edges;
};

/// Edges join the owner of each bounded component's outermost surface to the
/// other conductors on that component, and infinity to every conductor on the
/// exterior. Without an exterior (fully enclosed or zero-flux box) there is no
/// infinity vertex and the tree has P-1 edges.
inline ConductorTree build_conductor_tree(const Topology& t, const CavityMap& c) {
  (void)c;
  ConductorTree tree;
  tree.conductor_count = t.P;
  tree.has_infinity = t.exterior_id.has_value();
  std::set<std::pair<int, int>> seen;
  for (const auto& comp : t.components) {
    int hub = -1;
    if (comp.exterior) hub = 0;
    else if (comp.outermost) hub = t.surfaces[*comp.outermost].conductor;
    if (hub < 0) continue;
    for (int s : comp.surfaces) {
      const int p = t.surfaces[s].conductor;
      if (p == hub) continue;
      if (seen.insert({std::min(hub, p), std::max(hub, p)}).second) tree.edges.push_back({hub, p, comp.id});
    }
  }
  const int vertices = t.P + (tree.has_infinity ? 1 : 0);
  const int expected = std::max(0, vertices - 1);
  detail::UnionFind uf(static_cast<std::size_t>(t.P) + 1);
  bool cycle = false;
  for (const auto& e : tree.edges) cycle |= !uf.unite(e.u, e.v);
  if (cycle || static_cast<int>(tree.edges.size()) != expected)
    throw internal_error("NotATree", "conductor graph has " + std::to_string(tree.edges.size()) + " edges, expected " +
                                         std::to_string(expected));
  return tree;
}

// JSON form of the combinatorial data (faces are omitted).

inline nlohmann::json topology_json(const Topology& t, const CavityMap& c, const ConductorTree& tree) {
  using nlohmann::json;
  json j;
  j["M"] = t.M;
  j["N"] = t.N;
  j["P"] = t.P;
  j["euler_identity"] = euler_check(t);
  j["outer_bc"] = to_string(t.outer_bc);
  j["exterior_id"] = t.exterior_id ? json(*t.exterior_id) : json(nullptr);
  json comps = json::array();
  for (const auto& comp : t.components) {
    comps.push_back({{"id", comp.id},
                     {"exterior", comp.exterior},
                     {"box_bounded", comp.box_bounded},
                     {"cells", comp.cell_count},
                     {"surfaces", comp.surfaces},
                     {"outermost", comp.outermost ? json(*comp.outermost) : json(nullptr)}});
  }
  j["components"] = comps;
  json surfs = json::array();
  for (const auto& s : t.surfaces)
    surfs.push_back({{"id", s.id},
                     {"conductor", s.conductor},
                     {"component", s.component},
                     {"outermost", s.outermost},
                     {"faces", s.faces.size()}});
  j["surfaces"] = surfs;
  json conds = json::array();
  for (const auto& ci : c.conductors)
    conds.push_back({{"id", ci.id},
                     {"outer_surface", ci.outer_surface ? json(*ci.outer_surface) : json(nullptr)},
                     {"inner_surfaces", ci.inner_surfaces},
                     {"cavities", ci.cavities},
                     {"depth", ci.depth}});
  j["conductors"] = conds;
  j["processing_order"] = c.processing_order;
  json edges = json::array();
  for (const auto& e : tree.edges)
    edges.push_back({{"from", e.u == 0 ? json("inf") : json(e.u)}, {"to", e.v}, {"component", e.component}});
  j["tree"] = {{"has_infinity", tree.has_infinity}, {"edges", edges}};
  return j;
}

/// Rebuilds the face-free topology and cavity map from `topology_json` output.
inline std::pair<Topology, CavityMap> topology_from_json(const nlohmann::json& j) {
  try {
    Topology t;
    t.M = j.at("M").get<int>();
    t.N = j.at("N").get<int>();
    t.P = j.at("P").get<int>();
    t.outer_bc = j.value("outer_bc", std::string("grounded")) == "zero_flux" ? OuterBc::zero_flux : OuterBc::grounded;
    if (!j.at("exterior_id").is_null()) t.exterior_id = j.at("exterior_id").get<int>();
    for (const auto& cj : j.at("components")) {
      ComponentInfo ci;
      ci.id = cj.at("id").get<int>();
      ci.exterior = cj.at("exterior").get<bool>();
      ci.box_bounded = cj.value("box_bounded", false);
      ci.cell_count = cj.value("cells", std::int64_t{0});
      ci.surfaces = cj.at("surfaces").get<std::vector<int>>();
      if (!cj.at("outermost").is_null()) ci.outermost = cj.at("outermost").get<int>();
      t.components.push_back(ci);
    }
    for (const auto& sj : j.at("surfaces")) {
      SurfaceInfo s;
      s.id = sj.at("id").get<int>();
      s.conductor = sj.at("conductor").get<int>();
      s.component = sj.at("component").get<int>();
      s.outermost = sj.at("outermost").get<bool>();
      t.surfaces.push_back(s);
    }
    CavityMap c;
    c.components = t.components;
    for (const auto& pj : j.at("conductors")) {
      ConductorInfo ci;
      ci.id = pj.at("id").get<int>();
      if (!pj.at("outer_surface").is_null()) ci.outer_surface = pj.at("outer_surface").get<int>();
      ci.inner_surfaces = pj.at("inner_surfaces").get<std::vector<int>>();
      ci.cavities = pj.at("cavities").get<std::vector<int>>();
      ci.depth = pj.value("depth", 0);
      c.conductors.push_back(ci);
    }
    c.processing_order = j.at("processing_order").get<std::vector<int>>();
    if (static_cast<int>(t.surfaces.size()) != t.N || static_cast<int>(t.components.size()) != t.M ||
        static_cast<int>(c.conductors.size()) != t.P)
      throw input_error("InvalidTopology", "topology counts do not match the listed entries");
    return {std::move(t), std::move(c)};
  } catch (const nlohmann::json::exception& e) {
    throw input_error("InvalidTopology", std::string("malformed topology JSON: ") + e.what());
  }
}

}  // namespace capmat
