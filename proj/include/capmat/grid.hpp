#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "common.hpp"
#include "scene.hpp"

namespace capmat {

using Label = std::uint16_t;
inline constexpr Label kDomainLabel = 0;

/// Uniform Cartesian cell grid with one label per cell: 0 for dielectric,
/// p >= 1 for conductor p. Cells are indexed x-fastest.
class LabeledGrid {
public:
  LabeledGrid() = default;
  LabeledGrid(Vec3 origin, double h, std::array<int, 3> dims, OuterBc bc = OuterBc::grounded)
      : origin_(origin), h_(h), dims_(dims), bc_(bc),
        labels_(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2], kDomainLabel) {}

  int nx() const { return dims_[0]; }
  int ny() const { return dims_[1]; }
  int nz() const { return dims_[2]; }
  int dim(int axis) const { return dims_[axis]; }
  const std::array<int, 3>& dims() const { return dims_; }
  double h() const { return h_; }
  const Vec3& origin() const { return origin_; }
  OuterBc outer_bc() const { return bc_; }

  std::int64_t cell_count() const { return static_cast<std::int64_t>(labels_.size()); }
  std::int64_t vertex_count() const {
    return static_cast<std::int64_t>(dims_[0] + 1) * (dims_[1] + 1) * (dims_[2] + 1);
  }

  std::int64_t cell_index(int i, int j, int k) const {
    return i + static_cast<std::int64_t>(dims_[0]) * (j + static_cast<std::int64_t>(dims_[1]) * k);
  }
  std::array<int, 3> cell_coords(std::int64_t c) const {
    const int i = static_cast<int>(c % dims_[0]);
    const std::int64_t r = c / dims_[0];
    return {i, static_cast<int>(r % dims_[1]), static_cast<int>(r / dims_[1])};
  }
  std::int64_t vertex_index(int i, int j, int k) const {
    return i + static_cast<std::int64_t>(dims_[0] + 1) * (j + static_cast<std::int64_t>(dims_[1] + 1) * k);
  }
  std::array<int, 3> vertex_coords(std::int64_t v) const {
    const int i = static_cast<int>(v % (dims_[0] + 1));
    const std::int64_t r = v / (dims_[0] + 1);
    return {i, static_cast<int>(r % (dims_[1] + 1)), static_cast<int>(r / (dims_[1] + 1))};
  }
  bool in_cells(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < dims_[0] && j < dims_[1] && k < dims_[2];
  }
  bool on_outer_layer(int i, int j, int k) const {
    return i == 0 || j == 0 || k == 0 || i == dims_[0] - 1 || j == dims_[1] - 1 || k == dims_[2] - 1;
  }

  Vec3 cell_center(std::int64_t c) const {
    const auto [i, j, k] = cell_coords(c);
    return {origin_.x + (i + 0.5) * h_, origin_.y + (j + 0.5) * h_, origin_.z + (k + 0.5) * h_};
  }

  /// Lexicographic (x, y, z) ordering key, used for canonical numbering.
  std::int64_t cell_key(std::int64_t c) const {
    const auto [i, j, k] = cell_coords(c);
    return (static_cast<std::int64_t>(i) * dims_[1] + j) * dims_[2] + k;
  }

  Label label(std::int64_t c) const { return labels_[static_cast<std::size_t>(c)]; }
  void set_label(std::int64_t c, Label l) { labels_[static_cast<std::size_t>(c)] = l; }
  bool is_domain(std::int64_t c) const { return labels_[static_cast<std::size_t>(c)] == kDomainLabel; }
  const std::vector<Label>& labels() const { return labels_; }

  int max_label() const {
    Label m = 0;
    for (Label l : labels_) m = std::max(m, l);
    return m;
  }

  std::int64_t count_label(Label l) const { return std::count(labels_.begin(), labels_.end(), l); }

  friend bool operator==(const LabeledGrid&, const LabeledGrid&) = default;

private:
  Vec3 origin_;
  double h_ = 1.0;
  std::array<int, 3> dims_{0, 0, 0};
  OuterBc bc_ = OuterBc::grounded;
  std::vector<Label> labels_;
};

inline constexpr std::array<std::array<int, 3>, 6> kFaceNeighbors{
    {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}}};

/// 6-connected components over cells where `member(c)` holds; neighbours join
/// when `same(a, b)`. Returns per-cell component index (-1 outside) and count.
/// Components are numbered in order of their first cell index.
template <class Member, class Same>
std::pair<std::vector<std::int32_t>, int> label_6connected(const LabeledGrid& grid, Member member, Same same) {
  std::vector<std::int32_t> comp(static_cast<std::size_t>(grid.cell_count()), -1);
  std::vector<std::int64_t> stack;
  int count = 0;
  for (std::int64_t seed = 0; seed < grid.cell_count(); ++seed) {
    if (comp[seed] >= 0 || !member(seed)) continue;
    comp[seed] = count;
    stack.push_back(seed);
    while (!stack.empty()) {
      const std::int64_t c = stack.back();
      stack.pop_back();
      const auto [i, j, k] = grid.cell_coords(c);
      for (const auto& d : kFaceNeighbors) {
        const int a = i + d[0], b = j + d[1], e = k + d[2];
        if (!grid.in_cells(a, b, e)) continue;
        const std::int64_t n = grid.cell_index(a, b, e);
        if (comp[n] >= 0 || !member(n) || !same(c, n)) continue;
        comp[n] = count;
        stack.push_back(n);
      }
    }
    ++count;
  }
  return {std::move(comp), count};
}

/// 6-connected components of the dielectric cells.
inline std::pair<std::vector<std::int32_t>, int> domain_components(const LabeledGrid& grid) {
  return label_6connected(
      grid, [&](std::int64_t c) { return grid.is_domain(c); }, [](std::int64_t, std::int64_t) { return true; });
}

namespace detail {

/// Finds a pair of cells with different non-negative tags within Chebyshev
/// distance 2 (fewer than two cells between them). Tags < 0 are ignored.
/// Uses separable running min/max filters over 3-cell windows.
inline std::optional<std::int64_t> find_close_pair(const LabeledGrid& grid, const std::vector<std::int32_t>& tag) {
  constexpr std::int32_t kNone = std::numeric_limits<std::int32_t>::max();
  const std::size_t n = tag.size();
  std::vector<std::int32_t> lo(n), hi(n);
  for (std::size_t c = 0; c < n; ++c) {
    lo[c] = tag[c] >= 0 ? tag[c] : kNone;
    hi[c] = tag[c] >= 0 ? tag[c] : -1;
  }
  std::vector<std::int32_t> lo2(n), hi2(n);
  for (int axis = 0; axis < 3; ++axis) {
    for (std::int64_t c = 0; c < static_cast<std::int64_t>(n); ++c) {
      auto ijk = grid.cell_coords(c);
      std::int32_t l = lo[c], h = hi[c];
      for (int s : {-1, 1}) {
        auto q = ijk;
        q[axis] += s;
        if (!grid.in_cells(q[0], q[1], q[2])) continue;
        const std::int64_t m = grid.cell_index(q[0], q[1], q[2]);
        l = std::min(l, lo[m]);
        h = std::max(h, hi[m]);
      }
      lo2[c] = l;
      hi2[c] = h;
    }
    lo.swap(lo2);
    hi.swap(hi2);
  }
  for (std::size_t c = 0; c < n; ++c)
    if (lo[c] != kNone && hi[c] >= 0 && lo[c] != hi[c]) return static_cast<std::int64_t>(c);
  return std::nullopt;
}

/// Conductor ids (1..ids) that contain no fully same-label 2x2x2 block of
/// cells, i.e. conductors without interior at this resolution.
inline std::vector<int> thin_conductors(const LabeledGrid& grid, int ids) {
  std::vector<char> solid(static_cast<std::size_t>(ids) + 1, 0);
  for (int k = 0; k + 1 < grid.nz(); ++k)
    for (int j = 0; j + 1 < grid.ny(); ++j)
      for (int i = 0; i + 1 < grid.nx(); ++i) {
        const Label l = grid.label(grid.cell_index(i, j, k));
        if (l == kDomainLabel || solid[l]) continue;
        bool full = true;
        for (int d = 1; d < 8 && full; ++d)
          full = grid.label(grid.cell_index(i + (d & 1), j + ((d >> 1) & 1), k + ((d >> 2) & 1))) == l;
        if (full) solid[l] = 1;
      }
  std::vector<int> thin;
  for (int p = 1; p <= ids; ++p)
    if (!solid[p]) thin.push_back(p);
  return thin;
}

inline std::string cell_text(const LabeledGrid& grid, std::int64_t c) {
  const auto [i, j, k] = grid.cell_coords(c);
  return "(" + std::to_string(i) + "," + std::to_string(j) + "," + std::to_string(k) + ")";
}

}  // namespace detail

/// Cells per axis for a cubic cell size h = (largest box extent) / resolution.
inline std::array<int, 3> grid_dims(const Box& box, int resolution, double& h) {
  if (resolution < 8) throw input_error("InvalidResolution", "resolution must be >= 8");
  const double longest = std::max({box.extent(0), box.extent(1), box.extent(2)});
  h = longest / resolution;
  std::array<int, 3> dims{};
  for (int a = 0; a < 3; ++a) {
    const double cells = box.extent(a) / h;
    dims[a] = static_cast<int>(std::lround(cells));
    if (std::abs(cells - dims[a]) > 1e-6 * std::max(1.0, cells))
      throw input_error("InvalidResolution", "domain box extents are not commensurate with cubic cells");
    if (dims[a] < 8) throw input_error("InvalidResolution", "every axis needs at least 8 cells");
  }
  return dims;
}

/// Paints shapes in order by cell-center inclusion (void shapes reset cells to
/// dielectric), then enforces the 2x2x2 thickness and 2-cell separation rules.
inline LabeledGrid voxelize(const Scene& scene, int resolution) {
  double h = 0.0;
  const auto dims = grid_dims(scene.domain_box, resolution, h);
  LabeledGrid grid(scene.domain_box.min, h, dims, scene.outer_bc);
  const Vec3& o = scene.domain_box.min;
  for (const auto& shape : scene.shapes) {
    const Box b = shape.bounds();
    std::array<int, 3> lo{}, hi{};
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::clamp(static_cast<int>(std::floor((b.min[a] - o[a]) / h - 0.5)), 0, dims[a] - 1);
      hi[a] = std::clamp(static_cast<int>(std::ceil((b.max[a] - o[a]) / h - 0.5)), 0, dims[a] - 1);
    }
    const Label value = shape.conductor ? static_cast<Label>(*shape.conductor) : kDomainLabel;
    for (int k = lo[2]; k <= hi[2]; ++k)
      for (int j = lo[1]; j <= hi[1]; ++j)
        for (int i = lo[0]; i <= hi[0]; ++i) {
          const std::int64_t c = grid.cell_index(i, j, k);
          if (shape.contains(grid.cell_center(c))) grid.set_label(c, value);
        }
  }

  const int ids = scene.conductor_count();
  std::vector<std::int64_t> per_id(static_cast<std::size_t>(ids) + 1, 0);
  for (Label l : grid.labels()) ++per_id[l];
  for (int p = 1; p <= ids; ++p)
    if (per_id[p] == 0)
      throw input_error("ConductorTooThin", "conductor " + std::to_string(p) + " covers no cell center");
  const auto thin = detail::thin_conductors(grid, ids);
  if (!thin.empty())
    throw input_error("ConductorTooThin",
                      "conductor " + std::to_string(thin.front()) + " contains no solid block of 2x2x2 cells");
  std::vector<std::int32_t> tag(static_cast<std::size_t>(grid.cell_count()));
  for (std::int64_t c = 0; c < grid.cell_count(); ++c) tag[c] = grid.is_domain(c) ? -1 : grid.label(c);
  if (auto bad = detail::find_close_pair(grid, tag))
    throw input_error("ComponentsTouch", "distinct conductors closer than 2 cells near cell " + detail::cell_text(grid, *bad));
  return grid;
}

struct ConditionResult {
  int condition = 0;
  std::string name;
  bool passed = true;
  std::string detail;
};

struct ValidationReport {
  std::vector<ConditionResult> conditions;
  int domain_components = 0;
  int conductor_components = 0;

  bool passed() const {
    return std::all_of(conditions.begin(), conditions.end(), [](const auto& c) { return c.passed; });
  }
  const ConditionResult& condition(int n) const {
    for (const auto& c : conditions)
      if (c.condition == n) return c;
    throw internal_error("NoSuchCondition", std::to_string(n));
  }
};

/// Grid-level analogue of the five "basic domain" conditions.
inline ValidationReport validate_basic(const LabeledGrid& grid) {
  ValidationReport report;
  auto [dcomp, dcount] = domain_components(grid);
  auto [ccomp, ccount] = label_6connected(
      grid, [&](std::int64_t c) { return !grid.is_domain(c); },
      [&](std::int64_t a, std::int64_t b) { return grid.label(a) == grid.label(b); });
  report.domain_components = dcount;
  report.conductor_components = ccount;

  report.conditions.push_back({1, "finite component counts", true,
                               std::to_string(dcount) + " domain and " + std::to_string(ccount) +
                                   " conductor components"});

  {
    ConditionResult r{2, "bounded or single exterior", true, ""};
    if (grid.outer_bc() == OuterBc::grounded) {
      std::vector<char> touches(static_cast<std::size_t>(dcount), 0);
      bool conductor_on_box = false;
      for (std::int64_t c = 0; c < grid.cell_count(); ++c) {
        const auto [i, j, k] = grid.cell_coords(c);
        if (!grid.on_outer_layer(i, j, k)) continue;
        if (grid.is_domain(c)) touches[dcomp[c]] = 1;
        else conductor_on_box = true;
      }
      const int exterior = static_cast<int>(std::count(touches.begin(), touches.end(), 1));
      if (exterior > 1) {
        r.passed = false;
        r.detail = std::to_string(exterior) + " domain components reach the outer box";
      } else if (exterior == 1 && conductor_on_box) {
        r.passed = false;
        r.detail = "a conductor touches the grounded outer box next to the exterior component";
      } else {
        r.detail = exterior == 1 ? "one exterior component" : "domain bounded";
      }
    } else {
      r.detail = "zero-flux box: every component is bounded";
    }
    report.conditions.push_back(r);
  }

  {
    ConditionResult r{3, "nonempty conductor interiors", true, "every conductor contains a 2x2x2 block"};
    int ids = 0;
    for (Label l : grid.labels()) ids = std::max(ids, static_cast<int>(l));
    std::vector<char> present(static_cast<std::size_t>(ids) + 1, 0);
    for (Label l : grid.labels()) present[l] = 1;
    std::vector<int> thin;
    for (int p : detail::thin_conductors(grid, ids))
      if (present[p]) thin.push_back(p);
    if (!thin.empty()) {
      r.passed = false;
      r.detail = "conductor " + std::to_string(thin.front()) + " contains no solid block of 2x2x2 cells";
    }
    report.conditions.push_back(r);
  }

  {
    ConditionResult r{4, "pairwise disjoint closures", true, "components separated by >= 2 cells"};
    if (auto bad = detail::find_close_pair(grid, ccomp)) {
      r.passed = false;
      r.detail = "conductor components closer than 2 cells near " + detail::cell_text(grid, *bad);
    } else if (auto bad2 = detail::find_close_pair(grid, dcomp)) {
      r.passed = false;
      r.detail = "domain components closer than 2 cells near " + detail::cell_text(grid, *bad2);
    }
    report.conditions.push_back(r);
  }

  report.conditions.push_back({5, "exterior cone condition", true, "satisfied by construction for voxel boundaries"});
  return report;
}

}  // namespace capmat
