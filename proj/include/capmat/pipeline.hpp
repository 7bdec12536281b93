#pragma once

#include <string>
#include <vector>

#include "capmatrix.hpp"
#include "dielectric.hpp"
#include "grid.hpp"
#include "network.hpp"
#include "regularize.hpp"
#include "scene.hpp"
#include "solver.hpp"
#include "topology.hpp"

namespace capmat {

struct PipelineOptions {
  int resolution = 48;
  double tol = 1e-10;
  int jobs = 0;  // 0: automatic
};

/// Everything computed for one scene; matrices are in farads.
struct SceneSolution {
  Scene scene;
  LabeledGrid grid;
  ValidationReport validation;
  BoundsReport bounds;
  Topology topology;
  CavityMap cavities;
  ConductorTree tree;
  DiscreteOperator op;
  std::vector<PotentialField> potentials;
  CapacitanceMatrix flux;
  CapacitanceMatrix energy;
};

/// Grid, validation and topology only (no solves).
inline SceneSolution analyze_scene(const Scene& scene, int resolution) {
  SceneSolution s;
  s.scene = scene;
  s.grid = voxelize(scene, resolution);
  s.validation = validate_basic(s.grid);
  if (!s.validation.passed()) {
    for (const auto& c : s.validation.conditions)
      if (!c.passed) throw input_error("InvalidDomain", "condition " + std::to_string(c.condition) + " fails: " + c.detail);
  }
  s.bounds = validate_bounds(scene.dielectric, s.grid);
  if (!s.bounds.passed) throw input_error("InvalidDielectric", "permittivity violates symmetry or [1, kappa] bounds");
  s.topology = label_components(s.grid);
  s.cavities = cavity_map(s.topology, s.grid);
  s.tree = build_conductor_tree(s.topology, s.cavities);
  return s;
}

inline SceneSolution solve_scene(const Scene& scene, const PipelineOptions& opt = {}) {
  SceneSolution s = analyze_scene(scene, opt.resolution);
  s.op = assemble(s.grid, scene.dielectric, s.topology);
  SolveOptions so;
  so.tol = opt.tol;
  s.potentials = auxiliary_potentials(s.op, s.topology, so, opt.jobs);
  s.flux = assemble_flux(s.potentials, s.op, s.topology);
  s.energy = assemble_energy(s.potentials, s.op, s.topology);
  return s;
}

/// Reaction charge of every surface for a field, summed per conductor.
inline std::vector<double> conductor_charges(const SceneSolution& s, const PotentialField& field) {
  std::vector<double> q(static_cast<std::size_t>(s.topology.P), 0.0);
  for (const auto& surf : s.topology.surfaces) q[surf.conductor - 1] += surface_charge(field, s.op, surf.id);
  return q;
}

/// Physical field for conductor potentials phi (index p-1) and phi_inf.
inline PotentialField conductor_field(const SceneSolution& s, const std::vector<double>& phi, double phi_inf) {
  std::vector<double> per_surface;
  for (const auto& surf : s.topology.surfaces) per_surface.push_back(phi.at(surf.conductor - 1));
  return superpose(s.potentials, per_surface, phi_inf);
}

/// Joins conductors a and b (1-based ids) of a solved scene at potentials
/// phi (relative to infinity) and re-solves with the reduced matrix.
inline ExchangeResult merge_and_resolve(const SceneSolution& s, int a, int b, const std::vector<double>& phi) {
  const ReducedMatrix R = reduce_check(s.energy, s.topology, s.cavities);
  const int ra = R.row_of_conductor(a), rb = R.row_of_conductor(b);
  if (ra < 0 || rb < 0) throw input_error("InvalidIndex", "conductor has no row in the reduced matrix");
  Eigen::VectorXd x(R.size());
  for (int r = 0; r < R.size(); ++r) x[r] = phi.at(R.conductor[r] - 1);
  return merge_and_resolve(R.R, ra, rb, x);
}

}  // namespace capmat
