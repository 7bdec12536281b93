// capmat: command-line front end for the capacitance-matrix library.

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "capmat/capmat.hpp"

using nlohmann::json;
using namespace capmat;

namespace {

enum Exit { kOk = 0, kValidation = 1, kInput = 2, kSolver = 3 };

struct Global {
  bool deterministic = false;
  std::string out;
  std::string units;  // empty: scene setting
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw input_error("FileNotFound", "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw input_error("SyntaxError", path + ": " + e.what());
  }
}

void emit(const Global& g, json doc, const json& config) {
  doc["config"] = config;
  doc["version"] = {{"capmat", kVersion},
                    {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                  std::to_string(EIGEN_MINOR_VERSION)},
                    {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                          std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                          std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                    {"compiler", __VERSION__}};
  if (!g.deterministic) {
    const std::time_t now = std::time(nullptr);
    std::ostringstream ts;
    ts << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ");
    doc["timestamp"] = ts.str();
  }
  const std::string text = doc.dump(2) + "\n";
  if (g.out.empty()) {
    std::cout << text;
  } else {
    std::ofstream f(g.out);
    if (!f) throw input_error("FileNotWritable", "cannot write " + g.out);
    f << text;
  }
}

UnitsMode pick_units(const Global& g, UnitsMode scene_units) {
  if (g.units.empty()) return scene_units;
  if (g.units == "si") return UnitsMode::si;
  if (g.units == "reduced") return UnitsMode::reduced;
  throw input_error("InvalidValue", "--units must be si or reduced");
}

void check_run_config(int res, double tol) {
  if (res < 8 || res > 256) throw input_error("InvalidResolution", "--res must lie in [8, 256]");
  if (!(tol > 0.0 && tol <= 1e-4)) throw input_error("InvalidTolerance", "--tol must lie in (0, 1e-4]");
}

void write_csv(const std::string& path, const Eigen::MatrixXd& C) {
  std::ofstream f(path);
  if (!f) throw input_error("FileNotWritable", "cannot write " + path);
  f << std::setprecision(17);
  for (int i = 0; i < C.rows(); ++i) {
    for (int j = 0; j < C.cols(); ++j) f << (j ? "," : "") << C(i, j);
    f << "\n";
  }
}

json validation_json(const ValidationReport& r) {
  json conds = json::array();
  for (const auto& c : r.conditions)
    conds.push_back({{"condition", c.condition}, {"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  return {{"passed", r.passed()}, {"conditions", conds}};
}

json exchange_json(const ExchangeResult& r) {
  return {{"delta_q", r.delta_q},
          {"phi_before", r.phi_before},
          {"phi_after", r.phi_after},
          {"q_before", r.q_before},
          {"q_after", r.q_after},
          {"effective_capacitance", r.effective_capacitance}};
}

// Accepts a bare topology document or one nested under "topology".
std::pair<Topology, CavityMap> load_topology(const std::string& path) {
  json j = read_json_file(path);
  if (j.contains("topology")) j = j.at("topology");
  return topology_from_json(j);
}

// Accepts a capacitance document or a solve result ("matrix" key).
json matrix_document(const std::string& path) {
  json j = read_json_file(path);
  if (j.contains("matrix")) j = j.at("matrix");
  return j;
}

struct SolveArgs {
  std::string scene;
  int res = 48;
  double tol = 1e-10;
  std::string csv;
  int jobs = 0;
};

json solve_document(const SceneSolution& s, UnitsMode units, const PropertyReport& rep) {
  const CapacitanceMatrix E = s.energy.in_units(units);
  const CapacitanceMatrix F = s.flux.in_units(units);
  json doc;
  doc["topology"] = topology_json(s.topology, s.cavities, s.tree);
  doc["matrix"] = capacitance_json(E, &rep);
  doc["flux_matrix"] = capacitance_json(F);
  const double scale = E.max_abs();
  doc["flux_energy_agreement"] = scale > 0 ? (E.C - F.C).cwiseAbs().maxCoeff() / scale : 0.0;
  json aux = json::array();
  for (const auto& u : s.potentials)
    aux.push_back({{"surface", u.bc_tag}, {"residual", u.residual_norm}, {"iterations", u.iterations}});
  doc["auxiliary"] = aux;
  json charges = json::array();
  for (int i = 0; i < s.topology.N; ++i) {
    json row = json::array();
    for (int j = 0; j < s.topology.N; ++j) row.push_back(F.C(i, j));
    charges.push_back({{"surface", i}, {"charge_per_unit_potential", row}});
  }
  doc["surface_charges"] = charges;
  json reduced;
  for (auto k : {ReducedKind::hat, ReducedKind::tilde, ReducedKind::check})
    reduced[to_string(k)] = reduced_json(reduce(k, E, s.topology, s.cavities));
  doc["reduced"] = reduced;
  return doc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"capmat: capacitance matrices of conductor systems in anisotropic dielectrics"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand
  Global g;
  app.add_flag("--deterministic", g.deterministic, "omit the timestamp so identical runs give identical output");
  app.add_option("--out", g.out, "write JSON here instead of stdout");
  app.add_option("--units", g.units, "override output units: si or reduced");

  // topo
  std::string topo_scene;
  int topo_res = 48;
  auto* topo = app.add_subcommand("topo", "component counts, conductor tree and cavity map");
  topo->add_option("scene", topo_scene, "scene JSON")->required();
  topo->add_option("--res", topo_res, "cells along the longest box axis");

  // solve / validate
  SolveArgs sa;
  auto* solve = app.add_subcommand("solve", "solve the auxiliary problems and assemble the matrices");
  solve->add_option("scene", sa.scene, "scene JSON")->required();
  solve->add_option("--res", sa.res, "cells along the longest box axis");
  solve->add_option("--tol", sa.tol, "CG relative residual");
  solve->add_option("--csv", sa.csv, "also write the capacitance matrix as CSV");
  solve->add_option("--jobs", sa.jobs, "parallel auxiliary solves (CAPMAT_THREADS overrides)");
  SolveArgs va;
  auto* validate = app.add_subcommand("validate", "run the full property suite; exit 1 on any failure");
  validate->add_option("scene", va.scene, "scene JSON")->required();
  validate->add_option("--res", va.res, "cells along the longest box axis");
  validate->add_option("--tol", va.tol, "CG relative residual");

  // reduce
  std::string red_matrix, red_topo, red_kind = "check";
  auto* red = app.add_subcommand("reduce", "regularized matrix with meaning labels");
  red->add_option("matrix", red_matrix, "matrix JSON (or solve output)")->required();
  red->add_option("topology", red_topo, "topology JSON (or topo/solve output)")->required();
  red->add_option("--kind", red_kind, "hat, tilde or check");

  // exchange
  std::string ex_matrix, ex_topo;
  int ex_a = 1, ex_b = 2;
  double ex_dphi = 1.0;
  auto* ex = app.add_subcommand("exchange", "charge exchanged when two conductors are joined");
  ex->add_option("matrix", ex_matrix, "reduced check matrix, capacitance matrix or solve output")->required();
  ex->add_option("--topology", ex_topo, "topology JSON; needed to reduce a full capacitance matrix with cavities");
  ex->add_option("--a", ex_a, "first conductor row (1-based)");
  ex->add_option("--b", ex_b, "second conductor row (1-based)");
  ex->add_option("--dphi", ex_dphi, "phi_a - phi_b in volts");

  // lumped
  std::string lm_mode = "parallel";
  LumpedPair lm;
  auto* lumped = app.add_subcommand("lumped", "parallel or series limits with fringe regulator");
  lumped->add_option("--mode", lm_mode, "parallel or series");
  lumped->add_option("--c1", lm.c1, "first capacitance")->required();
  lumped->add_option("--c2", lm.c2, "second capacitance")->required();
  lumped->add_option("--delta", lm.delta, "fringe regulator delta");

  // plate
  std::string pl_case;
  std::vector<double> pl_samples, pl_matrix;
  std::vector<std::string> pl_layers;
  double pl_eps = 0.0;
  auto* plate = app.add_subcommand("plate", "parallel-plate ratio C11/C0");
  plate->add_option("--case", pl_case, "a, b or c")->required();
  plate->add_option("--epsilon", pl_eps, "constant permittivity (case a)");
  plate->add_option("--eps-samples", pl_samples, "equal-area permittivity samples (case a)")->delimiter(',');
  plate->add_option("--layers", pl_layers, "eps:thickness pairs (case b)")->delimiter(',');
  plate->add_option("--matrix", pl_matrix, "9 tensor entries, row major (case c)")->delimiter(',');

  // oracle
  BisphericalParams bp;
  auto* oracle = app.add_subcommand("oracle", "analytic reference values");
  oracle->require_subcommand(1);
  auto* bisph = oracle->add_subcommand("bispherical", "two-sphere capacitance matrix series");
  bisph->add_option("--a1", bp.a1, "radius of sphere 1 (m)")->required();
  bisph->add_option("--a2", bp.a2, "radius of sphere 2 (m)")->required();
  bisph->add_option("--b", bp.b, "center distance (m)")->required();
  bisph->add_option("--tol", bp.series_tol, "series truncation tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInput;
  }

  try {
    if (*topo) {
      const Scene scene = load_scene(topo_scene);
      if (topo_res < 8 || topo_res > 256) throw input_error("InvalidResolution", "--res must lie in [8, 256]");
      const SceneSolution s = analyze_scene(scene, topo_res);
      json doc = topology_json(s.topology, s.cavities, s.tree);
      doc["validation"] = validation_json(s.validation);
      emit(g, doc, {{"command", "topo"}, {"scene", topo_scene}, {"resolution", topo_res}});
      return kOk;
    }

    if (*solve || *validate) {
      SolveArgs& a = *solve ? sa : va;
      check_run_config(a.res, a.tol);
      const Scene scene = load_scene(a.scene);
      PipelineOptions po{a.res, a.tol, a.jobs};
      const SceneSolution s = solve_scene(scene, po);
      const UnitsMode units = pick_units(g, scene.units);
      const PropertyReport rep = check_properties(s.energy, s.topology, {}, scene.dielectric.is_analytic());
      json doc = solve_document(s, units, rep);
      json config = {{"command", *solve ? "solve" : "validate"},
                     {"scene", a.scene},
                     {"resolution", a.res},
                     {"tol", a.tol},
                     {"units", units == UnitsMode::si ? "si" : "reduced"}};
      if (*solve) {
        if (!sa.csv.empty()) write_csv(sa.csv, s.energy.in_units(units).C);
        emit(g, doc, config);
        return kOk;
      }
      // validate: properties, flux/energy agreement, regularization invariants.
      json failures = json::array();
      for (const auto& c : rep.checks)
        if (!c.passed && !c.advisory) failures.push_back(c.name);
      const double scale = s.energy.max_abs();
      const double agree = scale > 0 ? (s.energy.C - s.flux.C).cwiseAbs().maxCoeff() / scale : 0.0;
      if (agree > 1e-12) failures.push_back("flux_energy_agreement");
      if (!euler_check(s.topology)) failures.push_back("euler_identity");
      const ReducedMatrix hat = reduce_hat(s.energy, s.topology, s.cavities);
      const ReducedMatrix tilde = reduce_tilde(s.energy, s.topology, s.cavities);
      const ReducedMatrix chk = reduce_check(s.energy, s.topology, s.cavities);
      const double d0 = hat.det_value;
      auto rel = [&](double d) { return d0 != 0.0 ? std::abs(d - d0) / std::abs(d0) : std::abs(d); };
      if (rel(tilde.det_value) > 1e-10 || rel(chk.det_value) > 1e-10) failures.push_back("determinant_equality");
      if (chk.R != chk.R.transpose()) failures.push_back("check_symmetry");
      if (hat.size() > 0 && Eigen::LLT<Eigen::MatrixXd>(hat.R).info() != Eigen::Success)
        failures.push_back("hat_positive_definite");
      doc["validation"] = {{"passed", failures.empty()},
                           {"failures", failures},
                           {"flux_energy_agreement", agree},
                           {"determinants", {d0, tilde.det_value, chk.det_value}}};
      emit(g, doc, config);
      return failures.empty() ? kOk : kValidation;
    }

    if (*red) {
      auto [t, c] = load_topology(red_topo);
      const CapacitanceMatrix C = capacitance_from_json(matrix_document(red_matrix), &t);
      const ReducedMatrix r = reduce(parse_reduced_kind(red_kind), C, t, c);
      emit(g, reduced_json(r), {{"command", "reduce"}, {"matrix", red_matrix}, {"topology", red_topo}, {"kind", red_kind}});
      return kOk;
    }

    if (*ex) {
      json m = read_json_file(ex_matrix);
      if (m.contains("reduced"))
        m = m.at("reduced").at("check");
      else if (m.contains("matrix"))
        m = m.at("matrix");
      Eigen::MatrixXd Ccheck;
      if (m.contains("R")) {
        if (m.value("kind", std::string()) != "check") throw input_error("InvalidMatrix", "exchange needs the check matrix");
        Ccheck = matrix_from_json(m.at("R"));
      } else if (!ex_topo.empty()) {
        auto [t, c] = load_topology(ex_topo);
        Ccheck = reduce_check(capacitance_from_json(m, &t), t, c).R;
      } else {
        Ccheck = capacitance_from_json(m).C;
      }
      const int n = static_cast<int>(Ccheck.rows());
      if (ex_a < 1 || ex_b < 1 || ex_a > n || ex_b > n) throw input_error("InvalidIndex", "--a/--b out of range");
      const ExchangeResult r = exchange_charge(Ccheck, ex_a - 1, ex_b - 1, ex_dphi);
      json doc = exchange_json(r);
      if (n == 2) {
        Eigen::Matrix2d C2 = Ccheck;
        if (ex_a > ex_b) C2 = C2.reverse().eval();
        doc["two_conductor_delta_q"] = exchange_two_conductor(C2, ex_dphi);
      }
      emit(g, doc, {{"command", "exchange"}, {"matrix", ex_matrix}, {"a", ex_a}, {"b", ex_b}, {"dphi", ex_dphi}});
      return kOk;
    }

    if (*lumped) {
      json doc;
      if (lm_mode == "parallel") {
        doc = {{"mode", "parallel"}, {"effective", parallel_effective(lm)}, {"limit", lm.c1 + lm.c2}};
      } else if (lm_mode == "series") {
        const SeriesResult r = series_effective(lm);
        doc = {{"mode", "series"}, {"effective", r.value}, {"limit", r.limit}};
      } else {
        throw input_error("InvalidValue", "--mode must be parallel or series");
      }
      emit(g, doc, {{"command", "lumped"}, {"c1", lm.c1}, {"c2", lm.c2}, {"delta", lm.delta}});
      return kOk;
    }

    if (*plate) {
      PlateParams p;
      const PlateCase which = parse_plate_case(pl_case);
      if (pl_eps > 0.0) p.eps_samples = {pl_eps};
      if (!pl_samples.empty()) p.eps_samples = pl_samples;
      for (const auto& l : pl_layers) {
        const auto colon = l.find(':');
        if (colon == std::string::npos) throw input_error("InvalidPlateParams", "layers are eps:thickness pairs");
        try {
          p.layers.push_back({std::stod(l.substr(0, colon)), std::stod(l.substr(colon + 1))});
        } catch (const std::exception&) {
          throw input_error("InvalidPlateParams", "cannot parse layer '" + l + "'");
        }
      }
      if (!pl_matrix.empty()) {
        if (pl_matrix.size() != 9) throw input_error("InvalidPlateParams", "--matrix needs 9 entries");
        Tensor3 t;
        for (int i = 0; i < 9; ++i) t(i / 3, i % 3) = pl_matrix[i];
        p.matrix = t;
      }
      emit(g, {{"case", pl_case}, {"ratio", plate_capacitance(which, p)}}, {{"command", "plate"}, {"case", pl_case}});
      return kOk;
    }

    if (*bisph) {
      const BisphericalResult r = bispherical_matrix(bp);
      const Eigen::Matrix2d eta = bispherical_eta_expansion(bp.a1, bp.a2, bp.b);
      const UnitsMode units = pick_units(g, UnitsMode::reduced);
      const double s = unit_scale(units);
      emit(g,
           {{"units", unit_symbol(units)},
            {"C", matrix_json(r.farads * s)},
            {"xi1", r.xi1},
            {"xi2", r.xi2},
            {"terms", r.terms},
            {"eta", std::sqrt(bp.a1 * bp.a2) / bp.b},
            {"eta_expansion", matrix_json(eta * s)}},
           {{"command", "oracle bispherical"}, {"a1", bp.a1}, {"a2", bp.a2}, {"b", bp.b}, {"tol", bp.series_tol}});
      return kOk;
    }
  } catch (const Error& e) {
    std::cerr << "capmat: " << e.what() << "\n";
    switch (e.kind()) {
      case ErrorKind::input: return kInput;
      case ErrorKind::solver: return kSolver;
      case ErrorKind::validation:
      case ErrorKind::internal: return kValidation;
    }
  } catch (const std::exception& e) {
    std::cerr << "capmat: " << e.what() << "\n";
    return kSolver;
  }
  return kOk;
}
