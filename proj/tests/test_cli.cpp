#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "support.hpp"

using capmat::testing::scene_path;
using nlohmann::json;

namespace {

struct Invocation {
  int code = -1;
  std::string out;
};

Invocation run(const std::string& args) {
  const std::string cmd = std::string(CAPMAT_BIN) + " " + args + " 2>/dev/null";
  Invocation r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string temp_file(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("capmat_cli_" + name)).string();
}

std::string write_temp(const std::string& name, const std::string& text) {
  const std::string path = temp_file(name);
  std::ofstream(path) << text;
  return path;
}

/// Solve output for fig6 at 48^3, computed once.
const std::string& fig6_solution() {
  static const std::string path = [] {
    const std::string p = temp_file("fig6_solve.json");
    const Invocation r = run("--deterministic solve " + scene_path("fig6.json") + " --res 48 --tol 1e-13 --out " + p);
    EXPECT_EQ(r.code, 0);
    return p;
  }();
  return path;
}

}  // namespace

TEST(Cli, TopologyReport) {
  const Invocation r = run("--deterministic topo " + scene_path("fig6.json") + " --res 48");
  ASSERT_EQ(r.code, 0);
  const json j = json::parse(r.out);
  EXPECT_EQ(j.at("M"), 3);
  EXPECT_EQ(j.at("N"), 5);
  EXPECT_EQ(j.at("P"), 3);
  EXPECT_TRUE(j.at("euler_identity").get<bool>());
  EXPECT_TRUE(j.at("tree").at("has_infinity").get<bool>());
  EXPECT_EQ(j.at("tree").at("edges").size(), 3u);
  EXPECT_EQ(j.at("version").at("capmat"), capmat::kVersion);
  EXPECT_FALSE(j.contains("timestamp"));
}

TEST(Cli, DeterministicOutputIsIdentical) {
  const std::string args = "--deterministic topo " + scene_path("nest3.json") + " --res 48";
  const Invocation a = run(args), b = run(args);
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  const Invocation c = run("topo " + scene_path("nest3.json") + " --res 48");
  EXPECT_TRUE(json::parse(c.out).contains("timestamp"));
}

TEST(Cli, SolveReduceExchange) {
  std::ifstream in(fig6_solution());
  const json s = json::parse(in);
  const auto& C = s.at("matrix").at("C");
  ASSERT_EQ(C.size(), 5u);
  EXPECT_TRUE(s.at("matrix").at("report").at("passed").get<bool>());
  EXPECT_LE(s.at("flux_energy_agreement").get<double>(), 1e-12);
  const auto& chk = s.at("reduced").at("check").at("R");
  EXPECT_NEAR(chk[0][2].get<double>(), -chk[0][0].get<double>(), 1e-10 * chk[2][2].get<double>());

  const std::string topo = temp_file("fig6_topo.json");
  ASSERT_EQ(run("--deterministic topo " + scene_path("fig6.json") + " --res 48 --out " + topo).code, 0);
  const Invocation red = run("--deterministic reduce " + fig6_solution() + " " + topo + " --kind check");
  ASSERT_EQ(red.code, 0);
  const json rj = json::parse(red.out);
  EXPECT_EQ(rj.at("kind"), "check");
  EXPECT_EQ(rj.at("R"), chk);

  const Invocation ex = run("--deterministic exchange " + fig6_solution() + " --a 1 --b 2 --dphi 1");
  ASSERT_EQ(ex.code, 0);
  const json ej = json::parse(ex.out);
  // K1 and K2 sit in separate cavities of K3: joining them moves charge
  // through the two series capacitances C00 and C22.
  const double a = chk[0][0], b = chk[1][1];
  const double dq = ej.at("delta_q").get<double>();
  EXPECT_GT(dq, 0.0);
  EXPECT_NEAR(dq, a * b / (a + b), 1e-10 * dq);

  const std::string reduced_only = write_temp("fig6_check.json", s.at("reduced").at("check").dump());
  const Invocation ex2 = run("--deterministic exchange " + reduced_only + " --a 1 --b 2 --dphi 1");
  ASSERT_EQ(ex2.code, 0);
  EXPECT_EQ(json::parse(ex2.out).at("delta_q"), ej.at("delta_q"));
  EXPECT_EQ(run("exchange " + fig6_solution() + " --a 1 --b 4 --dphi 1").code, 2);
}

TEST(Cli, ValidatePasses) {
  const Invocation r = run("--deterministic validate " + scene_path("fig6.json") + " --res 48 --tol 1e-14");
  EXPECT_EQ(r.code, 0);
}

TEST(Cli, OracleAndLumped) {
  const Invocation o = run("--deterministic oracle bispherical --a1 1 --a2 1 --b 4");
  ASSERT_EQ(o.code, 0);
  const json j = json::parse(o.out);
  EXPECT_NEAR(j.at("C")[0][0].get<double>(), 1.071821451940973, 1e-13);
  EXPECT_NEAR(j.at("C")[0][1].get<double>(), -0.2692383611374577, 1e-13);

  const Invocation s = run("--deterministic lumped --mode series --c1 1 --c2 3 --delta 1e-9");
  ASSERT_EQ(s.code, 0);
  EXPECT_NEAR(json::parse(s.out).at("effective").get<double>(), 0.75, 1e-9);
  EXPECT_EQ(run("lumped --mode series --c1 1 --c2 2 --delta 0").code, 3);
  EXPECT_EQ(run("lumped --mode parallel --c1 1 --c2 2 --delta 0").code, 3);
  EXPECT_EQ(run("lumped --mode sideways --c1 1 --c2 2 --delta 0.1").code, 2);
}

TEST(Cli, PlateCases) {
  const Invocation b = run("--deterministic plate --case b --layers 2:0.5,4:0.5");
  ASSERT_EQ(b.code, 0);
  EXPECT_NEAR(json::parse(b.out).at("ratio").get<double>(), 8.0 / 3.0, 1e-14);
  const Invocation c = run("--deterministic plate --case c --matrix 3,0,0,0,3,0,0,0,2");
  ASSERT_EQ(c.code, 0);
  EXPECT_DOUBLE_EQ(json::parse(c.out).at("ratio").get<double>(), 2.0);
  EXPECT_EQ(run("plate --case q").code, 2);
}

TEST(Cli, ExitCodesForBadInput) {
  EXPECT_EQ(run("topo /nonexistent/scene.json").code, 2);
  EXPECT_EQ(run("topo " + scene_path("fig6.json") + " --res 4").code, 2);
  EXPECT_EQ(run("solve " + scene_path("fig6.json") + " --tol 0.1").code, 2);
  EXPECT_EQ(run("solve " + scene_path("fig6.json") + " --tol 0").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("topo " + write_temp("broken.json", "{\"domain\": ")).code, 2);
}

TEST(Cli, UnitsOverride) {
  const Invocation r = run("--deterministic --units si oracle bispherical --a1 1 --a2 1 --b 4");
  ASSERT_EQ(r.code, 0);
  const json j = json::parse(r.out);
  EXPECT_EQ(j.at("units"), "F");
  EXPECT_NEAR(j.at("C")[0][0].get<double>(), 1.071821451940973 * capmat::kFourPiEpsilon0, 1e-23);
}
