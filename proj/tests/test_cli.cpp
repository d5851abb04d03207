#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#ifndef LUMPVOL_CLI
#error "LUMPVOL_CLI must name the command-line binary"
#endif

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(LUMPVOL_CLI) + " " + args + " 2>/dev/null";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t got;
  while ((got = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, got);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

nlohmann::json json_of(const Run& r) { return nlohmann::json::parse(r.out); }

double re(const nlohmann::json& m, int i, int j) { return m[i][j]["re"].get<double>(); }

}  // namespace

TEST(Cli, FormulaText) {
  const auto r = run("formula --r 1 --k 1 --s2 16pi");
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("main_volume = 1/6"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("baptista_volume = 9/128"), std::string::npos) << r.out;
}

TEST(Cli, FormulaJson) {
  const auto r = run("formula --b 1 --r 2 --k 1 --format json");
  ASSERT_EQ(r.code, 0);
  const auto j = json_of(r);
  EXPECT_EQ(j["main_volume"]["exact"], "1/12");
}

TEST(Cli, InvalidDegreeExitsTwo) {
  const auto r = run("formula --r 0 --k 1");
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(json_of(r)["error"]["type"], "InvalidGenusDegree");
  EXPECT_EQ(run("formula --b 3 --r 2 --k 1").code, 2);
  EXPECT_EQ(run("kw-solve --s2 2pi").code, 2);
  EXPECT_EQ(run("metric --r 2 --k 1").code, 2);
  EXPECT_EQ(run("no-such-command").code, 2);
}

TEST(Cli, SingularMapExitsThree) {
  const std::string m =
      R"('{"k":1,"r":1,"coeffs":[[{"re":1,"im":0},{"re":1,"im":0}],[{"re":1,"im":0},{"re":1,"im":0}]]}')";
  const auto r = run("metric --map " + m);
  EXPECT_EQ(r.code, 3);
  EXPECT_EQ(json_of(r)["error"]["type"], "SingularField");
}

TEST(Cli, KwSolveIdentity) {
  const auto r = run("kw-solve --s2 32pi --L 24");
  ASSERT_EQ(r.code, 0);
  const auto j = json_of(r);
  EXPECT_LT(j["residual"].get<double>(), 1e-9);
  EXPECT_LE(j["iterations"].get<int>(), 10);
  EXPECT_NEAR(j["phi_inf_diff"].get<double>(), -std::log(1.0 - 4.0 / 32.0), 1e-10);
}

TEST(Cli, MetricIdentity) {
  const auto r = run("metric --L 16");
  ASSERT_EQ(r.code, 0);
  const auto g = json_of(r)["metric"]["matrix"];
  const double want[3] = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0};
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(re(g, i, k), i == k ? want[i] : 0.0, 1e-8);
}

TEST(Cli, VortexMetricAssembly) {
  const auto r = run("vortex-metric --s2 16pi --L 16 --random --seed 3");
  ASSERT_EQ(r.code, 0);
  const auto j = json_of(r);
  EXPECT_LT(j["assembly_error"].get<double>(), 1e-12);
  EXPECT_GT(j["density_ratio"].get<double>(), 0.0);
}

TEST(Cli, ConvergeIdentityCsv) {
  const auto r = run("converge --L 24");
  ASSERT_EQ(r.code, 0);
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "s2,g_diff,phi_v_diff,phi_inf_diff,slope");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cells.push_back(c);
    if (line.back() == ',') cells.push_back("");
    rows.push_back(cells);
  }
  ASSERT_GE(rows.size(), 5u);
  EXPECT_TRUE(rows[0][4].empty());
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_LT(std::stod(rows[i][1]), std::stod(rows[i - 1][1]));
    EXPECT_LT(std::stod(rows[i][3]), std::stod(rows[i - 1][3]));
  }
  const double last = std::stod(rows.back()[4]);
  EXPECT_GT(last, -2.2);
  EXPECT_LT(last, -1.8);
  const auto js = json_of(run("converge --L 24 --format json"));
  EXPECT_GT(js["slopes"]["phi_inf_diff"].get<double>(), -2.2);
  EXPECT_LT(js["slopes"]["phi_inf_diff"].get<double>(), -1.8);
}

TEST(Cli, MonteCarloThreadIndependent) {
  const auto a = run("mc-volume --n 40 --L 12 --seed 5 --threads 1");
  const auto b = run("mc-volume --n 40 --L 12 --seed 5 --threads 3");
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  const auto j = json_of(a);
  EXPECT_EQ(j["n"], 40);
  EXPECT_EQ(j["seed"], 5);
  const auto v = run("mc-volume --n 6 --L 12 --s2 16pi --threads 2");
  ASSERT_EQ(v.code, 0);
  EXPECT_EQ(json_of(v)["config"]["mode"], "vortex");
}

TEST(Cli, Calibrate) {
  const auto r = run("calibrate --q 1 --n 4000 --seed 2");
  ASSERT_EQ(r.code, 0);
  const auto j = json_of(r);
  EXPECT_NEAR(j["mean"].get<double>(), M_PI, 4.0 * j["stderr"].get<double>());
  EXPECT_NEAR(j["target"].get<double>(), M_PI, 1e-15);
}

TEST(Cli, WritesOutputFile) {
  const std::string path = ::testing::TempDir() + "lumpvol_cli_out.json";
  std::remove(path.c_str());
  ASSERT_EQ(run("formula --r 1 --k 1 --format json --out " + path).code, 0);
  FILE* f = std::fopen(path.c_str(), "r");
  ASSERT_NE(f, nullptr);
  std::fclose(f);
  std::remove(path.c_str());
}
