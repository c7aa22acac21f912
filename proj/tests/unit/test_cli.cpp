/*
 * Copyright 2026 The rmtlab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include "rmtlab/cli.hpp"

using namespace rmtlab;
using namespace rmtlab::cli;
namespace fs = std::filesystem;

namespace {

const double kPi = std::numbers::pi;

fs::path fresh_dir(const std::string& tag) {
  static int counter = 0;
  const fs::path d = fs::temp_directory_path() /
                     ("rmtlab_cli_test_" + std::to_string(::getpid()) + "_" + tag + "_" + std::to_string(counter++));
  fs::remove_all(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::string& content(const Outputs& out, const std::string& name) {
  for (const auto& [n, c] : out.files) {
    if (n == name) return c;
  }
  throw std::out_of_range(name);
}

json report(const Outputs& out) { return json::parse(content(out, "report.json")); }

int run_quiet(const std::string& cmd, const json& cfg, const fs::path& dir, std::size_t workers = 1) {
  std::ostringstream log;
  return run_command(cmd, cfg, RunContext{dir, workers, &log});
}

json three_quantities_config(const std::string& law) {
  return {{"p", 40}, {"n", 80}, {"law", law}, {"replications", 60}, {"seed", 5},
          {"grid.t_pairs", {{{0.0}, {0.0}}, {{0.0}, {kPi / 2}}, {{kPi / 2}, {kPi / 2}}}},
          {"grid.sigma", {1.0}}};
}

}  // namespace

TEST(CliLaw, GoldenRatioAndAtom) {
  const auto out = cmd_law({{"y", {1.0, 2.0}}, {"sigma", {1.0}}}, {});
  const json j = json::parse(content(out, "law.json"));
  bool saw_m = false, saw_atom = false;
  for (const auto& row : j["rows"]) {
    const double y = row["y"];
    if (row["quantity"] == "m" && y == 1.0) {
      EXPECT_NEAR(row["value"][0].get<double>(), (std::sqrt(5.0) - 1) / 2, 1e-14);
      saw_m = true;
    }
    if (row["quantity"] == "atom" && y == 2.0) {
      EXPECT_DOUBLE_EQ(row["value"][0].get<double>(), 0.5);
      saw_atom = true;
    }
  }
  EXPECT_TRUE(saw_m && saw_atom);
  EXPECT_EQ(content(out, "law.csv").rfind("#schema=rmtlab.law/1\n", 0), 0u);
}

TEST(CliLaw, RejectsRealZInsideSupport) {
  EXPECT_THROW(cmd_law({{"y", 1.0}, {"z", {{1.0, 0.0}}}}, {}), config_error);
}

TEST(CliConfig, UnknownKeyExitsTwoWithoutOutput) {
  const auto dir = fresh_dir("unknown");
  EXPECT_EQ(run_quiet("law", {{"y", 0.5}, {"bogus", 1}}, dir), kConfigError);
  EXPECT_FALSE(fs::exists(dir));
}

TEST(CliConfig, MalformedValuesExitTwo) {
  const auto dir = fresh_dir("malformed");
  EXPECT_EQ(run_quiet("law", {{"y", "half"}}, dir), kConfigError);
  EXPECT_EQ(run_quiet("law", {{"y", -1.0}}, dir), kConfigError);
  EXPECT_EQ(run_quiet("kernel", {{"y", 0.5}, {"sigma", {1.0}}, {"forms", {"Nope"}}}, dir), kConfigError);
  EXPECT_EQ(run_quiet("nonsense", json::object(), dir), kConfigError);
  EXPECT_EQ(run_quiet("law", {{"y", 0.5}, {"workers", 0}}, dir), kConfigError);
  EXPECT_FALSE(fs::exists(dir));
}

TEST(CliKernel, SymmetricWithRatioColumn) {
  const auto out = cmd_kernel({{"y", 0.5}, {"sigma", {0.5, 2.0}}, {"psd.grids", 2}, {"psd.max_points", 6}}, {});
  std::istringstream csv(content(out, "kernel.csv"));
  std::string line;
  std::getline(csv, line);  // schema
  std::getline(csv, line);  // header
  std::vector<std::string> header;
  {
    std::istringstream hs(line);
    for (std::string cell; std::getline(hs, cell, ',');) header.push_back(cell);
  }
  const auto col = [&](const std::string& name) {
    return static_cast<std::size_t>(std::find(header.begin(), header.end(), name) - header.begin());
  };
  std::map<std::pair<double, double>, double> dd;
  while (std::getline(csv, line)) {
    std::vector<double> v;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) v.push_back(std::stod(cell));
    dd[{v[1], v[2]}] = v[col("DividedDifference")];
    EXPECT_NEAR(v[col("dd_over_theorem1")], v[col("theorem1_factor")], 1e-12);
    EXPECT_NEAR(v[col("Section4Derived")], v[col("DividedDifference")], 1e-12);
  }
  ASSERT_EQ(dd.size(), 4u);
  EXPECT_DOUBLE_EQ((dd[{0.5, 2.0}]), (dd[{2.0, 0.5}]));
  const std::string psd = content(out, "kernel_psd.csv");
  EXPECT_NE(psd.find("DividedDifference"), std::string::npos);
}

TEST(CliSimulate, ThreeQuantitiesPredictionsReal) {
  const json rep = report(cmd_simulate(three_quantities_config("real_gaussian"), {}).outputs);
  const double w = w_sigma(1.0, 1.0, AspectRatio(0.5));
  std::map<std::size_t, double> diag;
  for (const auto& e : rep["entries"]) {
    if (e["i"] == e["j"] && e["kind"] == "pseudo") diag[e["i"]] = e["predicted"]["DividedDifference"][0];
  }
  EXPECT_NEAR(diag[0], 2 * w, 1e-12);
  EXPECT_NEAR(diag[1], w, 1e-12);
  EXPECT_NEAR(diag[2], 2 * w, 1e-12);
}

TEST(CliSimulate, ThreeQuantitiesPredictionsComplexHermitian) {
  const json rep = report(cmd_simulate(three_quantities_config("complex_gaussian"), {}).outputs);
  const double w = w_sigma(1.0, 1.0, AspectRatio(0.5));
  std::map<std::size_t, double> diag;
  for (const auto& e : rep["entries"]) {
    if (e["i"] == e["j"] && e["kind"] == "hermitian") diag[e["i"]] = e["predicted"]["DividedDifference"][0];
  }
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(diag[k], w, 1e-12) << k;
}

TEST(CliSimulate, OneReplicationIsAConfigError) {
  json cfg = three_quantities_config("real_gaussian");
  cfg["replications"] = 1;
  const auto dir = fresh_dir("r1");
  EXPECT_EQ(run_quiet("simulate", cfg, dir), kConfigError);
  EXPECT_FALSE(fs::exists(dir));
}

TEST(CliSimulate, CaseMustMatchLaw) {
  json cfg = three_quantities_config("real_gaussian");
  cfg["case"] = "complex";
  EXPECT_THROW(cmd_simulate(cfg, {}), config_error);
}

TEST(CliSimulate, ByteIdenticalAcrossWorkers) {
  const json cfg = three_quantities_config("real_gaussian");
  const auto a = fresh_dir("w1");
  const auto b = fresh_dir("w8");
  ASSERT_EQ(run_quiet("simulate", cfg, a, 1), kSuccess);
  ASSERT_EQ(run_quiet("simulate", cfg, b, 8), kSuccess);
  for (const char* f : {"statistics.csv", "comparison.csv", "report.json"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(CliSimulate, ManifestRerunReproduces) {
  const auto a = fresh_dir("first");
  const auto b = fresh_dir("rerun");
  ASSERT_EQ(run_quiet("simulate", three_quantities_config("complex_gaussian"), a), kSuccess);
  const json manifest = json::parse(slurp(a / "manifest.json"));
  EXPECT_EQ(manifest["command"], "simulate");
  EXPECT_EQ(manifest["seeds"]["seed"], 5);
  ASSERT_EQ(run_quiet("simulate", load_config(a / "manifest.json", true), b), kSuccess);
  EXPECT_EQ(slurp(a / "statistics.csv"), slurp(b / "statistics.csv"));
  EXPECT_EQ(slurp(a / "comparison.csv"), slurp(b / "comparison.csv"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(CliSimulate, TightGateExitsOne) {
  json cfg = three_quantities_config("real_gaussian");
  cfg["gate.z_threshold"] = 1e-9;
  const auto dir = fresh_dir("gate");
  EXPECT_EQ(run_quiet("simulate", cfg, dir), kGateFailure);
  // outputs are still written so the failure can be inspected
  EXPECT_TRUE(fs::exists(dir / "report.json"));
  fs::remove_all(dir);
}

TEST(CliLss, RoutesAgreeAndPredictionScales) {
  json cfg{{"p", 40}, {"n", 80}, {"replications", 40}, {"f", {0.0, 1.0}}, {"g", {0.0, 0.0, 1.0}},
           {"u", {{0.0}, {0.0}}}, {"v", {{0.0}, {0.0}}}};
  const json rep = report(cmd_lss(cfg, {}).outputs);
  EXPECT_LT(rep["max_contour_direct_abs_diff"].get<double>(), 1e-6);
  for (const auto& e : rep["entries"]) {
    if (e["i"] == 0 && e["j"] == 0) {
      // theta multiplier 2 times Var-limit y for f(x) = x
      EXPECT_NEAR(e["predicted_direct"].get<double>(), 2 * 0.5, 1e-9);
    }
  }
}

TEST(CliLss, RejectsDegreeAboveSixteen) {
  json cfg{{"p", 20}, {"n", 40}, {"replications", 4}, {"f", std::vector<double>(18, 1.0)}};
  EXPECT_THROW(cmd_lss(cfg, {}), config_error);
}

TEST(CliGp, ComplexSinglePointVariance) {
  json cfg{{"y", 0.5}, {"case", "complex"}, {"grid.t_pairs", {{{0.0}, {0.0}}}}, {"grid.sigma", {1.0}},
           {"samples", 20000}, {"seed", 3}};
  const json rep = report(cmd_gp(cfg, {}));
  const auto& e = rep["entries"][0];
  EXPECT_NEAR(e["kernel"].get<double>(), w_sigma(1.0, 1.0, AspectRatio(0.5)), 1e-14);
  EXPECT_LT(std::abs(e["z"].get<double>()), 5.0);
  EXPECT_EQ(rep["jitter"].get<double>(), 0.0);
}

#ifdef RMTLAB_CLI_PATH
TEST(CliBinary, ExitCodes) {
  const auto dir = fresh_dir("bin");
  fs::create_directories(dir);
  {
    std::ofstream(dir / "good.json") << R"({"y": [0.5], "sigma": [1.0]})";
    std::ofstream(dir / "bad.json") << R"({"y": [0.5], "what": 1})";
  }
  const std::string bin = RMTLAB_CLI_PATH;
  const auto sh = [&](const std::string& args) {
    const int rc = std::system((bin + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  };
  EXPECT_EQ(sh("law -c " + (dir / "good.json").string() + " -o " + (dir / "out").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "law.csv"));
  EXPECT_EQ(sh("law -c " + (dir / "bad.json").string() + " -o " + (dir / "out2").string()), 2);
  EXPECT_FALSE(fs::exists(dir / "out2"));
  EXPECT_EQ(sh("law --no-such-flag"), 2);
  fs::remove_all(dir);
}
#endif
