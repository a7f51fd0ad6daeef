// SPDX-License-Identifier: Apache-2.0
// Drives the lanm binary end to end.
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "lanm/commands.hpp"
#include "lanm/config.hpp"
#include "lanm/io.hpp"
#include "test_util.hpp"

using namespace lanm;
using lanm::testing::TempDir;
namespace fs = std::filesystem;
using io::json;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run lanm_cli(const std::string& args, const TempDir& scratch) {
  const fs::path log = scratch / "stdout.txt";
  const std::string cmd = std::string(LANM_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = fs::exists(log) ? io::read_file(log) : "";
  return r;
}

// Small but complete experiment: chain of ell, few segments, short training.
json tiny_config(std::size_t ell, std::size_t epochs = 2) {
  return {{"scm", {{"ell", ell}}},
          {"noise", {{"segments", 5}, {"samples_per_segment", 40}}},
          {"model", {{"hidden", 6}}},
          {"train", {{"epochs", epochs}, {"batch_size", 32}}},
          {"seed", 3}};
}

std::string write_config(const TempDir& dir, const json& j, const std::string& name = "cfg.json") {
  io::write_json(dir / name, j);
  return (dir / name).string();
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST(Config, UnknownKeyRejected) {
  json j = tiny_config(2);
  j["train"]["learning_rate"] = 0.1;
  EXPECT_THROW(config::from_json(j), ConfigError);
  try {
    config::from_json(j);
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.learning_rate"), std::string::npos);
  }
  EXPECT_THROW(config::from_json({{"bogus", 1}}), ConfigError);
  EXPECT_THROW(config::from_json({{"noise", {{"beta_range", {0.0, 1.0}}}}}), ConfigError);
  EXPECT_THROW(config::from_json({{"train", {{"epochs", "many"}}}}), ConfigError);
}

TEST(Config, ResolvedDocumentIsFixedPoint) {
  json j = tiny_config(3);
  j["scm"]["violation_nodes"] = {2};
  j["mixing"] = {{"dim", 5}, {"seed", 17}};
  const json once = config::to_json(config::from_json(j));
  const json twice = config::to_json(config::from_json(once));
  EXPECT_EQ(once, twice);
  EXPECT_EQ(once["scm"]["violation_nodes"], json({2}));
  EXPECT_EQ(once["mixing"]["seed"], 17);
}

TEST(Cli, DryRunWritesNothing) {
  TempDir dir("dry");
  const auto cfg = write_config(dir, tiny_config(2));
  const auto r = lanm_cli("gen --config " + cfg + " --out " + q(dir / "data") + " --dry-run", dir);
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_FALSE(fs::exists(dir / "data"));
}

TEST(Cli, NonEmptyOutputNeedsForce) {
  TempDir dir("force");
  const auto cfg = write_config(dir, tiny_config(2));
  fs::create_directories(dir / "data");
  io::write_file(dir / "data" / "keep.txt", "x");
  auto r = lanm_cli("gen --config " + cfg + " --out " + q(dir / "data"), dir);
  EXPECT_EQ(r.code, 2) << r.out;
  EXPECT_FALSE(fs::exists(dir / "data" / "x.bin"));
  r = lanm_cli("gen --config " + cfg + " --out " + q(dir / "data") + " --force", dir);
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(dir / "data" / "x.bin"));
}

TEST(Cli, DefaultGenAndDeterminism) {
  TempDir dir("gen");
  auto r = lanm_cli("gen --seed 5 --out " + q(dir / "a"), dir);
  ASSERT_EQ(r.code, 0) << r.out;
  const auto a = data::load_dataset(dir / "a");
  EXPECT_EQ(a.rows(), 50000u);
  EXPECT_EQ(a.ell, 2u);
  EXPECT_EQ(a.segments, 50u);
  r = lanm_cli("gen --seed 5 --out " + q(dir / "b"), dir);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(io::read_file(dir / "a" / "x.bin"), io::read_file(dir / "b" / "x.bin"));
  EXPECT_EQ(io::read_file(dir / "a" / "manifest.json"), io::read_file(dir / "b" / "manifest.json"));
  r = lanm_cli("gen --seed 6 --out " + q(dir / "c"), dir);
  EXPECT_NE(io::read_file(dir / "a" / "x.bin"), io::read_file(dir / "c" / "x.bin"));
}

TEST(Cli, TrainEvalTraverse) {
  TempDir dir("pipe");
  const auto cfg = write_config(dir, tiny_config(3));
  ASSERT_EQ(lanm_cli("gen --config " + cfg + " --out " + q(dir / "data"), dir).code, 0);
  auto r = lanm_cli("train --config " + cfg + " --data " + q(dir / "data") + " --out " + q(dir / "run"), dir);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(dir / "run" / "checkpoint" / "manifest.json"));
  EXPECT_EQ(io::read_file(dir / "run" / "log.csv").rfind("epoch,", 0), 0u);

  r = lanm_cli("eval --config " + cfg + " --data " + q(dir / "data") + " --checkpoint " + q(dir / "run") +
                   " --out " + q(dir / "eval"),
               dir);
  ASSERT_EQ(r.code, 0) << r.out;
  const json rep = io::read_json(dir / "eval" / "report.json");
  EXPECT_GE(rep["mpc"].get<double>(), 0.0);
  EXPECT_LE(rep["mpc"].get<double>(), 1.0);
  EXPECT_EQ(rep["nodes"].size(), 3u);
  EXPECT_TRUE(rep["shd"].is_number());
  EXPECT_TRUE(rep["nodes"][0]["rho"].is_null());

  // Forcing the Spearman columns.
  r = lanm_cli("eval --pnl --config " + cfg + " --data " + q(dir / "data") + " --checkpoint " + q(dir / "run") +
                   " --out " + q(dir / "eval_pnl"),
               dir);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(io::read_json(dir / "eval_pnl" / "report.json")["nodes"][0]["rho"].is_number());

  const std::string trav = "traverse --data " + q(dir / "data") + " --checkpoint " + q(dir / "run");
  r = lanm_cli(trav + " --node 1 --steps 1 --out " + q(dir / "t1"), dir);
  ASSERT_EQ(r.code, 0) << r.out;
  const std::string one = io::read_file(dir / "t1" / "traversal.csv");
  EXPECT_EQ(std::count(one.begin(), one.end(), '\n'), 2);
  EXPECT_EQ(lanm_cli(trav + " --node 1 --range 1 1 --out " + q(dir / "t2"), dir).code, 2);
  EXPECT_EQ(lanm_cli(trav + " --node 4 --out " + q(dir / "t3"), dir).code, 2);
}

TEST(Cli, TraversalRespectsCausalOrder) {
  // Library-level: intervening on the last node leaves earlier ones alone,
  // intervening on the first moves the ones downstream.
  model::ModelConfig c;
  c.ell = 3;
  c.u_dim = 4;
  c.x_dim = 3;
  c.hidden = 5;
  const model::LanmModel m(c, 2);
  Tensor z(6, 3), u(6, 4);
  Rng rng(1);
  for (auto& v : z.values()) v = rng.normal();
  for (std::size_t r = 0; r < 6; ++r) u(r, r % 4) = 1.0;
  const auto last = cmd::traverse(m, z, u, 2, {-1.0, 1.0});
  for (const auto& zt : last.z)
    for (std::size_t r = 0; r < 6; ++r) {
      EXPECT_EQ(zt(r, 0), z(r, 0));
      EXPECT_EQ(zt(r, 1), z(r, 1));
    }
  const auto first = cmd::traverse(m, z, u, 0, {-1.0, 1.0});
  double moved = 0.0;
  for (std::size_t r = 0; r < 6; ++r) moved += std::fabs(first.z[0](r, 1) - first.z[1](r, 1));
  EXPECT_GT(moved, 0.0);
  EXPECT_NE(first.delta[0], first.delta[1]);
}

TEST(Cli, EvalRejectsMismatchedCheckpoint) {
  TempDir dir("mismatch");
  const auto c2 = write_config(dir, tiny_config(2), "c2.json");
  const auto c3 = write_config(dir, tiny_config(3), "c3.json");
  ASSERT_EQ(lanm_cli("gen --config " + c2 + " --out " + q(dir / "d2"), dir).code, 0);
  ASSERT_EQ(lanm_cli("gen --config " + c3 + " --out " + q(dir / "d3"), dir).code, 0);
  ASSERT_EQ(lanm_cli("train --config " + c2 + " --data " + q(dir / "d2") + " --out " + q(dir / "r2"), dir).code, 0);
  const auto r = lanm_cli("eval --data " + q(dir / "d3") + " --checkpoint " + q(dir / "r2") + " --out " + q(dir / "e"),
                          dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("does not match"), std::string::npos) << r.out;
}

TEST(Cli, MultiSeedSummary) {
  TempDir dir("multi");
  json j = tiny_config(2);
  j["seeds"] = {1, 2, 3};
  const auto cfg = write_config(dir, j);
  ASSERT_EQ(lanm_cli("gen --config " + cfg + " --out " + q(dir / "data"), dir).code, 0);
  auto r = lanm_cli("train --threads 2 --config " + cfg + " --data " + q(dir / "data") + " --out " + q(dir / "runs"),
                    dir);
  ASSERT_EQ(r.code, 0) << r.out;
  for (int s = 1; s <= 3; ++s) EXPECT_TRUE(fs::exists(dir / "runs" / ("seed-" + std::to_string(s)) / "checkpoint"));
  r = lanm_cli("eval --config " + cfg + " --data " + q(dir / "data") + " --checkpoint " + q(dir / "runs") + " --out " +
                   q(dir / "eval"),
               dir);
  ASSERT_EQ(r.code, 0) << r.out;
  const json rep = io::read_json(dir / "eval" / "report.json");
  ASSERT_EQ(rep["seeds"].size(), 3u);
  double sum = 0.0;
  for (const auto& s : rep["seeds"]) sum += s["mpc"].get<double>();
  EXPECT_NEAR(rep["summary"]["mpc_mean"].get<double>(), sum / 3.0, 1e-12);
  const std::string csv = io::read_file(dir / "eval" / "report.csv");
  EXPECT_EQ(csv.rfind("seed,mpc,shd\n1,", 0), 0u);
  EXPECT_NE(csv.find("\nmean,"), std::string::npos);
}

TEST(Cli, SeedRunsAreReproducible) {
  TempDir dir("repro");
  const auto cfg = write_config(dir, tiny_config(2, 3));
  ASSERT_EQ(lanm_cli("gen --config " + cfg + " --out " + q(dir / "data"), dir).code, 0);
  for (const char* name : {"a", "b"}) {
    ASSERT_EQ(lanm_cli("train --config " + cfg + " --data " + q(dir / "data") + " --out " + q(dir / name), dir).code, 0);
  }
  EXPECT_EQ(io::read_file(dir / "a" / "log.csv"), io::read_file(dir / "b" / "log.csv"));
  for (const auto& e : fs::directory_iterator(dir / "a" / "checkpoint")) {
    const auto other = dir / "b" / "checkpoint" / e.path().filename();
    EXPECT_EQ(io::read_file(e.path()), io::read_file(other)) << e.path();
  }
}

TEST(Cli, ResumeMatchesStraightRun) {
  TempDir dir("resume");
  json j = tiny_config(2, 4);
  const auto c4 = write_config(dir, j, "c4.json");
  j["train"]["epochs"] = 2;
  const auto c2 = write_config(dir, j, "c2.json");
  ASSERT_EQ(lanm_cli("gen --config " + c4 + " --out " + q(dir / "data"), dir).code, 0);
  ASSERT_EQ(lanm_cli("train --config " + c4 + " --data " + q(dir / "data") + " --out " + q(dir / "straight"), dir).code,
            0);
  ASSERT_EQ(lanm_cli("train --config " + c2 + " --data " + q(dir / "data") + " --out " + q(dir / "split"), dir).code, 0);
  const auto r =
      lanm_cli("train --resume --config " + c4 + " --data " + q(dir / "data") + " --out " + q(dir / "split"), dir);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(io::read_file(dir / "straight" / "log.csv"), io::read_file(dir / "split" / "log.csv"));
  for (const auto& e : fs::directory_iterator(dir / "straight" / "checkpoint")) {
    EXPECT_EQ(io::read_file(e.path()), io::read_file(dir / "split" / "checkpoint" / e.path().filename())) << e.path();
  }
  EXPECT_EQ(lanm_cli("train --resume --config " + c4 + " --data " + q(dir / "data") + " --out " + q(dir / "none"), dir)
                .code,
            3);
}

TEST(Cli, CheckLocatesViolation) {
  TempDir dir("check");
  json j = tiny_config(3);
  j["noise"]["certification_segment"] = true;
  auto cfg = write_config(dir, j, "ok.json");
  auto r = lanm_cli("check --config " + cfg + " --out " + q(dir / "ok"), dir);
  ASSERT_EQ(r.code, 0) << r.out;
  json rep = io::read_json(dir / "ok" / "report.json");
  for (const auto& n : rep["iv"]) EXPECT_EQ(n["verdict"], "PASS") << n.dump();
  EXPECT_EQ(rep["jacobian"]["verdict"], "PASS");

  j["scm"]["violation_nodes"] = {2};
  cfg = write_config(dir, j, "bad.json");
  r = lanm_cli("check --config " + cfg + " --out " + q(dir / "bad"), dir);
  ASSERT_EQ(r.code, 0) << r.out;
  rep = io::read_json(dir / "bad" / "report.json");
  EXPECT_EQ(rep["iv"][0]["verdict"], "PASS");
  EXPECT_EQ(rep["iv"][1]["verdict"], "FAIL");
  EXPECT_EQ(rep["iv"][2]["verdict"], "PASS");
  EXPECT_NE(r.out.find("(iv) node 2 FAIL"), std::string::npos) << r.out;
}

TEST(Cli, CheckOnFmriSkipsGroundTruthChecks) {
  TempDir dir("fmri");
  std::ostringstream os;
  os << "day,PRC,PHC,ERC,Sub,CA1,DG\n";
  Rng rng(4);
  for (int d = 0; d < 84; ++d)
    for (int k = 0; k < 3; ++k) {
      os << d;
      for (int c = 0; c < 6; ++c) os << ',' << rng.normal(0.1 * c, 1.0 + 0.05 * (d % 7));
      os << '\n';
    }
  io::write_file(dir / "sig.csv", os.str());
  const auto cfg = write_config(dir, {{"fmri", {{"path", (dir / "sig.csv").string()}}}});
  ASSERT_EQ(lanm_cli("gen --config " + cfg + " --out " + q(dir / "data"), dir).code, 0);
  const auto r = lanm_cli("check --data " + q(dir / "data"), dir);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("notice:"), std::string::npos) << r.out;
  EXPECT_EQ(r.out.find("(iv) node"), std::string::npos) << r.out;
}

TEST(Cli, Counterexample) {
  TempDir dir("ce");
  auto r = lanm_cli("counterexample --seed 2 --out " + q(dir / "a"), dir);
  ASSERT_EQ(r.code, 0) << r.out;
  const json a = io::read_json(dir / "a" / "report.json");
  EXPECT_LT(a["max_abs_x_diff"].get<double>(), 1e-12);
  EXPECT_LT(std::fabs(a["corr_z2_z2prime"].get<double>()), 1.0);
  r = lanm_cli("counterexample --mlp2-constant --seed 2 --out " + q(dir / "b"), dir);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NEAR(std::fabs(io::read_json(dir / "b" / "report.json")["corr_z2_z2prime"].get<double>()), 1.0, 1e-9);
}

TEST(Cli, ExitCodes) {
  TempDir dir("codes");
  EXPECT_EQ(lanm_cli("", dir).code, 2);
  EXPECT_EQ(lanm_cli("frobnicate", dir).code, 2);
  EXPECT_EQ(lanm_cli("gen --config " + q(dir / "missing.json") + " --out " + q(dir / "o"), dir).code, 3);
  io::write_file(dir / "bad.json", "{\"scm\": {\"ell\": 0}}");
  EXPECT_EQ(lanm_cli("gen --config " + q(dir / "bad.json") + " --out " + q(dir / "o"), dir).code, 2);
  EXPECT_EQ(lanm_cli("eval --data " + q(dir / "nowhere") + " --checkpoint " + q(dir.path()) + " --out " + q(dir / "o"), dir)
                .code,
            3);
  EXPECT_EQ(lanm_cli("--help", dir).code, 0);
  EXPECT_EQ(cmd::exit_code_for(NumericError("x")), 4);
  EXPECT_EQ(cmd::exit_code_for(DomainError("x")), 4);
}
