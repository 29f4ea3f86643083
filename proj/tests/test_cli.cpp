#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "dwr/binary_io.hpp"
#include "test_util.hpp"

namespace {

struct RunResult {
  int status = -1;
  std::string out;
  std::string err;
};

RunResult run(const dwr::test::TempDir& dir, const std::string& args) {
  const auto out = dir / "stdout.txt";
  const auto err = dir / "stderr.txt";
  const std::string cmd = "cd '" + dir.path().string() + "' && '" DWR_CLI_PATH "' " + args + " >'" +
                          out.string() + "' 2>'" + err.string() + "'";
  const int raw = std::system(cmd.c_str());
  RunResult r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = dwr::read_file(out);
  r.err = dwr::read_file(err);
  return r;
}

}  // namespace

TEST(Cli, FitStatsOnThreeClicks) {
  dwr::test::TempDir dir;
  dwr::test::write_text(dir / "log.csv", "u1,i1,10,1,3\nu2,i1,11,1,9\nu1,i2,12,1,27\nu3,i2,13,0,0\n");
  auto r = run(dir, "fit-stats --log log.csv --out stats.json");
  ASSERT_EQ(r.status, 0) << r.err;
  auto stats = nlohmann::json::parse(dwr::read_file(dir / "stats.json"));
  EXPECT_EQ(stats.at("n"), 3);
  EXPECT_NEAR(stats.at("mu").get<double>(), std::log(9.0), 1e-12);
  auto summary = nlohmann::json::parse(r.out);
  EXPECT_EQ(summary.at("command"), "fit-stats");
}

TEST(Cli, LabelWithMissingProfiles) {
  dwr::test::TempDir dir;
  dwr::test::write_text(dir / "log.csv", "u1,i1,10,1,3\nu2,i1,11,1,9\n");
  ASSERT_EQ(run(dir, "fit-stats --log log.csv --out stats.json").status, 0);
  auto r = run(dir, "label --log log.csv --stats stats.json --profiles missing.bin --out labeled.csv");
  EXPECT_EQ(r.status, 1);
  EXPECT_EQ(r.err.rfind("error missing-input:profiles: ", 0), 0u) << r.err;
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
  EXPECT_FALSE(std::filesystem::exists(dir / "labeled.csv"));
}

TEST(Cli, ParseErrorIsValidationFailure) {
  dwr::test::TempDir dir;
  dwr::test::write_text(dir / "log.csv", "u1,i1,10,0,3\n");
  auto r = run(dir, "fit-stats --log log.csv");
  EXPECT_EQ(r.status, 1);
  EXPECT_EQ(r.err.rfind("error dwell-without-click:", 0), 0u) << r.err;
}

TEST(Cli, UsageErrors) {
  dwr::test::TempDir dir;
  EXPECT_EQ(run(dir, "").status, 1);
  EXPECT_EQ(run(dir, "train --labeled x.csv").status, 1);
  EXPECT_EQ(run(dir, "train --labeled x.csv --out m.bin --objective bogus").status, 1);
}

TEST(Cli, VersionListsFormats) {
  dwr::test::TempDir dir;
  auto r = run(dir, "--version");
  ASSERT_EQ(r.status, 0);
  auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("formats").at("profile_store").at("magic"), "VRPF");
  EXPECT_EQ(j.at("formats").at("checkpoint").at("version"), 1);
  EXPECT_TRUE(j.contains("artifact_version"));
}

TEST(Cli, FullPipelineSmoke) {
  dwr::test::TempDir dir;
  dwr::test::write_text(dir / "sim.cfg", "n_users = 120\nn_items = 60\n");
  ASSERT_EQ(run(dir, "simulate --sim-config sim.cfg --seed 5 --out log.csv --sidecar side.csv").status, 0);
  ASSERT_EQ(run(dir, "fit-stats --log log.csv --out stats.json").status, 0);
  ASSERT_EQ(run(dir, "stats-report --log log.csv --bins 20 --out hist.csv").status, 0);
  ASSERT_EQ(run(dir, "build-profiles --log log.csv --seed 5 --out profiles.bin").status, 0);
  ASSERT_EQ(run(dir, "label --log log.csv --stats stats.json --profiles profiles.bin --out labeled.csv "
                     "--report composition.json").status, 0);
  ASSERT_EQ(run(dir, "ndt-params --stats stats.json --mode solved --out ndt.json").status, 0);
  auto tr = run(dir, "train --labeled labeled.csv --ndt ndt.json --seed 5 --epochs 2 --out model.bin --trace trace.csv");
  ASSERT_EQ(tr.status, 0) << tr.err;
  ASSERT_EQ(run(dir, "train --labeled labeled.csv --objective single_ctr --seed 5 --epochs 2 --out base.bin").status, 0);
  auto ev = run(dir, "eval --labeled labeled.csv --model model.bin --out eval.json");
  ASSERT_EQ(ev.status, 0) << ev.err;
  auto report = nlohmann::json::parse(dwr::read_file(dir / "eval.json"));
  EXPECT_TRUE(std::isfinite(report.at("auc").get<double>()));
  EXPECT_GT(report.at("n_pos").get<int>(), 0);
  ASSERT_EQ(run(dir, "migrate-report --baseline log.csv --treatment log.csv --out mig.csv --percent").status, 0);

  auto hist = dwr::read_file(dir / "hist.csv");
  EXPECT_EQ(hist.rfind("bin_center,count\n", 0), 0u);
  auto trace = dwr::read_file(dir / "trace.csv");
  EXPECT_EQ(trace.rfind("epoch,L_v,L_w,L\n0,", 0), 0u);
  auto ndt = nlohmann::json::parse(dwr::read_file(dir / "ndt.json"));
  EXPECT_EQ(ndt.at("selected"), "solved");
  EXPECT_TRUE(ndt.contains("paper_default"));
  auto mig = dwr::read_file(dir / "mig.csv");
  EXPECT_EQ(std::count(mig.begin(), mig.end(), '\n'), 71);

  // no command mutates its inputs; reruns are byte-identical
  const auto log_before = dwr::read_file(dir / "log.csv");
  const auto model_before = dwr::read_file(dir / "model.bin");
  ASSERT_EQ(run(dir, "train --labeled labeled.csv --ndt ndt.json --seed 5 --epochs 2 --out model.bin --trace trace.csv").status, 0);
  EXPECT_EQ(dwr::read_file(dir / "model.bin"), model_before);
  EXPECT_EQ(dwr::read_file(dir / "log.csv"), log_before);

  auto with_base = run(dir, "eval --labeled labeled.csv --model model.bin --baseline-model base.bin");
  ASSERT_EQ(with_base.status, 0) << with_base.err;
}

TEST(Cli, ConfigFileWithFlagPrecedence) {
  dwr::test::TempDir dir;
  dwr::test::write_text(dir / "log.csv", "u1,i1,10,1,3\nu2,i1,11,1,9\nu1,i2,12,1,27\n");
  dwr::test::write_text(dir / "pipeline.ini", "[stats-report]\nbins = 3\nout = \"from_config.csv\"\n");
  ASSERT_EQ(run(dir, "--config pipeline.ini stats-report --log log.csv").status, 0);
  auto csv = dwr::read_file(dir / "from_config.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  ASSERT_EQ(run(dir, "--config pipeline.ini stats-report --log log.csv --bins 2").status, 0);
  csv = dwr::read_file(dir / "from_config.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}
