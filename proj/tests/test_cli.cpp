#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <sys/wait.h>

#include "uavtrack/uavtrack.hpp"

using namespace uavtrack;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
};

RunResult run_cli(const std::string& args) {
  const std::string cmd = std::string(UAVTRACK_CLI_PATH) + " " + args + " 2>/dev/null";
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("uavtrack_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    cfg_.scenario.n_uav = 3;
    cfg_.scenario.m_target = 2;
    cfg_.scenario.horizon = 15;
    cfg_.train.hidden_layers = 1;
    cfg_.train.hidden_units = 8;
    cfg_.train.total_episodes = 2;
    cfg_.train.rollout_len = 15;
    cfg_.experiment.eval_episodes = 2;
    cfg_.experiment.smoothing_window = 2;
    ini_ = (dir_ / "small.ini").string();
    write_text_file(ini_, dump_config(cfg_));
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& rel) const { return (dir_ / rel).string(); }

  fs::path dir_;
  ExperimentConfig cfg_;
  std::string ini_;
};

}  // namespace

TEST_F(Cli, DumpConfigRoundTrips) {
  const RunResult r = run_cli("dump-config --config " + ini_);
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(r.out, dump_config(cfg_));
  EXPECT_EQ(run_cli("dump-config").out, dump_config(ExperimentConfig{}));
}

TEST_F(Cli, TrainMatchesLibraryAndIsReproducible) {
  const RunResult r = run_cli("train --config " + ini_ + " --seed-list 3,4 --out " + path("a"));
  ASSERT_EQ(r.exit_code, 0);
  ASSERT_EQ(run_cli("train --config " + ini_ + " --seed-list 3,4 --out " + path("b")).exit_code, 0);
  const std::string agg = read_text_file(path("a/aggregate.csv"));
  EXPECT_EQ(agg, read_text_file(path("b/aggregate.csv")));
  EXPECT_EQ(read_text_file(path("a/seed_3/metrics.csv")), read_text_file(path("b/seed_3/metrics.csv")));

  const TrainResult lib = train(cfg_, true, 3);
  EXPECT_EQ(read_text_file(path("a/seed_3/metrics.csv")), metrics_csv(lib.metrics));
  const TrainResult lib4 = train(cfg_, true, 4);
  EXPECT_EQ(agg, metrics_csv(aggregate_runs({lib.metrics, lib4.metrics})));
  EXPECT_EQ(read_text_file(path("a/aggregate_smoothed.csv")),
            metrics_csv(smooth_rows(aggregate_runs({lib.metrics, lib4.metrics}), 2)));
  EXPECT_TRUE(fs::exists(path("a/manifest.json")));
}

TEST_F(Cli, NoRepairTrainsWithoutRepairs) {
  ASSERT_EQ(run_cli("train --config " + ini_ + " --seeds 1 --no-repair --out " + path("n")).exit_code, 0);
  EXPECT_EQ(read_text_file(path("n/seed_1/metrics.csv")), metrics_csv(train(cfg_, false, 1).metrics));
}

TEST_F(Cli, EvaluateMatchesLibrary) {
  ASSERT_EQ(run_cli("train --config " + ini_ + " --seeds 1 --out " + path("t")).exit_code, 0);
  const std::string ck = path("t/seed_1/checkpoint.bin");
  const RunResult r = run_cli("evaluate --config " + ini_ + " --checkpoint " + ck + " --seed-list 5,6 --out " + path("e"));
  ASSERT_EQ(r.exit_code, 0);
  const std::vector<std::uint64_t> seeds{5, 6};
  const EvalSummary s = run_evaluate(cfg_, ck, 2, seeds, true);
  EXPECT_EQ(read_text_file(path("e/evaluate.csv")), evaluate_csv(seeds, s, 2));
  EXPECT_NE(r.out.find("episodes,4\n"), std::string::npos);
  EXPECT_NE(r.out.find("mean_TE," + format_number(s.mean_te) + "\n"), std::string::npos);
  EXPECT_EQ(json::parse(read_text_file(path("e/summary.json")))["episodes"], 4);

  const RunResult rnd = run_cli("evaluate --config " + ini_ + " --random-policy --seeds 2 --episodes 1");
  EXPECT_EQ(rnd.exit_code, 0);
  EXPECT_NE(rnd.out.find("mean_TE," + format_number(run_evaluate(cfg_, "", 1, {1, 2}, true).mean_te) + "\n"),
            std::string::npos);
}

TEST_F(Cli, EvaluateZeroEpisodes) {
  const RunResult r = run_cli("evaluate --config " + ini_ + " --random-policy --episodes 0 --out " + path("z"));
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_NE(r.out.find("episodes,0\n"), std::string::npos);
  EXPECT_EQ(read_text_file(path("z/evaluate.csv")), std::string(kEvaluateHeader) + "\n");
}

TEST_F(Cli, TraceMatchesLibrary) {
  const RunResult r = run_cli("trace --config " + ini_ + " --random-policy --seed 7");
  ASSERT_EQ(r.exit_code, 0);
  std::string expected;
  for (const auto& l : run_trace(cfg_, "", 7, true)) expected += l + "\n";
  EXPECT_EQ(r.out, expected);
  ASSERT_EQ(run_cli("trace --config " + ini_ + " --random-policy --seed 7 --out " + path("tr")).exit_code, 0);
  EXPECT_EQ(read_text_file(path("tr/trace_seed_7.jsonl")), expected);
}

TEST_F(Cli, RepairBenchMatchesLibrary) {
  const RunResult r = run_cli("repair-bench --config " + ini_ + " --trials 20 --seed 3 --out " + path("rb"));
  ASSERT_EQ(r.exit_code, 0);
  const std::string csv = repair_bench_csv(run_repair_bench(cfg_, 20, 3));
  EXPECT_EQ(read_text_file(path("rb/repair_bench.csv")), csv);
  EXPECT_EQ(r.out.rfind(csv, 0), 0u);
  EXPECT_NE(r.out.find("mean_wall_us,"), std::string::npos);

  const RunResult zero = run_cli("repair-bench --trials 0");
  EXPECT_EQ(zero.exit_code, 0);
  EXPECT_EQ(zero.out.rfind(repair_bench_csv(RepairBenchStats{}), 0), 0u);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run_cli("").exit_code, 2);
  EXPECT_EQ(run_cli("frobnicate").exit_code, 2);
  EXPECT_EQ(run_cli("train --bogus").exit_code, 2);
  EXPECT_EQ(run_cli("dump-config --config " + path("missing.ini")).exit_code, 2);
  EXPECT_EQ(run_cli("evaluate --seeds 2 --seed-list 1,2 --random-policy").exit_code, 2);
  EXPECT_EQ(run_cli("evaluate").exit_code, 2);
  EXPECT_EQ(run_cli("train --config " + ini_).exit_code, 2);
  EXPECT_EQ(run_cli("repair-bench --trials -1").exit_code, 2);
  EXPECT_EQ(run_cli("--help").exit_code, 0);

  write_text_file(path("bad.ini"), "[scenario]\nn_uav = 0\n");
  EXPECT_EQ(run_cli("dump-config --config " + path("bad.ini")).exit_code, 2);
  write_text_file(path("unknown.ini"), "[scenario]\nwarp_factor = 9\n");
  EXPECT_EQ(run_cli("dump-config --config " + path("unknown.ini")).exit_code, 2);

  ASSERT_EQ(run_cli("train --config " + ini_ + " --seeds 1 --out " + path("t")).exit_code, 0);
  ExperimentConfig other = cfg_;
  other.scenario.d2 = 800.0;
  write_text_file(path("other.ini"), dump_config(other));
  EXPECT_EQ(run_cli("evaluate --config " + path("other.ini") + " --checkpoint " + path("t/seed_1/checkpoint.bin")).exit_code, 2);

  write_text_file(path("junk.bin"), "junk");
  EXPECT_EQ(run_cli("evaluate --config " + ini_ + " --checkpoint " + path("junk.bin")).exit_code, 3);
  EXPECT_EQ(run_cli("evaluate --config " + ini_ + " --checkpoint " + path("absent.bin")).exit_code, 3);
}
