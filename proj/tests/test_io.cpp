#include <gtest/gtest.h>

#include <filesystem>

#include "uavtrack/experiment.hpp"
#include "uavtrack/io.hpp"

using namespace uavtrack;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("uavtrack_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.scenario.n_uav = 3;
  c.scenario.m_target = 2;
  c.scenario.horizon = 20;
  c.train.hidden_layers = 2;
  c.train.hidden_units = 16;
  c.train.total_episodes = 2;
  return c;
}

}  // namespace

TEST(Smooth, ConstantSeriesUnchanged) {
  const std::vector<double> s(120, 3.25);
  EXPECT_EQ(smooth(s, 50), s);
}

TEST(Smooth, TrailingWindow) {
  const std::vector<double> s{1, 2, 3, 4, 5};
  const auto out = smooth(s, 2);
  const std::vector<double> expected{1, 1.5, 2.5, 3.5, 4.5};
  EXPECT_EQ(out, expected);
  EXPECT_EQ(smooth(s, 1), s);
}

TEST(MetricsCsv, HeaderAndRows) {
  EpisodeMetrics m;
  m.episode = 3;
  m.mean_reward = -1.5;
  m.te = 250.125;
  m.violations_c7 = 2;
  m.violations_c8 = 1;
  m.repairs_invoked = 7;
  const std::vector<EpisodeMetrics> ms{m};
  EXPECT_EQ(metrics_csv(ms), "episode,mean_reward,TE,violations_c7,violations_c8,repairs_invoked\n3,-1.5,250.125,2,1,7\n");
}

TEST(AggregateRuns, MeansAcrossSeeds) {
  EpisodeMetrics a, b;
  a.te = 1.0;
  b.te = 3.0;
  a.violations_c8 = 1;
  const std::vector<std::vector<EpisodeMetrics>> runs{{a, a}, {b}};
  const auto rows = aggregate_runs(runs);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].te, 2.0);
  EXPECT_EQ(rows[0].violations_c8, 0.5);
}

TEST(Trace, RecordsRoundTripIntoWorldState) {
  const ExperimentConfig cfg = small_config();
  TrackingEnv env(cfg);
  std::vector<WorldState> seen;
  std::vector<std::string> lines;
  run_episode(env, 5, make_random_policy(cfg, 6), true, [&](const TrackingEnv& e, const StepOutcome& s) {
    seen.push_back(e.world());
    lines.push_back(trace_record(e, s));
  });
  ASSERT_EQ(lines.size(), 20u);
  for (std::size_t k = 0; k < lines.size(); ++k) {
    const json j = json::parse(lines[k]);
    const WorldState w = world_from_json(j);
    EXPECT_EQ(w.k, seen[k].k);
    for (int i = 0; i < w.n_uav(); ++i) {
      EXPECT_EQ(w.uavs[i].pos, seen[k].uavs[i].pos);
      EXPECT_EQ(w.uavs[i].last_mode, seen[k].uavs[i].last_mode);
      const int mode = j["uavs"][i]["mode"].get<int>();
      EXPECT_TRUE(mode == 0 || mode == 1);
    }
    for (int t = 0; t < w.m_target(); ++t) {
      EXPECT_EQ(w.targets[t].pos, seen[k].targets[t].pos);
      EXPECT_EQ(w.targets[t].vel, seen[k].targets[t].vel);
      EXPECT_EQ(w.targets[t].has_jammer, seen[k].targets[t].has_jammer);
    }
    EXPECT_EQ(j["rewards"].size(), 3u);
    EXPECT_GT(j["lb"].get<double>(), 0.0);
  }
}

TEST(Trace, HeaderPlusOneRecordPerStep) {
  ExperimentConfig cfg;
  const auto lines = run_trace(cfg, "", 3, true);
  ASSERT_EQ(lines.size(), 301u);
  const json h = json::parse(lines.front());
  EXPECT_EQ(h["type"], "header");
  EXPECT_EQ(h["initial"]["k"], 0);
  EXPECT_EQ(json::parse(lines.back())["k"], 300);
}

TEST(Checkpoint, RoundTripAndHashCheck) {
  const ExperimentConfig cfg = small_config();
  TrainConfig tc = cfg.train;
  LearnerState l = make_learner(cfg.scenario.n_uav, cfg.scenario.m_target, tc, 4);
  l.value_norm.update(std::vector<double>{1.0, 2.0, 4.0});
  const auto dir = scratch_dir("ckpt");
  const std::string path = (dir / "c.bin").string();
  save_checkpoint(path, l, config_hash(cfg));
  const Checkpoint ck = load_checkpoint_for(path, cfg);
  EXPECT_EQ(nn::flatten(ck.policy.mlp().params()), nn::flatten(l.policy.mlp().params()));
  EXPECT_EQ(nn::flatten(ck.value.mlp().params()), nn::flatten(l.value.mlp().params()));
  EXPECT_EQ(ck.policy.mlp().sizes(), l.policy.mlp().sizes());
  EXPECT_EQ(ck.value_norm.mean, l.value_norm.mean);
  EXPECT_EQ(ck.value_norm.m2, l.value_norm.m2);

  ExperimentConfig other = cfg;
  other.scenario.d2 = 900;
  try {
    load_checkpoint_for(path, other);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::HashMismatch);
  }
  write_text_file((dir / "junk.bin").string(), "not a checkpoint");
  EXPECT_THROW(load_checkpoint((dir / "junk.bin").string()), Error);
  fs::remove_all(dir);
}

TEST(RunTrain, WritesPerSeedAndAggregates) {
  const ExperimentConfig cfg = small_config();
  const auto dir = scratch_dir("train");
  const std::vector<std::uint64_t> seeds{1, 2};
  const TrainRunOutput out = run_train(cfg, dir.string(), seeds, true);
  for (auto s : seeds) {
    EXPECT_TRUE(fs::exists(dir / ("seed_" + std::to_string(s)) / "metrics.csv"));
    EXPECT_TRUE(fs::exists(dir / ("seed_" + std::to_string(s)) / "checkpoint.bin"));
  }
  EXPECT_TRUE(fs::exists(dir / "aggregate.csv"));
  EXPECT_TRUE(fs::exists(dir / "aggregate_smoothed.csv"));
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  EXPECT_EQ(out.aggregate.size(), 2u);
  const std::string agg = read_text_file((dir / "aggregate.csv").string());

  const auto dir2 = scratch_dir("train2");
  run_train(cfg, dir2.string(), seeds, true);
  EXPECT_EQ(read_text_file((dir2 / "aggregate.csv").string()), agg);
  EXPECT_EQ(read_text_file((dir2 / "seed_1" / "metrics.csv").string()),
            read_text_file((dir / "seed_1" / "metrics.csv").string()));

  const json manifest = json::parse(read_text_file((dir / "manifest.json").string()));
  EXPECT_EQ(manifest["config_hash"], config_hash(cfg));
  EXPECT_EQ(manifest["seeds"].size(), 2u);

  const EvalSummary s = run_evaluate(cfg, (dir / "seed_1" / "checkpoint.bin").string(), 2, seeds, true);
  EXPECT_EQ(s.episodes, 4);
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST(RunEvaluate, ZeroEpisodesIsEmpty) {
  const ExperimentConfig cfg = small_config();
  const std::vector<std::uint64_t> seeds{1};
  const EvalSummary s = run_evaluate(cfg, "", 0, seeds, true);
  EXPECT_EQ(s.episodes, 0);
  EXPECT_EQ(s.mean_te, 0.0);
  EXPECT_EQ(evaluate_csv(seeds, s, 0), std::string(kEvaluateHeader) + "\n");
}

TEST(ResolveSeeds, CountAndList) {
  ExperimentConfig cfg;
  cfg.train.seed = 5;
  EXPECT_EQ(resolve_seeds(cfg, 3, {}), (std::vector<std::uint64_t>{5, 6, 7}));
  EXPECT_EQ(resolve_seeds(cfg, std::nullopt, {}).size(), 10u);
  EXPECT_EQ(resolve_seeds(cfg, 3, {9, 1}), (std::vector<std::uint64_t>{9, 1}));
}

TEST(RepairBench, GeneratorContractAndStats) {
  ExperimentConfig cfg;
  const RepairBenchStats s = run_repair_bench(cfg, 50, 3);
  EXPECT_EQ(s.trials, 50);
  EXPECT_EQ(s.needed_repair, 50);
  EXPECT_GE(s.repaired_fraction, 0.0);
  EXPECT_LE(s.repaired_fraction, 1.0);
  EXPECT_EQ(s.within_d0, 50);
  EXPECT_EQ(s.objective_not_worse, 50);
  const RepairBenchStats empty = run_repair_bench(cfg, 0, 3);
  EXPECT_EQ(empty.trials, 0);
  EXPECT_EQ(empty.repaired_fraction, 0.0);
  EXPECT_EQ(repair_bench_csv(s), repair_bench_csv(run_repair_bench(cfg, 50, 3)));
}
