#pragma once

// Experiment orchestration behind the command-line front end: multi-seed
// training, evaluation, trajectory traces and the standalone repair benchmark.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <exception>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "uavtrack/config.hpp"
#include "uavtrack/io.hpp"
#include "uavtrack/rollout.hpp"
#include "uavtrack/sa_repair.hpp"

namespace uavtrack {

/// Explicit list wins; otherwise `count` seeds starting at train.seed
/// (count defaults to experiment.seeds).
inline std::vector<std::uint64_t> resolve_seeds(const ExperimentConfig& cfg, std::optional<int> count,
                                                const std::vector<std::uint64_t>& explicit_list) {
  if (!explicit_list.empty()) return explicit_list;
  const int n = count.value_or(cfg.experiment.seeds);
  if (n < 0) throw Error(ErrorCode::ConfigInvalid, "seed count must be >= 0");
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < n; ++i) seeds.push_back(cfg.train.seed + static_cast<std::uint64_t>(i));
  return seeds;
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline json make_manifest(const ExperimentConfig& cfg, const std::string& command,
                          const std::vector<std::uint64_t>& seeds, const std::string& out_dir, bool repair_enabled) {
  return {{"command", command},
          {"config", dump_config(cfg)},
          {"config_hash", config_hash(cfg)},
          {"seeds", seeds},
          {"repair_enabled", repair_enabled},
          {"out_dir", out_dir},
          {"started_utc", utc_timestamp()}};
}

/// Runs `job(i)` for i in [0, n) on up to hardware_concurrency threads; rethrows the first failure.
template <typename Job>
void parallel_for(int n, Job&& job) {
  const int workers = std::max(1, std::min<int>(n, static_cast<int>(std::thread::hardware_concurrency())));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        job(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
}

struct TrainRunOutput {
  std::vector<std::vector<EpisodeMetrics>> per_seed;
  std::vector<MetricsRow> aggregate;
  std::vector<MetricsRow> aggregate_smoothed;
};

inline std::string seed_dir(const std::filesystem::path& out, std::uint64_t seed) {
  return (out / ("seed_" + std::to_string(seed))).string();
}

/// One training run per seed. Writes per-seed metrics.csv and checkpoint.bin,
/// aggregate.csv (mean over seeds), aggregate_smoothed.csv and manifest.json.
inline TrainRunOutput run_train(const ExperimentConfig& cfg, const std::string& out_dir,
                                const std::vector<std::uint64_t>& seeds, bool repair_enabled) {
  namespace fs = std::filesystem;
  cfg.validate();
  const fs::path out(out_dir);
  fs::create_directories(out);
  json manifest = make_manifest(cfg, "train", seeds, out_dir, repair_enabled);
  const std::string hash = config_hash(cfg);

  TrainRunOutput result;
  result.per_seed.resize(seeds.size());
  parallel_for(static_cast<int>(seeds.size()), [&](int i) {
    const std::uint64_t seed = seeds[i];
    TrainResult r = train(cfg, repair_enabled, seed);
    const std::string dir = seed_dir(out, seed);
    fs::create_directories(dir);
    write_text_file(dir + "/metrics.csv", metrics_csv(r.metrics));
    save_checkpoint(dir + "/checkpoint.bin", r.learner, hash);
    result.per_seed[i] = std::move(r.metrics);
  });
  result.aggregate = aggregate_runs(result.per_seed);
  result.aggregate_smoothed = smooth_rows(result.aggregate, cfg.experiment.smoothing_window);
  write_text_file((out / "aggregate.csv").string(), metrics_csv(result.aggregate));
  write_text_file((out / "aggregate_smoothed.csv").string(), metrics_csv(result.aggregate_smoothed));
  manifest["finished_utc"] = utc_timestamp();
  write_text_file((out / "manifest.json").string(), manifest.dump(2) + "\n");
  return result;
}

inline const char* kEvaluateHeader =
    "seed,episode,mean_reward,TE,violations_c6,violations_c7,violations_c8,violations_c8_predicted,repairs_invoked,"
    "fallbacks";

inline std::string evaluate_csv(const std::vector<std::uint64_t>& seeds, const EvalSummary& s, int episodes) {
  std::ostringstream os;
  os << kEvaluateHeader << '\n';
  for (std::size_t k = 0; k < s.per_episode.size(); ++k) {
    const auto& m = s.per_episode[k];
    const std::uint64_t seed = episodes > 0 ? seeds[k / static_cast<std::size_t>(episodes)] : 0;
    os << seed << ',' << m.episode << ',' << format_number(m.mean_reward) << ',' << format_number(m.te) << ','
       << m.violations_c6 << ',' << m.violations_c7 << ',' << m.violations_c8 << ',' << m.violations_c8_predicted
       << ',' << m.repairs_invoked << ',' << m.fallbacks << '\n';
  }
  return os.str();
}

inline json summary_json(const EvalSummary& s) {
  return {{"episodes", s.episodes},
          {"mean_reward", s.mean_reward},
          {"mean_te", s.mean_te},
          {"violations_c6", s.violations_c6},
          {"violations_c7", s.violations_c7},
          {"violations_c8", s.violations_c8},
          {"violations_c8_predicted", s.violations_c8_predicted},
          {"repairs_invoked", s.repairs_invoked},
          {"fallbacks", s.fallbacks}};
}

/// Frozen-policy evaluation. An empty checkpoint path selects the random baseline.
inline EvalSummary run_evaluate(const ExperimentConfig& cfg, const std::string& checkpoint_path, int episodes,
                                const std::vector<std::uint64_t>& seeds, bool repair_enabled,
                                const std::string& out_dir = {}) {
  if (episodes < 0) throw Error(ErrorCode::ConfigInvalid, "episodes must be >= 0");
  std::optional<Checkpoint> ck;
  if (!checkpoint_path.empty()) ck = load_checkpoint_for(checkpoint_path, cfg);
  const EvalSummary s = evaluate(cfg, ck ? &ck->policy : nullptr, episodes, seeds, repair_enabled);
  if (!out_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    json manifest = make_manifest(cfg, "evaluate", seeds, out_dir, repair_enabled);
    manifest["checkpoint"] = checkpoint_path.empty() ? json("random-policy") : json(checkpoint_path);
    manifest["episodes"] = episodes;
    manifest["finished_utc"] = utc_timestamp();
    write_text_file((fs::path(out_dir) / "evaluate.csv").string(), evaluate_csv(seeds, s, episodes));
    write_text_file((fs::path(out_dir) / "summary.json").string(), summary_json(s).dump(2) + "\n");
    write_text_file((fs::path(out_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
  }
  return s;
}

/// Header line plus one record per step; returns the lines.
inline std::vector<std::string> run_trace(const ExperimentConfig& cfg, const std::string& checkpoint_path,
                                          std::uint64_t seed, bool repair_enabled) {
  std::optional<Checkpoint> ck;
  if (!checkpoint_path.empty()) ck = load_checkpoint_for(checkpoint_path, cfg);
  TrackingEnv env(cfg);
  const std::uint64_t episode_seed = derive_seed(seed, seed_tag::kEvalEpisode, 0);
  const JointPolicy policy = ck ? make_network_policy(ck->policy, cfg, false, derive_seed(seed, seed_tag::kActionNoise, 0))
                                : make_random_policy(cfg, derive_seed(seed, seed_tag::kRandomPolicy, 0));
  std::vector<std::string> lines;
  env.reset(episode_seed);
  lines.push_back(trace_header(cfg, seed, env.world(), ck ? "checkpoint" : "random"));
  run_episode(env, episode_seed, policy, repair_enabled,
              [&](const TrackingEnv& e, const StepOutcome& s) { lines.push_back(trace_record(e, s)); });
  return lines;
}

/// A context in which the agent stood outside every halo last step and its
/// candidate action moves it inside the halo of some predicted target.
inline std::pair<RepairContext, ActionVec> make_violating_context(const ExperimentConfig& cfg, Rng& rng) {
  const auto& sc = cfg.scenario;
  const int n = std::max(sc.n_uav, 1);
  const int m = std::max(sc.m_target, 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  auto heading = [&](double a) { return Vec2(std::cos(a), std::sin(a)); };

  for (;;) {
    RepairContext ctx;
    ctx.agent = static_cast<int>(unit(rng) * n) % n;
    ctx.d0 = sc.d0;
    ctx.d2 = sc.d2;
    ctx.factors = cfg.factors;
    ctx.lb_ceiling = sc.lb_ceiling;
    for (int j = 0; j < m; ++j) {
      TrackEstimate t;
      t.pos_pred = Vec2(uniform(-5000.0, 5000.0), uniform(-5000.0, 5000.0));
      t.sigma_pred = uniform(10.0, 100.0);
      ctx.predictions.push_back(t);
      ctx.target_jammer.push_back(unit(rng) < sc.p_jammer);
    }
    const int focus = static_cast<int>(unit(rng) * m) % m;
    const auto& tp = ctx.predictions[focus];
    const double bearing = uniform(0.0, 2.0 * std::numbers::pi);
    const double dist = sc.d2 + 3.0 * tp.sigma_pred + uniform(0.0, sc.d0);
    const Vec2 self = tp.pos_pred + dist * heading(bearing);
    ctx.uavs_prev.resize(n);
    for (int i = 0; i < n; ++i) {
      ctx.uavs_prev[i].pos = i == ctx.agent ? self : Vec2(self + uniform(500.0, 3000.0) * heading(uniform(0.0, 6.3)));
      ctx.uavs_prev[i].mode = unit(rng) < 0.5 ? RadarMode::Active : RadarMode::Passive;
    }
    if (inside_halo(self, ctx)) continue;
    const Vec2 toward = (tp.pos_pred - self).normalized();
    const double jitter = uniform(-std::numbers::pi / 3.0, std::numbers::pi / 3.0);
    const Vec2 move = uniform(0.5, 1.0) * sc.d0 * rotate(toward, jitter);
    const ActionVec candidate{move.x(), move.y(), unit(rng) < 0.5 ? RadarMode::Active : RadarMode::Passive};
    if (!needs_repair(candidate, ctx)) continue;
    return {ctx, candidate};
  }
}

struct RepairBenchStats {
  int trials = 0;
  int needed_repair = 0;   // generator contract: equals trials
  int repaired = 0;        // without fallback
  int within_d0 = 0;
  int objective_not_worse = 0;
  double repaired_fraction = 0.0;
  double mean_objective_improvement = 0.0;
  double mean_wall_us = 0.0;  // wall-clock; reported on stdout only
};

inline RepairBenchStats run_repair_bench(const ExperimentConfig& cfg, int trials, std::uint64_t seed) {
  if (trials < 0) throw Error(ErrorCode::ConfigInvalid, "trials must be >= 0");
  cfg.validate();
  RepairBenchStats s;
  Rng rng = make_rng(derive_seed(seed, 41));
  double improvement = 0.0;
  double wall = 0.0;
  for (int t = 0; t < trials; ++t) {
    const auto [ctx, candidate] = make_violating_context(cfg, rng);
    ++s.trials;
    if (needs_repair(candidate, ctx)) ++s.needed_repair;
    const auto start = std::chrono::steady_clock::now();
    const RepairOutcome r = repair(candidate, ctx, cfg.sa, derive_seed(seed, 42, t));
    wall += std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - start).count();
    if (r.status == RepairStatus::Repaired) ++s.repaired;
    if (r.action.move().norm() <= ctx.d0 + kMobilityTolerance) ++s.within_d0;
    if (r.objective <= r.input_objective) ++s.objective_not_worse;
    improvement += r.input_objective - r.objective;
  }
  if (s.trials > 0) {
    s.repaired_fraction = static_cast<double>(s.repaired) / s.trials;
    s.mean_objective_improvement = improvement / s.trials;
    s.mean_wall_us = wall / s.trials;
  }
  return s;
}

inline std::string repair_bench_csv(const RepairBenchStats& s) {
  std::ostringstream os;
  os << "trials,needed_repair,repaired,repaired_fraction,within_d0,objective_not_worse,mean_objective_improvement\n";
  os << s.trials << ',' << s.needed_repair << ',' << s.repaired << ',' << format_number(s.repaired_fraction) << ','
     << s.within_d0 << ',' << s.objective_not_worse << ',' << format_number(s.mean_objective_improvement) << '\n';
  return os.str();
}

}  // namespace uavtrack
