#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "uavtrack/uavtrack.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Options {
  std::string config_path;
  std::string out_dir;
  std::optional<int> seeds;
  std::vector<std::uint64_t> seed_list;
  std::optional<std::uint64_t> seed;
  std::string checkpoint;
  int episodes = -1;
  int trials = 100;
  bool no_repair = false;
  bool random_policy = false;
};

uavtrack::ExperimentConfig load(const Options& o) {
  return o.config_path.empty() ? uavtrack::ExperimentConfig{} : uavtrack::load_config(o.config_path);
}

std::uint64_t single_seed(const Options& o, const uavtrack::ExperimentConfig& cfg) {
  if (o.seed) return *o.seed;
  if (!o.seed_list.empty()) return o.seed_list.front();
  return cfg.train.seed;
}

void print_summary(const uavtrack::EvalSummary& s) {
  std::cout << "episodes," << s.episodes << '\n'
            << "mean_reward," << uavtrack::format_number(s.mean_reward) << '\n'
            << "mean_TE," << uavtrack::format_number(s.mean_te) << '\n'
            << "violations_c6," << s.violations_c6 << '\n'
            << "violations_c7," << s.violations_c7 << '\n'
            << "violations_c8," << s.violations_c8 << '\n'
            << "violations_c8_predicted," << s.violations_c8_predicted << '\n'
            << "repairs_invoked," << s.repairs_invoked << '\n'
            << "fallbacks," << s.fallbacks << '\n';
}

int cmd_train(const Options& o) {
  const auto cfg = load(o);
  if (o.out_dir.empty()) throw uavtrack::Error(uavtrack::ErrorCode::ConfigInvalid, "train requires --out");
  const auto seeds = uavtrack::resolve_seeds(cfg, o.seeds, o.seed_list);
  const auto out = uavtrack::run_train(cfg, o.out_dir, seeds, !o.no_repair);
  std::cout << "trained " << seeds.size() << " seed(s), " << out.aggregate.size() << " episode(s) -> " << o.out_dir
            << '\n';
  return kExitOk;
}

int cmd_evaluate(const Options& o) {
  const auto cfg = load(o);
  if (o.checkpoint.empty() && !o.random_policy)
    throw uavtrack::Error(uavtrack::ErrorCode::ConfigInvalid, "evaluate requires --checkpoint or --random-policy");
  const auto seeds = uavtrack::resolve_seeds(cfg, o.seeds, o.seed_list);
  const int episodes = o.episodes >= 0 ? o.episodes : cfg.experiment.eval_episodes;
  const auto s = uavtrack::run_evaluate(cfg, o.random_policy ? std::string{} : o.checkpoint, episodes, seeds,
                                        !o.no_repair, o.out_dir);
  print_summary(s);
  return kExitOk;
}

int cmd_trace(const Options& o) {
  const auto cfg = load(o);
  if (o.checkpoint.empty() && !o.random_policy)
    throw uavtrack::Error(uavtrack::ErrorCode::ConfigInvalid, "trace requires --checkpoint or --random-policy");
  const std::uint64_t seed = single_seed(o, cfg);
  const auto lines = uavtrack::run_trace(cfg, o.random_policy ? std::string{} : o.checkpoint, seed, !o.no_repair);
  std::string text;
  for (const auto& l : lines) text += l + '\n';
  if (o.out_dir.empty()) {
    std::cout << text;
  } else {
    std::filesystem::create_directories(o.out_dir);
    const auto path = (std::filesystem::path(o.out_dir) / ("trace_seed_" + std::to_string(seed) + ".jsonl")).string();
    uavtrack::write_text_file(path, text);
    std::cout << "wrote " << lines.size() - 1 << " step records -> " << path << '\n';
  }
  return kExitOk;
}

int cmd_repair_bench(const Options& o) {
  const auto cfg = load(o);
  const auto s = uavtrack::run_repair_bench(cfg, o.trials, single_seed(o, cfg));
  const std::string csv = uavtrack::repair_bench_csv(s);
  if (!o.out_dir.empty()) {
    std::filesystem::create_directories(o.out_dir);
    uavtrack::write_text_file((std::filesystem::path(o.out_dir) / "repair_bench.csv").string(), csv);
  }
  std::cout << csv << "mean_wall_us," << uavtrack::format_number(s.mean_wall_us) << '\n';
  return kExitOk;
}

int cmd_dump_config(const Options& o) {
  const auto cfg = load(o);
  std::cout << uavtrack::dump_config(cfg);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-UAV radar tracking under jamming: MAPPO training with simulated-annealing action repair"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "INI config file (defaults apply when omitted)")->check(CLI::ExistingFile);
    sub->add_option("--out", o.out_dir, "Output directory");
  };
  auto add_seeds = [&](CLI::App* sub) {
    auto* n = sub->add_option("--seeds", o.seeds, "Number of seeds, starting at train.seed");
    auto* list = sub->add_option("--seed-list", o.seed_list, "Explicit comma-separated seeds")->delimiter(',');
    n->excludes(list);
  };
  auto add_policy = [&](CLI::App* sub) {
    auto* ck = sub->add_option("--checkpoint", o.checkpoint, "Checkpoint written by train");
    auto* rnd = sub->add_flag("--random-policy", o.random_policy, "Use the random baseline policy");
    ck->excludes(rnd);
  };

  auto* train = app.add_subcommand("train", "Train MAPPO for each seed");
  add_common(train);
  add_seeds(train);
  train->add_flag("--no-repair", o.no_repair, "Disable simulated-annealing repair (plain MAPPO ablation)");

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a frozen policy");
  add_common(evaluate);
  add_seeds(evaluate);
  add_policy(evaluate);
  evaluate->add_option("--episodes", o.episodes, "Episodes per seed");
  evaluate->add_flag("--no-repair", o.no_repair, "Disable repair");

  auto* trace = app.add_subcommand("trace", "Write a per-step trajectory trace (JSON lines)");
  add_common(trace);
  add_policy(trace);
  trace->add_option("--seed", o.seed, "Episode seed");
  trace->add_option("--seed-list", o.seed_list, "First entry is used as the seed")->delimiter(',');
  trace->add_flag("--no-repair", o.no_repair, "Disable repair");

  auto* bench = app.add_subcommand("repair-bench", "Benchmark repair on randomized violating contexts");
  add_common(bench);
  bench->add_option("--trials", o.trials, "Number of contexts");
  bench->add_option("--seed", o.seed, "Generator seed");
  bench->add_option("--seed-list", o.seed_list, "First entry is used as the seed")->delimiter(',');

  auto* dump = app.add_subcommand("dump-config", "Print the effective configuration");
  add_common(dump);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) return cmd_train(o);
    if (*evaluate) return cmd_evaluate(o);
    if (*trace) return cmd_trace(o);
    if (*bench) return cmd_repair_bench(o);
    if (*dump) return cmd_dump_config(o);
  } catch (const uavtrack::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    const bool config_error =
        e.code() == uavtrack::ErrorCode::ConfigInvalid || e.code() == uavtrack::ErrorCode::HashMismatch;
    return config_error ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}
