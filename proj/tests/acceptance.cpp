// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
// Optional arguments select a subset of criteria by number.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <numbers>
#include <random>
#include <set>
#include <string>

#include "golden_config.hpp"
#include "gradcheck.hpp"
#include "oracle.hpp"
#include "uavtrack/uavtrack.hpp"

using namespace uavtrack;

namespace {

// Training budgets for the learning and ablation criteria.
constexpr int kLearningEpisodes = 400;
constexpr int kLearningSeeds = 5;
constexpr int kAblationEpisodes = 40;
constexpr int kAblationSeeds = 10;
constexpr int kAblationEvalEpisodes = 10;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

std::vector<Vec2> random_disc(std::mt19937_64& rng, int n, double rmin, double rmax) {
  std::uniform_real_distribution<double> ang(0.0, 2.0 * std::numbers::pi), rad(rmin, rmax);
  std::vector<Vec2> out;
  for (int i = 0; i < n; ++i) {
    const double a = ang(rng), r = rad(rng);
    out.emplace_back(r * std::cos(a), r * std::sin(a));
  }
  return out;
}

bool nonsingular(const Fim& f) { return std::abs(f.m.determinant()) > 1e-9 * f.m.squaredNorm(); }

Verdict crlb_oracle() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> count(2, 6);
  double worst = 0.0;
  int geometries = 0;
  while (geometries < 100) {
    const auto am = random_disc(rng, count(rng), 0, 500);
    const auto pm = random_disc(rng, count(rng), 100, 500);
    const Vec2 t = random_disc(rng, 1, 1500, 6000)[0];
    const ActiveFactors af;
    const PassiveFactor pf;
    const Fim fa = fim_active(am, t, af);
    const Fim fp = fim_passive(pm, t, pf);
    if (!nonsingular(fa) || !nonsingular(fp)) continue;
    auto am_model = [&](const Vec2& p) { return oracle::active_model(am, p, af.f_range, af.f_bearing, t); };
    auto pm_model = [&](const Vec2& p) { return oracle::passive_model(pm, p, pf.f_doa, t); };
    worst = std::max(worst, oracle::rel_diff(fa.m, oracle::fd_fisher(am_model, t, 0.5)));
    worst = std::max(worst, oracle::rel_diff(fp.m, oracle::fd_fisher(pm_model, t, 0.5)));
    ++geometries;
  }
  return {worst <= 1e-5, fmt("100 geometries, max relative FIM deviation %.3g (tol 1e-5)", worst)};
}

Verdict monte_carlo_crlb() {
  const std::vector<Vec2> radars{{0, 0}, {300, 0}, {0, 300}};
  const Vec2 truth(900, 700);
  const ActiveFactors af;
  const double bound = crlb_trace(fim_active(radars, truth, af)).value;
  auto model = [&](const Vec2& p) { return oracle::active_model(radars, p, af.f_range, af.f_bearing, truth); };
  const oracle::Measurement clean = model(truth);
  std::mt19937_64 rng(202);
  std::normal_distribution<double> unit(0.0, 1.0);
  double sq = 0.0;
  constexpr int kTrials = 10000;
  for (int k = 0; k < kTrials; ++k) {
    oracle::Measurement obs = clean;
    for (std::size_t i = 0; i < obs.z.size(); ++i) obs.z[i] += std::sqrt(obs.var[i]) * unit(rng);
    sq += (oracle::gauss_newton_fix(model, obs, truth) - truth).squaredNorm();
  }
  const double trace = sq / kTrials;
  return {trace >= 0.95 * bound,
          fmt("1e4 ML fixes, error-covariance trace %.6g vs crlb %.6g (ratio %.4f, need >= 0.95)", trace, bound,
              trace / bound)};
}

Verdict rigid_invariance() {
  std::mt19937_64 rng(303);
  const auto pos = random_disc(rng, 6, 0, 600);
  std::vector<SensorView> sensors;
  for (int i = 0; i < 6; ++i) sensors.push_back({pos[i], i % 2 ? RadarMode::Passive : RadarMode::Active});
  std::vector<TargetView> targets{{Vec2(4200, 900), false}, {Vec2(-3000, 3500), true}, {Vec2(500, -5200), false}};
  const FactorTable factors;
  const double ceiling = 1e300;
  const LbValue base = lb_average(sensors, targets, factors, ceiling);
  std::uniform_real_distribution<double> ang(0, 2 * std::numbers::pi), off(-2e4, 2e4);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const double a = ang(rng);
    const Vec2 shift(off(rng), off(rng));
    auto move = [&](const Vec2& p) { return Vec2(rotate(p, a) + shift); };
    auto s2 = sensors;
    auto t2 = targets;
    for (auto& s : s2) s.pos = move(s.pos);
    for (auto& t : t2) t.pos = move(t.pos);
    const LbValue lb = lb_average(s2, t2, factors, ceiling);
    worst = std::max(worst, std::abs(lb.value - base.value) / base.value);
  }
  return {!base.clamped && worst <= 1e-9, fmt("20 rigid motions, max relative LB change %.3g (tol 1e-9)", worst)};
}

Verdict repair_effectiveness() {
  const ExperimentConfig cfg;
  const RepairBenchStats s = run_repair_bench(cfg, 1000, 1);
  const bool pass = s.needed_repair == 1000 && s.repaired >= 950 && s.within_d0 == 1000 && s.objective_not_worse == 1000;
  return {pass, fmt("1000 contexts: repaired %d (need >= 950), within d0 %d/1000, objective not worse %d/1000",
                    s.repaired, s.within_d0, s.objective_not_worse)};
}

// Every UAV heads straight for its nearest predicted target at full speed.
JointPolicy pursuit_policy(const ExperimentConfig& cfg, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  const double d0 = cfg.scenario.d0;
  return [rng, d0](const TrackingEnv& env) mutable {
    std::vector<ActionVec> out;
    std::bernoulli_distribution coin(0.5);
    for (const auto& u : env.world().uavs) {
      const TrackEstimate* best = nullptr;
      for (const auto& p : env.predictions())
        if (!best || (p.pos_pred - u.pos).norm() < (best->pos_pred - u.pos).norm()) best = &p;
      const Vec2 dir = (best->pos_pred - u.pos).normalized();
      out.push_back({d0 * dir.x(), d0 * dir.y(), coin(rng) ? RadarMode::Active : RadarMode::Passive});
    }
    return out;
  };
}

Verdict closed_loop_constraints() {
  const ExperimentConfig cfg;
  TrackingEnv env(cfg);
  long pred8 = 0, c6 = 0, c7 = 0, true8 = 0, repairs = 0;
  const std::vector<std::pair<std::string, JointPolicy>> policies{
      {"random", make_random_policy(cfg, 7)}, {"pursuit", pursuit_policy(cfg, 7)}};
  for (const auto& [name, policy] : policies) {
    const EpisodeMetrics m = run_episode(env, derive_seed(5, seed_tag::kEvalEpisode, 0), policy, true);
    pred8 += m.violations_c8_predicted;
    c6 += m.violations_c6;
    c7 += m.violations_c7;
    true8 += m.violations_c8;
    repairs += m.repairs_invoked;
  }
  return {pred8 == 0 && c6 == 0 && c7 == 0,
          fmt("N=6 M=3 300 steps (random + pursuit): predicted c8 %ld, c6 %ld, c7 %ld; true c8 %ld (not gated), "
              "repairs %ld",
              pred8, c6, c7, true8, repairs)};
}

double mean_tail(const std::vector<EpisodeMetrics>& ms, std::size_t n, double EpisodeMetrics::*field) {
  const std::size_t lo = ms.size() > n ? ms.size() - n : 0;
  double s = 0.0;
  for (std::size_t i = lo; i < ms.size(); ++i) s += ms[i].*field;
  return s / static_cast<double>(ms.size() - lo);
}

Verdict learning_signal() {
  std::string detail;
  bool pass = true;
  for (const double pj : {0.0, 1.0}) {
    ExperimentConfig cfg;
    cfg.scenario.n_uav = 2;
    cfg.scenario.m_target = 1;
    cfg.scenario.p_jammer = pj;
    cfg.train.total_episodes = kLearningEpisodes;
    cfg.train.gamma = 0.9;
    cfg.train.init_log_std = 0.0;
    cfg.train.minibatch = 32;
    std::vector<double> learned(kLearningSeeds), random(kLearningSeeds);
    parallel_for(kLearningSeeds, [&](int i) {
      const std::uint64_t seed = static_cast<std::uint64_t>(i + 1);
      const TrainResult r = train(cfg, true, seed);
      learned[i] = mean_tail(r.metrics, 50, &EpisodeMetrics::te);
      const std::vector<std::uint64_t> seeds{seed};
      random[i] = evaluate(cfg, nullptr, 50, seeds, true).mean_te;
    });
    int wins = 0;
    for (int i = 0; i < kLearningSeeds; ++i) {
      if (learned[i] > random[i]) ++wins;
      std::fprintf(stderr, "  learning p_jammer=%g seed %d: final-50 TE %.2f, random TE %.2f\n", pj, i + 1, learned[i],
                   random[i]);
    }
    pass = pass && wins >= 4;
    detail += fmt("p_jammer=%g: %d/%d seeds beat random; ", pj, wins, kLearningSeeds);
  }
  return {pass, detail + fmt("%d episodes, lr 5e-5", kLearningEpisodes)};
}

Verdict ablation() {
  // Close engagement: targets start around the standoff distance.
  ExperimentConfig cfg;
  cfg.scenario.r_min = 800.0;
  cfg.scenario.r_max = 1600.0;
  cfg.train.total_episodes = kAblationEpisodes;
  struct Arm {
    long c8 = 0;
    double reward = 0.0;
    double smoothed_final = 0.0;
  };
  std::vector<Arm> runs(2 * kAblationSeeds);
  parallel_for(2 * kAblationSeeds, [&](int job) {
    const bool repair = job < kAblationSeeds;
    const std::uint64_t seed = static_cast<std::uint64_t>(job % kAblationSeeds + 1);
    const TrainResult r = train(cfg, repair, seed);
    std::vector<double> curve;
    for (const auto& m : r.metrics) curve.push_back(m.mean_reward);
    const std::vector<std::uint64_t> seeds{seed};
    const EvalSummary e = evaluate(cfg, &r.learner.policy, kAblationEvalEpisodes, seeds, repair);
    runs[job] = {e.violations_c8, e.mean_reward, smooth(curve, cfg.experiment.smoothing_window).back()};
  });
  long c8[2] = {0, 0};
  double reward[2] = {0.0, 0.0};
  for (int job = 0; job < 2 * kAblationSeeds; ++job) {
    const int arm = job < kAblationSeeds ? 0 : 1;
    c8[arm] += runs[job].c8;
    reward[arm] += runs[job].reward / kAblationSeeds;
  }
  // Spread across seeds of the smoothed no-repair training curve at its last episode.
  double mean = 0.0, var = 0.0;
  for (int s = 0; s < kAblationSeeds; ++s) mean += runs[kAblationSeeds + s].smoothed_final / kAblationSeeds;
  for (int s = 0; s < kAblationSeeds; ++s) {
    const double d = runs[kAblationSeeds + s].smoothed_final - mean;
    var += d * d / kAblationSeeds;
  }
  const double band = std::sqrt(var);
  const bool pass = c8[0] <= c8[1] && reward[0] >= reward[1] - band;
  return {pass, fmt("%d seeds x %d eval episodes: c8 repair %ld vs no-repair %ld; mean reward %.3f vs %.3f (band %.3f)",
                    kAblationSeeds, kAblationEvalEpisodes, c8[0], c8[1], reward[0], reward[1], band)};
}

Verdict default_parameters() {
  const ExperimentConfig d;
  const bool values = d.scenario.n_uav == 6 && d.scenario.m_target == 3 && d.scenario.p_jammer == 0.5 &&
                      d.scenario.horizon == 300 && d.sa.t_max == 100.0 && d.sa.t_min == 20.0 && d.sa.iters == 20 &&
                      d.train.hidden_layers == 5 && d.train.hidden_units == 256 && d.train.lr == 5e-5 &&
                      d.experiment.smoothing_window == 50;
  const bool dump = dump_config(d) == std::string(kDefaultDump).substr(1);
  const bool hash = config_hash(d) == kDefaultConfigHash;
  const bool reparse = dump_config(parse_config(dump_config(d))) == dump_config(d);
  return {values && dump && hash && reparse,
          fmt("defaults %s, golden dump %s, hash %s, reparse %s", values ? "ok" : "differ", dump ? "ok" : "differs",
              hash ? "ok" : "differs", reparse ? "ok" : "differs")};
}

Verdict gradient_check() {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const gradcheck::Result r = gradcheck::check(seed);
    worst = std::max({worst, r.policy_rel, r.value_rel});
  }
  return {worst <= 1e-3, fmt("3 toy networks, max relative gradient error %.3g (tol 1e-3)", worst)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, Verdict (*)()>> criteria{
      {"CRLB matches finite-difference Fisher information", crlb_oracle},
      {"Monte-Carlo ML error respects the CRLB", monte_carlo_crlb},
      {"LB invariant under rigid motions", rigid_invariance},
      {"repair effectiveness", repair_effectiveness},
      {"closed loop has no predicted standoff, mobility or separation violations", closed_loop_constraints},
      {"learning signal beats the random policy", learning_signal},
      {"repair ablation direction", ablation},
      {"default parameters and golden config dump", default_parameters},
      {"analytic gradients match finite differences", gradient_check},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %d: %s  %s: %s [%.1f s]\n", id, v.pass ? "PASS" : "FAIL", criteria[i].first,
                v.detail.c_str(), secs);
    std::fflush(stdout);
    if (!v.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
