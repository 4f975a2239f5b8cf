#pragma once

// Closed-loop episode execution: observe -> act -> repair -> separation
// projection -> apply -> reward, plus MAPPO training and frozen evaluation.

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "uavtrack/config.hpp"
#include "uavtrack/mappo.hpp"
#include "uavtrack/predictor.hpp"
#include "uavtrack/sa_repair.hpp"
#include "uavtrack/scenario.hpp"

namespace uavtrack {

namespace seed_tag {
inline constexpr std::uint64_t kTargetMotion = 11;
inline constexpr std::uint64_t kMeasurement = 12;
inline constexpr std::uint64_t kRepair = 13;
inline constexpr std::uint64_t kInitMeasurement = 14;
inline constexpr std::uint64_t kNetworkInit = 21;
inline constexpr std::uint64_t kTrainEpisode = 22;
inline constexpr std::uint64_t kActionNoise = 23;
inline constexpr std::uint64_t kShuffle = 24;
inline constexpr std::uint64_t kEvalEpisode = 31;
inline constexpr std::uint64_t kRandomPolicy = 32;
}  // namespace seed_tag

struct StepOutcome {
  std::vector<ActionVec> executed;
  std::vector<RewardBreakdown> rewards;
  double lb = 0.0;
  bool lb_clamped = false;
  ViolationReport report;  // against true positions
  int standoff_predicted = 0;  // UAV-target pairs within d2 of the predictions used for repair
  int repairs_invoked = 0;
  int fallbacks = 0;
};

/// One episode's environment plus its per-target trackers. Single-writer.
class TrackingEnv {
 public:
  explicit TrackingEnv(const ExperimentConfig& cfg) : cfg_(cfg) { cfg_.validate(); }

  void reset(std::uint64_t episode_seed) {
    seed_ = episode_seed;
    world_ = sample_scenario(cfg_.scenario, episode_seed);
    tracks_.clear();
    Rng rng = make_rng(derive_seed(seed_, seed_tag::kInitMeasurement));
    for (const auto& t : world_.targets) tracks_.push_back(init_track(measure(t.pos, rng), cfg_.predictor));
  }

  const ExperimentConfig& config() const { return cfg_; }
  const WorldState& world() const { return world_; }
  const std::vector<TrackEstimate>& predictions() const { return tracks_; }
  bool done() const { return world_.k >= cfg_.scenario.horizon; }

  std::vector<double> observe(int agent) const {
    return uavtrack::observe<TrackEstimate>(world_, agent, tracks_);
  }

  RepairContext repair_context(int agent) const {
    RepairContext ctx;
    ctx.agent = agent;
    ctx.uavs_prev = sensor_views(world_);
    ctx.predictions = tracks_;
    for (const auto& t : world_.targets) ctx.target_jammer.push_back(t.has_jammer);
    ctx.d0 = cfg_.scenario.d0;
    ctx.d2 = cfg_.scenario.d2;
    ctx.factors = cfg_.factors;
    ctx.lb_ceiling = cfg_.scenario.lb_ceiling;
    return ctx;
  }

  StepOutcome step(std::span<const ActionVec> candidates, bool repair_enabled) {
    const auto& sc = cfg_.scenario;
    const int n = world_.n_uav();
    StepOutcome out;
    out.executed.assign(candidates.begin(), candidates.end());
    for (const auto& a : out.executed)
      if (a.move().norm() > sc.d0 + kMobilityTolerance)
        throw Error(ErrorCode::MobilityViolation, "policy action exceeds d0");

    if (repair_enabled) {
      for (int i = 0; i < n; ++i) {
        const RepairContext ctx = repair_context(i);
        if (!needs_repair(out.executed[i], ctx)) continue;
        ++out.repairs_invoked;
        const RepairOutcome r = repair(out.executed[i], ctx, cfg_.sa, derive_seed(seed_, seed_tag::kRepair, world_.k * 1000 + i));
        if (r.status == RepairStatus::Failed) {
          ++out.fallbacks;
          out.executed[i] = fallback_action(ctx, r.action.mode);
        } else {
          out.executed[i] = r.action;
        }
      }
    }

    std::vector<Vec2> prev(n);
    std::vector<Vec2> next(n);
    for (int i = 0; i < n; ++i) {
      prev[i] = world_.uavs[i].pos;
      next[i] = prev[i] + out.executed[i].move();
    }
    std::vector<Vec2> predicted;
    for (const auto& t : tracks_) predicted.push_back(t.pos_pred);
    project_positions(prev, next, predicted, sc, repair_enabled);
    for (int i = 0; i < n; ++i) {
      Vec2 move = next[i] - prev[i];
      if (move.norm() > sc.d0) move *= sc.d0 / move.norm();
      out.executed[i].dx = move.x();
      out.executed[i].dy = move.y();
      next[i] = prev[i] + move;
    }
    out.standoff_predicted = count_standoff_violations(next, predicted, sc.d2);

    const WorldState moved = apply_actions(world_, out.executed, sc);
    const WorldState after = step_targets(moved, sc, derive_seed(seed_, seed_tag::kTargetMotion, world_.k));
    out.report = check_constraints(world_, after, sc);
    const LbValue lb = lb_timestep(after, cfg_.factors, sc.lb_ceiling);
    out.lb = lb.value;
    out.lb_clamped = lb.clamped;
    out.rewards = rewards_all(after, cfg_.factors, sc);

    Rng rng = make_rng(derive_seed(seed_, seed_tag::kMeasurement, after.k));
    for (int j = 0; j < after.m_target(); ++j)
      tracks_[j] = update_and_predict(tracks_[j], measure(after.targets[j].pos, rng), cfg_.predictor);
    world_ = after;
    return out;
  }

 private:
  Vec2 measure(const Vec2& truth, Rng& rng) const {
    std::normal_distribution<double> noise(0.0, 1.0);
    const double nx = noise(rng);
    const double ny = noise(rng);
    return truth + cfg_.predictor.measurement_std * Vec2(nx, ny);
  }

  ExperimentConfig cfg_;
  WorldState world_;
  std::vector<TrackEstimate> tracks_;
  std::uint64_t seed_ = 0;
};

struct EpisodeMetrics {
  int episode = 0;
  double mean_reward = 0.0;  // episode return averaged over agents
  double te = 0.0;
  long violations_c6 = 0;
  long violations_c7 = 0;
  long violations_c8 = 0;
  long violations_c8_predicted = 0;
  long repairs_invoked = 0;
  long fallbacks = 0;
};

struct EpisodeAccumulator {
  EpisodeMetrics m;
  double reward_sum = 0.0;
  int agents = 1;

  void add(const StepOutcome& s) {
    for (const auto& r : s.rewards) reward_sum += r.total;
    m.te -= std::log10(s.lb);
    m.violations_c6 += s.report.count(ViolationKind::Mobility);
    m.violations_c7 += s.report.count(ViolationKind::UavSeparation);
    m.violations_c8 += s.report.count(ViolationKind::TargetStandoff);
    m.violations_c8_predicted += s.standoff_predicted;
    m.repairs_invoked += s.repairs_invoked;
    m.fallbacks += s.fallbacks;
  }
  EpisodeMetrics finish() {
    m.mean_reward = reward_sum / agents;
    return m;
  }
};

/// Produces every agent's candidate action from the current environment state.
using JointPolicy = std::function<std::vector<ActionVec>(const TrackingEnv&)>;
using StepObserver = std::function<void(const TrackingEnv&, const StepOutcome&)>;

inline EpisodeMetrics run_episode(TrackingEnv& env, std::uint64_t episode_seed, const JointPolicy& policy,
                                  bool repair_enabled, const StepObserver& observer = {}) {
  env.reset(episode_seed);
  EpisodeAccumulator acc;
  acc.agents = env.world().n_uav();
  while (!env.done()) {
    const auto candidates = policy(env);
    const StepOutcome s = env.step(candidates, repair_enabled);
    acc.add(s);
    if (observer) observer(env, s);
  }
  return acc.finish();
}

inline Mat policy_feature_batch(const TrackingEnv& env, double position_scale) {
  const auto& w = env.world();
  const int n = w.n_uav();
  Mat f(policy_input_dim(n, w.m_target()), n);
  for (int i = 0; i < n; ++i) f.col(i) = policy_features(env.observe(i), i, n, w.m_target(), position_scale);
  return f;
}

inline Mat value_feature_batch(const TrackingEnv& env, double position_scale) {
  const auto& w = env.world();
  const int n = w.n_uav();
  Mat f(value_input_dim(n, w.m_target()), n);
  for (int i = 0; i < n; ++i)
    f.col(i) = value_features(w, env.predictions(), i, env.config().scenario.horizon, position_scale);
  return f;
}

inline JointPolicy make_network_policy(const PolicyNet& policy, const ExperimentConfig& cfg, bool stochastic,
                                       std::uint64_t seed) {
  auto rng = std::make_shared<Rng>(make_rng(seed));
  const double scale = cfg.train.position_scale;
  const double d0 = cfg.scenario.d0;
  return [&policy, scale, d0, stochastic, rng](const TrackingEnv& env) {
    const auto sampled = act_batch(policy, policy_feature_batch(env, scale), d0, stochastic, *rng);
    std::vector<ActionVec> out;
    for (const auto& s : sampled) out.push_back(s.action);
    return out;
  };
}

inline JointPolicy make_random_policy(const ExperimentConfig& cfg, std::uint64_t seed) {
  auto rng = std::make_shared<Rng>(make_rng(seed));
  const double d0 = cfg.scenario.d0;
  return [rng, d0](const TrackingEnv& env) {
    std::vector<ActionVec> out;
    for (int i = 0; i < env.world().n_uav(); ++i) out.push_back(random_policy(d0, *rng));
    return out;
  };
}

struct TrainResult {
  std::vector<EpisodeMetrics> metrics;
  LearnerState learner;
  std::vector<PpoStats> updates;
  int aborted_updates = 0;
};

/// MAPPO with one actor and one critic shared by all agents.
inline TrainResult train(const ExperimentConfig& cfg, bool repair_enabled, std::uint64_t seed,
                         const std::function<void(const EpisodeMetrics&)>& on_episode = {}) {
  cfg.validate();
  const auto& sc = cfg.scenario;
  const auto& tc = cfg.train;
  TrainResult result;
  result.learner = make_learner(sc.n_uav, sc.m_target, tc, derive_seed(seed, seed_tag::kNetworkInit));
  LearnerState& learner = result.learner;
  Rng action_rng = make_rng(derive_seed(seed, seed_tag::kActionNoise));
  Rng shuffle_rng = make_rng(derive_seed(seed, seed_tag::kShuffle));

  TrackingEnv env(cfg);
  RolloutBuffer buffer(sc.n_uav, policy_input_dim(sc.n_uav, sc.m_target), value_input_dim(sc.n_uav, sc.m_target));
  buffer.reserve(static_cast<std::size_t>(std::max(tc.rollout_len, sc.horizon)) * sc.n_uav);

  for (int episode = 0; episode < tc.total_episodes; ++episode) {
    env.reset(derive_seed(seed, seed_tag::kTrainEpisode, episode));
    EpisodeAccumulator acc;
    acc.agents = sc.n_uav;
    acc.m.episode = episode;
    while (!env.done()) {
      const Mat pin = policy_feature_batch(env, tc.position_scale);
      const Mat vin = value_feature_batch(env, tc.position_scale);
      const auto sampled = act_batch(learner.policy, pin, sc.d0, true, action_rng);
      const Mat values = learner.value.mlp().forward(vin);
      std::vector<ActionVec> candidates;
      for (const auto& s : sampled) candidates.push_back(s.action);
      const StepOutcome step = env.step(candidates, repair_enabled);
      acc.add(step);
      const bool terminal = env.done();
      for (int i = 0; i < sc.n_uav; ++i)
        buffer.push(pin.col(i), vin.col(i), sampled[i], step.rewards[i].total,
                    learner.value_norm.denormalize(values(0, i)), terminal);
    }
    const EpisodeMetrics m = acc.finish();
    result.metrics.push_back(m);
    if (on_episode) on_episode(m);

    if (buffer.steps() >= tc.rollout_len || episode + 1 == tc.total_episodes) {
      const GaeResult adv = gae(buffer, tc.gamma, tc.gae_lambda);
      try {
        result.updates.push_back(ppo_update(learner, buffer, adv, sc.d0, tc, shuffle_rng));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NonFiniteLoss) throw;
        ++result.aborted_updates;
      }
      buffer.clear();
    }
  }
  return result;
}

struct EvalSummary {
  int episodes = 0;
  double mean_reward = 0.0;
  double mean_te = 0.0;
  long violations_c6 = 0;
  long violations_c7 = 0;
  long violations_c8 = 0;
  long violations_c8_predicted = 0;
  long repairs_invoked = 0;
  long fallbacks = 0;
  std::vector<EpisodeMetrics> per_episode;
};

inline void accumulate(EvalSummary& s, const EpisodeMetrics& m) {
  s.per_episode.push_back(m);
  ++s.episodes;
  s.mean_reward += m.mean_reward;
  s.mean_te += m.te;
  s.violations_c6 += m.violations_c6;
  s.violations_c7 += m.violations_c7;
  s.violations_c8 += m.violations_c8;
  s.violations_c8_predicted += m.violations_c8_predicted;
  s.repairs_invoked += m.repairs_invoked;
  s.fallbacks += m.fallbacks;
}

inline void finalize(EvalSummary& s) {
  if (s.episodes > 0) {
    s.mean_reward /= s.episodes;
    s.mean_te /= s.episodes;
  }
}

/// Frozen-policy evaluation (deterministic actions); a null policy selects the random baseline.
inline EvalSummary evaluate(const ExperimentConfig& cfg, const PolicyNet* policy, int episodes,
                            std::span<const std::uint64_t> seeds, bool repair_enabled) {
  EvalSummary summary;
  TrackingEnv env(cfg);
  for (const std::uint64_t seed : seeds) {
    for (int e = 0; e < episodes; ++e) {
      const JointPolicy joint = policy ? make_network_policy(*policy, cfg, false, derive_seed(seed, seed_tag::kActionNoise, e))
                                       : make_random_policy(cfg, derive_seed(seed, seed_tag::kRandomPolicy, e));
      EpisodeMetrics m = run_episode(env, derive_seed(seed, seed_tag::kEvalEpisode, e), joint, repair_enabled);
      m.episode = e;
      accumulate(summary, m);
    }
  }
  finalize(summary);
  return summary;
}

}  // namespace uavtrack
