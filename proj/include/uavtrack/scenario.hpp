#pragma once

// Multi-UAV tracking environment: scenario sampling, target motion, action
// application, constraint checks, observations and rewards.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uavtrack/core.hpp"
#include "uavtrack/crlb.hpp"

namespace uavtrack {

struct UavState {
  Vec2 pos = Vec2::Zero();
  RadarMode last_mode = RadarMode::Active;
};

struct TargetState {
  Vec2 pos = Vec2::Zero();
  Vec2 vel = Vec2::Zero();  // m/step
  bool has_jammer = false;
};

struct WorldState {
  std::vector<UavState> uavs;
  std::vector<TargetState> targets;
  int k = 0;

  int n_uav() const { return static_cast<int>(uavs.size()); }
  int m_target() const { return static_cast<int>(targets.size()); }
};

struct ActionVec {
  double dx = 0.0;
  double dy = 0.0;
  RadarMode mode = RadarMode::Active;

  Vec2 move() const { return {dx, dy}; }
};

struct ScenarioConfig {
  int n_uav = 6;
  int m_target = 3;
  int horizon = 300;
  double p_jammer = 0.5;
  double d0 = 100.0;
  double d1 = 100.0;
  double d2 = 1000.0;
  double uav_ring_radius = 50.0;
  double r_min = 4000.0;
  double r_max = 6000.0;
  double theta_min = -std::numbers::pi / 6.0;
  double theta_max = std::numbers::pi / 6.0;
  double v_min = 10.0;
  double v_max = 30.0;
  double theta_v_min = -std::numbers::pi / 12.0;
  double theta_v_max = std::numbers::pi / 12.0;
  double drive_noise_std = 0.5;
  double alpha = 0.5;
  double penalty_m = 5.0;
  double lb_ceiling = kDefaultLbCeiling;

  void validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::ConfigInvalid, what); };
    if (n_uav < 1) fail("n_uav must be >= 1");
    if (m_target < 0) fail("m_target must be >= 0");
    if (horizon < 1) fail("horizon must be >= 1");
    if (!(p_jammer >= 0.0 && p_jammer <= 1.0)) fail("p_jammer must lie in [0, 1]");
    if (!(d0 > 0.0 && d1 > 0.0 && d2 > 0.0)) fail("d0, d1, d2 must be positive");
    if (!(uav_ring_radius >= 0.0)) fail("uav_ring_radius must be non-negative");
    if (!(r_min >= 0.0 && r_min <= r_max)) fail("need 0 <= r_min <= r_max");
    if (!(theta_min <= theta_max)) fail("need theta_min <= theta_max");
    if (!(v_min >= 0.0 && v_min <= v_max)) fail("need 0 <= v_min <= v_max");
    if (!(theta_v_min <= theta_v_max)) fail("need theta_v_min <= theta_v_max");
    if (!(drive_noise_std >= 0.0)) fail("drive_noise_std must be non-negative");
    if (!(penalty_m >= 0.0)) fail("penalty_m must be non-negative");
    if (!(lb_ceiling > 0.0)) fail("lb_ceiling must be positive");
  }
};

namespace detail {

inline double uniform(Rng& rng, double lo, double hi) {
  if (lo == hi) {
    // Keep the stream aligned with the non-degenerate case.
    std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    return lo;
  }
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace detail

/// Samples an episode's initial state. All randomness comes from `seed`; if
/// `theta_init_override` is set it replaces the sampled reference heading
/// (the draw is still consumed) so rotated episodes share every other draw.
inline WorldState sample_scenario(const ScenarioConfig& cfg, std::uint64_t seed,
                                  std::optional<double> theta_init_override = std::nullopt) {
  cfg.validate();
  Rng rng = make_rng(seed);
  double theta_init = detail::uniform(rng, 0.0, 2.0 * std::numbers::pi);
  if (theta_init_override) theta_init = *theta_init_override;

  WorldState world;
  world.k = 0;
  world.uavs.resize(cfg.n_uav);
  for (int i = 0; i < cfg.n_uav; ++i) {
    const double a = theta_init + 2.0 * std::numbers::pi * i / cfg.n_uav;
    world.uavs[i].pos = cfg.uav_ring_radius * Vec2(std::cos(a), std::sin(a));
    world.uavs[i].last_mode = RadarMode::Active;
  }
  world.targets.resize(cfg.m_target);
  std::bernoulli_distribution jammer(cfg.p_jammer);
  for (auto& t : world.targets) {
    const double r = detail::uniform(rng, cfg.r_min, cfg.r_max);
    const double a = theta_init + detail::uniform(rng, cfg.theta_min, cfg.theta_max);
    const double speed = detail::uniform(rng, cfg.v_min, cfg.v_max);
    const double va = theta_init + detail::uniform(rng, cfg.theta_v_min, cfg.theta_v_max);
    t.pos = r * Vec2(std::cos(a), std::sin(a));
    t.vel = speed * Vec2(std::cos(va), std::sin(va));
    t.has_jammer = jammer(rng);
  }
  return world;
}

/// Uniform motion with Gaussian velocity noise; advances the timestep.
inline WorldState step_targets(const WorldState& world, const ScenarioConfig& cfg, std::uint64_t seed) {
  WorldState next = world;
  Rng rng = make_rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (auto& t : next.targets) {
    t.pos += t.vel;
    const double nx = noise(rng);
    const double ny = noise(rng);
    t.vel += cfg.drive_noise_std * Vec2(nx, ny);
  }
  next.k = world.k + 1;
  return next;
}

inline constexpr double kMobilityTolerance = 1e-9;

inline WorldState apply_actions(const WorldState& world, std::span<const ActionVec> actions,
                                const ScenarioConfig& cfg) {
  if (static_cast<int>(actions.size()) != world.n_uav())
    throw Error(ErrorCode::ConfigInvalid, "one action per UAV required");
  WorldState next = world;
  for (int i = 0; i < world.n_uav(); ++i) {
    const Vec2 move = actions[i].move();
    require_finite(move, "action move");
    if (move.norm() > cfg.d0 + kMobilityTolerance)
      throw Error(ErrorCode::MobilityViolation, "UAV " + std::to_string(i) + " moves beyond d0");
    next.uavs[i].pos += move;
    next.uavs[i].last_mode = actions[i].mode;
  }
  return next;
}

enum class ViolationKind { Mobility, UavSeparation, TargetStandoff };

struct Violation {
  ViolationKind kind;
  int uav;
  int other;  // second UAV for UavSeparation, target for TargetStandoff, -1 for Mobility
};

struct ViolationReport {
  std::vector<Violation> items;

  bool empty() const { return items.empty(); }
  int count(ViolationKind kind) const {
    return static_cast<int>(std::count_if(items.begin(), items.end(), [&](const Violation& v) { return v.kind == kind; }));
  }
  bool involves(int uav, ViolationKind kind) const {
    return std::any_of(items.begin(), items.end(), [&](const Violation& v) {
      return v.kind == kind && (v.uav == uav || (kind == ViolationKind::UavSeparation && v.other == uav));
    });
  }
};

/// UAV separation and target standoff violations of a single state.
inline void append_position_violations(const WorldState& world, const ScenarioConfig& cfg, ViolationReport& report) {
  const int n = world.n_uav();
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if ((world.uavs[i].pos - world.uavs[j].pos).norm() < cfg.d1)
        report.items.push_back({ViolationKind::UavSeparation, i, j});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < world.m_target(); ++j)
      if ((world.uavs[i].pos - world.targets[j].pos).norm() < cfg.d2)
        report.items.push_back({ViolationKind::TargetStandoff, i, j});
}

inline ViolationReport check_constraints(const WorldState& prev, const WorldState& next, const ScenarioConfig& cfg) {
  if (prev.n_uav() != next.n_uav() || prev.m_target() != next.m_target())
    throw Error(ErrorCode::ConfigInvalid, "mismatched world sizes");
  ViolationReport report;
  for (int i = 0; i < next.n_uav(); ++i)
    if ((next.uavs[i].pos - prev.uavs[i].pos).norm() > cfg.d0 + kMobilityTolerance)
      report.items.push_back({ViolationKind::Mobility, i, -1});
  append_position_violations(next, cfg, report);
  return report;
}

/// Counts UAV-target pairs closer than d2 against arbitrary reference target positions.
inline int count_standoff_violations(std::span<const Vec2> uav_pos, std::span<const Vec2> target_pos, double d2) {
  int count = 0;
  for (const auto& u : uav_pos)
    for (const auto& t : target_pos)
      if ((u - t).norm() < d2) ++count;
  return count;
}

inline std::vector<SensorView> sensor_views(const WorldState& world) {
  std::vector<SensorView> out;
  out.reserve(world.uavs.size());
  for (const auto& u : world.uavs) out.push_back({u.pos, u.last_mode});
  return out;
}

inline std::vector<TargetView> target_views(const WorldState& world) {
  std::vector<TargetView> out;
  out.reserve(world.targets.size());
  for (const auto& t : world.targets) out.push_back({t.pos, t.has_jammer});
  return out;
}

/// Average CRLB trace of the current state; `excluded_uav` drops one radar from both mode sets.
inline LbValue lb_timestep(const WorldState& world, const FactorTable& factors, double ceiling,
                           int excluded_uav = -1) {
  const auto sensors = sensor_views(world);
  const auto targets = target_views(world);
  return lb_average(sensors, targets, factors, ceiling, excluded_uav);
}

inline double shared_reward_from_lb(double lb) { return -std::log10(lb); }

inline double shared_reward(const WorldState& world, const FactorTable& factors, const ScenarioConfig& cfg) {
  return shared_reward_from_lb(lb_timestep(world, factors, cfg.lb_ceiling).value);
}

inline double distinct_reward(const WorldState& world, int agent, const FactorTable& factors,
                              const ScenarioConfig& cfg) {
  const double with = lb_timestep(world, factors, cfg.lb_ceiling).value;
  const double without = lb_timestep(world, factors, cfg.lb_ceiling, agent).value;
  return shared_reward_from_lb(with) - shared_reward_from_lb(without);
}

struct RewardBreakdown {
  double shared = 0.0;
  double distinct = 0.0;
  double penalty = 0.0;
  double total = 0.0;
};

inline RewardBreakdown compose_reward(double shared, double distinct, double penalty, double alpha) {
  return {shared, distinct, penalty, shared + alpha * distinct - penalty};
}

inline bool participates_in_position_violation(const WorldState& world, int agent, const ScenarioConfig& cfg) {
  for (int j = 0; j < world.n_uav(); ++j)
    if (j != agent && (world.uavs[agent].pos - world.uavs[j].pos).norm() < cfg.d1) return true;
  for (const auto& t : world.targets)
    if ((world.uavs[agent].pos - t.pos).norm() < cfg.d2) return true;
  return false;
}

inline RewardBreakdown reward(const WorldState& world, int agent, const FactorTable& factors,
                              const ScenarioConfig& cfg) {
  const double penalty = participates_in_position_violation(world, agent, cfg) ? cfg.penalty_m : 0.0;
  return compose_reward(shared_reward(world, factors, cfg), distinct_reward(world, agent, factors, cfg), penalty,
                        cfg.alpha);
}

/// Rewards of every agent, sharing a single LB evaluation.
inline std::vector<RewardBreakdown> rewards_all(const WorldState& world, const FactorTable& factors,
                                                const ScenarioConfig& cfg, double* lb_out = nullptr) {
  const double lb = lb_timestep(world, factors, cfg.lb_ceiling).value;
  if (lb_out) *lb_out = lb;
  const double shared = shared_reward_from_lb(lb);
  std::vector<RewardBreakdown> out;
  out.reserve(world.uavs.size());
  for (int i = 0; i < world.n_uav(); ++i) {
    const double without = lb_timestep(world, factors, cfg.lb_ceiling, i).value;
    const double penalty = participates_in_position_violation(world, i, cfg) ? cfg.penalty_m : 0.0;
    out.push_back(compose_reward(shared, shared - shared_reward_from_lb(without), penalty, cfg.alpha));
  }
  return out;
}

inline int observation_length(int n_uav, int m_target) { return 2 * (n_uav - 1) + 3 * m_target + 1; }

/// Per-agent observation: other UAVs' relative positions, relative predicted
/// target positions, jammer flags and the agent's own last mode.
template <typename Prediction>
std::vector<double> observe(const WorldState& world, int agent, std::span<const Prediction> predictions) {
  if (static_cast<int>(predictions.size()) != world.m_target())
    throw Error(ErrorCode::ConfigInvalid, "one prediction per target required");
  const Vec2 self = world.uavs[agent].pos;
  std::vector<double> obs;
  obs.reserve(observation_length(world.n_uav(), world.m_target()));
  for (int i = 0; i < world.n_uav(); ++i) {
    if (i == agent) continue;
    const Vec2 rel = world.uavs[i].pos - self;
    obs.push_back(rel.x());
    obs.push_back(rel.y());
  }
  for (const auto& p : predictions) {
    const Vec2 rel = p.pos_pred - self;
    obs.push_back(rel.x());
    obs.push_back(rel.y());
  }
  for (const auto& t : world.targets) obs.push_back(t.has_jammer ? 1.0 : 0.0);
  obs.push_back(world.uavs[agent].last_mode == RadarMode::Active ? 1.0 : 0.0);
  return obs;
}

/// Nudges proposed UAV positions into the feasible set by alternating
/// projections: pairwise separation d1, optional standoff d2 from keep-out
/// centers, and mobility d0 around the previous positions. Returns the number
/// of sweeps used; positions are modified in place.
inline int project_positions(std::span<const Vec2> prev, std::span<Vec2> pos, std::span<const Vec2> keep_out,
                             const ScenarioConfig& cfg, bool enforce_standoff, int max_sweeps = 2000) {
  constexpr double kMargin = 1e-6;
  const int n = static_cast<int>(pos.size());
  const double min_sep = cfg.d1 + kMargin;
  const double min_standoff = cfg.d2 + kMargin;
  auto within_mobility = [&](int i) {
    const Vec2 d = pos[i] - prev[i];
    const double norm = d.norm();
    if (norm > cfg.d0) pos[i] = prev[i] + d * (cfg.d0 / norm);
  };
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool any = false;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        Vec2 sep = pos[j] - pos[i];
        double d = sep.norm();
        if (d >= min_sep) continue;
        any = true;
        Vec2 axis;
        if (d < 1e-12) {
          const double a = 2.0 * std::numbers::pi * (i * 7 + j * 13) / 97.0;
          axis = Vec2(std::cos(a), std::sin(a));
        } else {
          axis = sep / d;
        }
        const double push = 0.5 * (min_sep - d) + kMargin;
        pos[i] -= push * axis;
        pos[j] += push * axis;
      }
    }
    if (enforce_standoff) {
      for (int i = 0; i < n; ++i) {
        for (const auto& c : keep_out) {
          Vec2 off = pos[i] - c;
          double d = off.norm();
          if (d >= min_standoff) continue;
          any = true;
          if (d < 1e-12) {
            off = pos[i] - prev[i];
            if (off.norm() < 1e-12) off = Vec2(1.0, 0.0);
            d = off.norm();
          }
          pos[i] = c + off * ((min_standoff + kMargin) / d);
        }
      }
    }
    bool mobility_ok = true;
    for (int i = 0; i < n; ++i) {
      if ((pos[i] - prev[i]).norm() > cfg.d0) {
        mobility_ok = false;
        within_mobility(i);
      }
    }
    if (!any && mobility_ok) return sweep;
  }
  // Not converged: pull conflicting UAVs back toward their previous positions.
  for (int round = 0; round <= 60; ++round) {
    std::vector<bool> conflict(n, false);
    bool any = false;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if ((pos[j] - pos[i]).norm() < min_sep) conflict[i] = conflict[j] = any = true;
    if (!any) break;
    for (int i = 0; i < n; ++i)
      if (conflict[i]) pos[i] = round == 60 ? prev[i] : Vec2(prev[i] + 0.5 * (pos[i] - prev[i]));
  }
  return max_sweeps;
}

}  // namespace uavtrack
