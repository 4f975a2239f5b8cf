#pragma once

// Simulated-annealing repair of actions that would bring a UAV inside the
// safety halo (d2 + 3 sigma_pred) of a predicted target position.

#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "uavtrack/core.hpp"
#include "uavtrack/crlb.hpp"
#include "uavtrack/predictor.hpp"
#include "uavtrack/scenario.hpp"

namespace uavtrack {

struct SaConfig {
  double t_max = 100.0;
  double t_min = 20.0;
  int iters = 20;
  double big_l = 1e6;
  double neighbor_move_std = 25.0;  // m
  double mode_flip_prob = 0.1;
  double global_jump_prob = 0.25;  // share of proposals drawn uniformly from the d0 disk
  double halo_penalty = 10.0;      // added while inside d2 + 3 sigma of any predicted target

  void validate() const {
    auto fail = [](const char* what) { throw Error(ErrorCode::ConfigInvalid, what); };
    if (!(t_max > t_min && t_min > 0.0)) fail("need t_max > t_min > 0");
    if (iters < 1) fail("iters must be >= 1");
    if (!(big_l > 0.0)) fail("big_l must be positive");
    if (!(neighbor_move_std >= 0.0)) fail("neighbor_move_std must be >= 0");
    if (!(mode_flip_prob >= 0.0 && mode_flip_prob <= 1.0)) fail("mode_flip_prob must lie in [0, 1]");
    if (!(global_jump_prob >= 0.0 && global_jump_prob <= 1.0)) fail("global_jump_prob must lie in [0, 1]");
    if (!(halo_penalty >= 0.0)) fail("halo_penalty must be >= 0");
  }
};

struct RepairContext {
  int agent = 0;
  std::vector<SensorView> uavs_prev;  // every UAV's previous position and mode, including this agent
  std::vector<TrackEstimate> predictions;
  std::vector<bool> target_jammer;
  double d0 = 100.0;
  double d2 = 1000.0;
  FactorTable factors;
  double lb_ceiling = kDefaultLbCeiling;

  const Vec2& own_prev() const { return uavs_prev[agent].pos; }
};

inline bool inside_halo(const Vec2& pos, const RepairContext& ctx) {
  for (const auto& p : ctx.predictions)
    if ((pos - p.pos_pred).norm() < ctx.d2 + 3.0 * p.sigma_pred) return true;
  return false;
}

inline bool needs_repair(const ActionVec& candidate, const RepairContext& ctx) {
  return inside_halo(ctx.own_prev() + candidate.move(), ctx);
}

/// Predicted shared reward with this agent moved per `candidate`, others at
/// their previous state and targets at their predicted positions.
inline double predicted_shared_reward(const ActionVec& candidate, const RepairContext& ctx) {
  std::vector<SensorView> sensors = ctx.uavs_prev;
  sensors[ctx.agent].pos = ctx.own_prev() + candidate.move();
  sensors[ctx.agent].mode = candidate.mode;
  std::vector<TargetView> targets;
  targets.reserve(ctx.predictions.size());
  for (std::size_t j = 0; j < ctx.predictions.size(); ++j)
    targets.push_back({ctx.predictions[j].pos_pred, j < ctx.target_jammer.size() && ctx.target_jammer[j]});
  double lb = ctx.lb_ceiling;
  try {
    lb = lb_average(sensors, targets, ctx.factors, ctx.lb_ceiling).value;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ZeroRange) throw;
  }
  return shared_reward_from_lb(lb);
}

inline double sa_objective(const ActionVec& candidate, const RepairContext& ctx, const SaConfig& cfg) {
  double objective = -predicted_shared_reward(candidate, ctx);
  if (needs_repair(candidate, ctx)) objective += cfg.halo_penalty;
  if (candidate.move().norm() > ctx.d0) objective += cfg.big_l;
  return objective;
}

/// Geometric cooling from t_max (step 0) to t_min (step iters-1).
inline double sa_temperature(int step, const SaConfig& cfg) {
  if (cfg.iters <= 1) return cfg.t_max;
  return cfg.t_max * std::pow(cfg.t_min / cfg.t_max, static_cast<double>(step) / (cfg.iters - 1));
}

inline double metropolis_probability(double delta, double temperature) {
  return delta <= 0.0 ? 1.0 : std::exp(-delta / temperature);
}

inline bool metropolis_accept(double delta, double temperature, double u) {
  return delta <= 0.0 || u < std::exp(-delta / temperature);
}

enum class RepairStatus { Unchanged, Repaired, Failed };

struct RepairOutcome {
  ActionVec action;
  double objective = 0.0;
  double input_objective = 0.0;
  RepairStatus status = RepairStatus::Unchanged;
};

inline Vec2 clamp_to_disk(const Vec2& v, double radius) {
  const double n = v.norm();
  return n > radius ? Vec2(v * (radius / n)) : v;
}

/// Metropolis chain over the agent's action; returns the best candidate seen.
/// Candidates that need no repair come back unchanged.
/// status == Failed signals that the best candidate still needs repair and the
/// caller should fall back to fallback_action().
inline RepairOutcome repair(const ActionVec& candidate, const RepairContext& ctx, const SaConfig& cfg,
                            std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  ActionVec current = candidate;
  double current_obj = sa_objective(current, ctx, cfg);
  RepairOutcome out{candidate, current_obj, current_obj, RepairStatus::Unchanged};
  if (!needs_repair(candidate, ctx)) return out;

  for (int step = 0; step < cfg.iters; ++step) {
    const double temperature = sa_temperature(step, cfg);
    ActionVec proposal = current;
    Vec2 move;
    if (unit(rng) < cfg.global_jump_prob) {
      const double radius = ctx.d0 * std::sqrt(unit(rng));
      const double angle = 2.0 * std::numbers::pi * unit(rng);
      move = radius * Vec2(std::cos(angle), std::sin(angle));
    } else {
      const double gx = gauss(rng);
      const double gy = gauss(rng);
      move = clamp_to_disk(current.move() + cfg.neighbor_move_std * Vec2(gx, gy), ctx.d0);
    }
    proposal.dx = move.x();
    proposal.dy = move.y();
    if (unit(rng) < cfg.mode_flip_prob)
      proposal.mode = proposal.mode == RadarMode::Active ? RadarMode::Passive : RadarMode::Active;

    const double proposal_obj = sa_objective(proposal, ctx, cfg);
    if (metropolis_accept(proposal_obj - current_obj, temperature, unit(rng))) {
      current = proposal;
      current_obj = proposal_obj;
      if (current_obj < out.objective) {
        out.action = current;
        out.objective = current_obj;
      }
    }
  }
  out.status = needs_repair(out.action, ctx) ? RepairStatus::Failed : RepairStatus::Repaired;
  return out;
}

/// Full-d0 move directly away from the predicted target nearest to the agent.
inline ActionVec fallback_action(const RepairContext& ctx, RadarMode mode) {
  ActionVec out{0.0, 0.0, mode};
  if (ctx.predictions.empty()) return out;
  const Vec2 self = ctx.own_prev();
  const TrackEstimate* nearest = &ctx.predictions.front();
  for (const auto& p : ctx.predictions)
    if ((self - p.pos_pred).norm() < (self - nearest->pos_pred).norm()) nearest = &p;
  Vec2 away = self - nearest->pos_pred;
  const double n = away.norm();
  away = n > 1e-12 ? Vec2(away / n) : Vec2(1.0, 0.0);
  out.dx = ctx.d0 * away.x();
  out.dy = ctx.d0 * away.y();
  return out;
}

}  // namespace uavtrack
