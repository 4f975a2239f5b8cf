#pragma once

// Fisher information and CRLB for active (range + bearing) and passive
// (direction-of-arrival) radar measurements of a planar target.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "uavtrack/core.hpp"

namespace uavtrack {

inline constexpr double kMinRange = 1e-9;
inline constexpr double kConditionThreshold = 1e-12;
inline constexpr double kDefaultLbCeiling = 1e8;

/// Noise scaling of an active radar: range variance r^4/f_range, bearing variance r^4/f_bearing.
struct ActiveFactors {
  double f_range = 1e12;
  double f_bearing = 1e18;
};

/// Noise scaling of a passive radar: DOA variance r^2/f_doa.
struct PassiveFactor {
  double f_doa = 2.5e11;
};

/// 2x2 Fisher information of a target position estimate (units 1/m^2).
struct Fim {
  Mat2 m = Mat2::Zero();

  static Fim zero() { return {}; }
  Fim& operator+=(const Fim& other) {
    m += other.m;
    return *this;
  }
};

struct LbValue {
  double value = 0.0;
  bool clamped = false;
};

namespace detail {

inline double checked_range(const Vec2& uav, const Vec2& target) {
  require_finite(uav, "uav position");
  require_finite(target, "target position");
  const double r = (target - uav).norm();
  if (r < kMinRange) throw Error(ErrorCode::ZeroRange, "radar and target coincide");
  return r;
}

}  // namespace detail

/// Jacobian of (range, bearing) with respect to the target position.
inline Mat2 range_bearing_jacobian(const Vec2& uav, const Vec2& target) {
  const double r = detail::checked_range(uav, target);
  const double dx = target.x() - uav.x();
  const double dy = target.y() - uav.y();
  const double r2 = r * r;
  Mat2 h;
  h << dx / r, dy / r, -dy / r2, dx / r2;
  return h;
}

inline Mat2 active_noise_cov(double range, const ActiveFactors& factors) {
  if (!(range >= kMinRange)) throw Error(ErrorCode::ZeroRange, "non-positive range");
  const double r4 = range * range * range * range;
  Mat2 cov = Mat2::Zero();
  cov(0, 0) = r4 / factors.f_range;
  cov(1, 1) = r4 / factors.f_bearing;
  return cov;
}

/// Contribution of one active radar: H^T Sigma^-1 H.
inline Fim fim_active_single(const Vec2& uav, const Vec2& target, const ActiveFactors& factors) {
  const double r = detail::checked_range(uav, target);
  const Mat2 h = range_bearing_jacobian(uav, target);
  const Mat2 cov = active_noise_cov(r, factors);
  const Eigen::Vector2d info(1.0 / cov(0, 0), 1.0 / cov(1, 1));
  return {h.transpose() * info.asDiagonal() * h};
}

inline Fim fim_active(std::span<const Vec2> am_uavs, const Vec2& target, const ActiveFactors& factors) {
  Fim fim;
  for (const auto& uav : am_uavs) fim += fim_active_single(uav, target, factors);
  return fim;
}

/// One row of the DOA measurement matrix; its norm is 1/r.
inline Eigen::RowVector2d doa_row(const Vec2& uav, const Vec2& target) {
  const double r = detail::checked_range(uav, target);
  const double r2 = r * r;
  return {(uav.y() - target.y()) / r2, (target.x() - uav.x()) / r2};
}

inline Fim fim_passive_single(const Vec2& uav, const Vec2& target, const PassiveFactor& factor) {
  const double r = detail::checked_range(uav, target);
  const Eigen::RowVector2d row = doa_row(uav, target);
  const double inv_var = factor.f_doa / (r * r);
  return {row.transpose() * row * inv_var};
}

inline Fim fim_passive(std::span<const Vec2> pm_uavs, const Vec2& target, const PassiveFactor& factor) {
  Fim fim;
  for (const auto& uav : pm_uavs) fim += fim_passive_single(uav, target, factor);
  return fim;
}

/// Eigenvalues of the symmetric part, ascending.
inline std::pair<double, double> fim_eigenvalues(const Fim& fim) {
  const double a = fim.m(0, 0);
  const double c = fim.m(1, 1);
  const double b = 0.5 * (fim.m(0, 1) + fim.m(1, 0));
  const double mean = 0.5 * (a + c);
  const double radius = std::hypot(0.5 * (a - c), b);
  return {mean - radius, mean + radius};
}

/// tr(FIM^-1) when the FIM is acceptably conditioned, else the ceiling with clamped=true.
/// Bounds beyond the ceiling are reported as the ceiling, also flagged.
inline LbValue crlb_trace(const Fim& fim, double ceiling = kDefaultLbCeiling) {
  const auto [lo, hi] = fim_eigenvalues(fim);
  if (!(lo > 0.0) || !(lo > kConditionThreshold * hi)) return {ceiling, true};
  const double a = fim.m(0, 0);
  const double c = fim.m(1, 1);
  const double b = 0.5 * (fim.m(0, 1) + fim.m(1, 0));
  const double det = a * c - b * b;
  const double trace_inv = (a + c) / det;
  if (!std::isfinite(trace_inv) || !(trace_inv > 0.0) || trace_inv >= ceiling) return {ceiling, true};
  return {trace_inv, false};
}

/// Per-run radar factors with optional per (uav, target) overrides.
class FactorTable {
 public:
  FactorTable() = default;
  FactorTable(ActiveFactors active, PassiveFactor passive) : active_(active), passive_(passive) {}

  const ActiveFactors& active_default() const { return active_; }
  const PassiveFactor& passive_default() const { return passive_; }
  ActiveFactors& active_default() { return active_; }
  PassiveFactor& passive_default() { return passive_; }

  void set_active_override(int uav, int target, ActiveFactors f) { active_overrides_[{uav, target}] = f; }
  void set_passive_override(int uav, int target, PassiveFactor f) { passive_overrides_[{uav, target}] = f; }

  ActiveFactors active(int uav, int target) const {
    auto it = active_overrides_.find({uav, target});
    return it == active_overrides_.end() ? active_ : it->second;
  }
  PassiveFactor passive(int uav, int target) const {
    auto it = passive_overrides_.find({uav, target});
    return it == passive_overrides_.end() ? passive_ : it->second;
  }

  const std::map<std::pair<int, int>, ActiveFactors>& active_overrides() const { return active_overrides_; }
  const std::map<std::pair<int, int>, PassiveFactor>& passive_overrides() const { return passive_overrides_; }

 private:
  ActiveFactors active_{};
  PassiveFactor passive_{};
  std::map<std::pair<int, int>, ActiveFactors> active_overrides_;
  std::map<std::pair<int, int>, PassiveFactor> passive_overrides_;
};

enum class RadarMode : int { Passive = 0, Active = 1 };

struct SensorView {
  Vec2 pos;
  RadarMode mode = RadarMode::Active;
};

struct TargetView {
  Vec2 pos;
  bool has_jammer = false;
};

/// FIM of one target: AM radars for non-jammer targets, PM radars for jammer targets.
inline Fim target_fim(std::span<const SensorView> sensors, const TargetView& target, int target_index,
                      const FactorTable& factors, int excluded_sensor = -1) {
  Fim fim;
  for (int i = 0; i < static_cast<int>(sensors.size()); ++i) {
    if (i == excluded_sensor) continue;
    const auto& s = sensors[i];
    if (target.has_jammer) {
      if (s.mode == RadarMode::Passive)
        fim += fim_passive_single(s.pos, target.pos, factors.passive(i, target_index));
    } else if (s.mode == RadarMode::Active) {
      fim += fim_active_single(s.pos, target.pos, factors.active(i, target_index));
    }
  }
  return fim;
}

/// Multi-target average CRLB trace at one timestep.
inline LbValue lb_average(std::span<const SensorView> sensors, std::span<const TargetView> targets,
                          const FactorTable& factors, double ceiling, int excluded_sensor = -1) {
  if (targets.empty()) return {ceiling, true};
  LbValue out;
  double sum = 0.0;
  for (int j = 0; j < static_cast<int>(targets.size()); ++j) {
    const LbValue t = crlb_trace(target_fim(sensors, targets[j], j, factors, excluded_sensor), ceiling);
    sum += t.value;
    out.clamped = out.clamped || t.clamped;
  }
  out.value = sum / static_cast<double>(targets.size());
  return out;
}

/// Tracking effect: negative sum of base-10 logs of the LB series.
inline double tracking_effect(std::span<const double> lb_series) {
  double te = 0.0;
  for (double lb : lb_series) {
    if (!(lb > 0.0)) throw Error(ErrorCode::NonPositiveLb, "LB entries must be positive");
    te -= std::log10(lb);
  }
  return te;
}

}  // namespace uavtrack
