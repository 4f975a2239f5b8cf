#pragma once

// Constant-velocity Kalman tracker producing next-step target predictions.

#include <algorithm>
#include <cmath>

#include "uavtrack/core.hpp"

namespace uavtrack {

struct PredictorConfig {
  double measurement_std = 50.0;  // m, isotropic noise on the tracker's position fixes
  double process_std = 0.5;       // m/step^2, velocity random walk
  double sigma_prior = 100.0;     // m, reported prediction std of a fresh track

  void validate() const {
    if (!(measurement_std >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "measurement_std must be >= 0");
    if (!(process_std >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "process_std must be >= 0");
    if (!(sigma_prior > measurement_std))
      throw Error(ErrorCode::ConfigInvalid, "sigma_prior must exceed measurement_std");
  }
};

struct TrackEstimate {
  Vec2 pos_pred = Vec2::Zero();  // next-step position
  Vec2 vel_est = Vec2::Zero();
  double sigma_pred = 0.0;
  // Predicted (prior) state [x, y, vx, vy] and covariance for the next measurement.
  Eigen::Vector4d state = Eigen::Vector4d::Zero();
  Eigen::Matrix4d cov = Eigen::Matrix4d::Identity();
};

namespace detail {

inline Eigen::Matrix4d cv_transition() {
  Eigen::Matrix4d f = Eigen::Matrix4d::Identity();
  f(0, 2) = 1.0;
  f(1, 3) = 1.0;
  return f;
}

inline double worst_axis_std(const Eigen::Matrix4d& cov) {
  const Eigen::Matrix2d p = cov.topLeftCorner<2, 2>();
  const double mean = 0.5 * (p(0, 0) + p(1, 1));
  const double radius = std::hypot(0.5 * (p(0, 0) - p(1, 1)), 0.5 * (p(0, 1) + p(1, 0)));
  return std::max(std::sqrt(std::max(mean + radius, 0.0)), 1e-9);
}

inline TrackEstimate finish_prediction(const Eigen::Vector4d& state, const Eigen::Matrix4d& cov) {
  TrackEstimate t;
  t.state = state;
  t.cov = 0.5 * (cov + cov.transpose());
  t.pos_pred = state.head<2>();
  t.vel_est = state.tail<2>();
  t.sigma_pred = worst_axis_std(t.cov);
  return t;
}

}  // namespace detail

/// Fresh track: predicted position is the first fix, velocity zero. The
/// velocity prior is chosen so the predicted position std equals sigma_prior.
inline TrackEstimate init_track(const Vec2& first_measurement, const PredictorConfig& cfg) {
  require_finite(first_measurement, "tracker measurement");
  cfg.validate();
  const double r = cfg.measurement_std * cfg.measurement_std;
  const double v = cfg.sigma_prior * cfg.sigma_prior - r;
  Eigen::Matrix4d p0 = Eigen::Matrix4d::Zero();
  p0.diagonal() << r, r, v, v;
  Eigen::Vector4d x0;
  x0 << first_measurement, 0.0, 0.0;
  const Eigen::Matrix4d f = detail::cv_transition();
  Eigen::Matrix4d q = Eigen::Matrix4d::Zero();
  q(2, 2) = q(3, 3) = cfg.process_std * cfg.process_std;
  TrackEstimate t = detail::finish_prediction(f * x0, f * p0 * f.transpose() + q);
  t.sigma_pred = cfg.sigma_prior;
  return t;
}

/// Kalman update with a position fix, then one-step constant-velocity prediction.
inline TrackEstimate update_and_predict(const TrackEstimate& track, const Vec2& measurement,
                                        const PredictorConfig& cfg) {
  require_finite(measurement, "tracker measurement");
  Eigen::Matrix<double, 2, 4> h = Eigen::Matrix<double, 2, 4>::Zero();
  h(0, 0) = h(1, 1) = 1.0;
  const double r = std::max(cfg.measurement_std * cfg.measurement_std, 1e-18);
  const Eigen::Matrix2d s = h * track.cov * h.transpose() + r * Eigen::Matrix2d::Identity();
  const Eigen::Matrix<double, 4, 2> gain = track.cov * h.transpose() * s.inverse();
  const Eigen::Vector4d x = track.state + gain * (measurement - h * track.state);
  // Joseph form keeps the covariance symmetric PSD.
  const Eigen::Matrix4d ikh = Eigen::Matrix4d::Identity() - gain * h;
  const Eigen::Matrix4d p = ikh * track.cov * ikh.transpose() + r * gain * gain.transpose();

  const Eigen::Matrix4d f = detail::cv_transition();
  Eigen::Matrix4d q = Eigen::Matrix4d::Zero();
  q(2, 2) = q(3, 3) = cfg.process_std * cfg.process_std;
  return detail::finish_prediction(f * x, f * p * f.transpose() + q);
}

}  // namespace uavtrack
