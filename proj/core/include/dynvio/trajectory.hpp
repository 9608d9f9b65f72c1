#pragma once

#include <vector>

#include "dynvio/geometry.hpp"

namespace dynvio {

/// Periodic cubic interpolating spline; twice continuously differentiable,
/// including across the period boundary.
class PeriodicSpline {
 public:
  PeriodicSpline() = default;
  /// `times` strictly increasing starting at 0, `period` > times.back();
  /// the value at `period` wraps to values[0].
  PeriodicSpline(std::vector<double> times, std::vector<double> values, double period);

  double value(double t) const;
  double d1(double t) const;
  double d2(double t) const;

 private:
  /// Segment index and local offset for a time folded into [0, period).
  int locate(double t, double& u, double& h) const;

  std::vector<double> t_;
  std::vector<double> y_;
  std::vector<double> m_;  ///< second derivatives at the knots
  double period_ = 1.0;
};

struct Waypoint {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
  double yaw = 0.0;
};

/// Smooth roll/pitch wobble: amplitude (rad) and frequency (Hz).
struct Wobble {
  double roll_amp = 0.0;
  double roll_freq = 0.0;
  double pitch_amp = 0.0;
  double pitch_freq = 0.0;
};

struct KinematicSample {
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 a = Vec3::Zero();
  Quat q = Quat::Identity();
  Vec3 w_body = Vec3::Zero();  ///< angular velocity in the body frame
};

/// Closed-loop body trajectory: periodic splines through waypoints for
/// position and yaw, analytic roll/pitch wobble, orientation composed as
/// yaw-pitch-roll. All derivatives are analytic.
class Trajectory {
 public:
  Trajectory() = default;
  /// Waypoint times must start at 0; the loop closes at `period`.
  Trajectory(const std::vector<Waypoint>& waypoints, double period, const Wobble& wobble = {});

  KinematicSample eval(double t) const;
  double period() const { return period_; }

 private:
  PeriodicSpline x_, y_, z_, yaw_;
  Wobble wobble_;
  double period_ = 1.0;
};

}  // namespace dynvio
