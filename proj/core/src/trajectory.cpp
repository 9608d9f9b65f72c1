#include "dynvio/trajectory.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dynvio {

PeriodicSpline::PeriodicSpline(std::vector<double> times, std::vector<double> values, double period)
    : t_(std::move(times)), y_(std::move(values)), period_(period) {
  const int n = static_cast<int>(t_.size());
  if (n < 1 || static_cast<int>(y_.size()) != n) throw std::invalid_argument("spline: knots and values differ");
  if (t_.front() != 0.0 || !(period_ > t_.back())) throw std::invalid_argument("spline: invalid knot times");
  for (int i = 1; i < n; ++i)
    if (!(t_[i] > t_[i - 1])) throw std::invalid_argument("spline: knot times must increase");
  m_.assign(n, 0.0);
  if (n == 1) return;
  auto h = [&](int i) { return (i + 1 < n ? t_[i + 1] : period_) - t_[i]; };
  auto y = [&](int i) { return y_[((i % n) + n) % n]; };
  MatX A = MatX::Zero(n, n);
  VecX b(n);
  for (int i = 0; i < n; ++i) {
    const int im = (i - 1 + n) % n;
    const double h0 = h(im), h1 = h(i);
    A(i, im) += h0 / 6.0;
    A(i, i) += (h0 + h1) / 3.0;
    A(i, (i + 1) % n) += h1 / 6.0;
    b(i) = (y(i + 1) - y(i)) / h1 - (y(i) - y(i - 1)) / h0;
  }
  const VecX m = A.fullPivLu().solve(b);
  for (int i = 0; i < n; ++i) m_[i] = m(i);
}

int PeriodicSpline::locate(double t, double& u, double& h) const {
  double tf = std::fmod(t, period_);
  if (tf < 0.0) tf += period_;
  const int n = static_cast<int>(t_.size());
  int i = static_cast<int>(std::upper_bound(t_.begin(), t_.end(), tf) - t_.begin()) - 1;
  i = std::clamp(i, 0, n - 1);
  h = (i + 1 < n ? t_[i + 1] : period_) - t_[i];
  u = tf - t_[i];
  return i;
}

double PeriodicSpline::value(double t) const {
  if (t_.size() == 1) return y_[0];
  double u, h;
  const int i = locate(t, u, h);
  const int j = (i + 1) % static_cast<int>(t_.size());
  const double a = h - u;
  return m_[i] * a * a * a / (6.0 * h) + m_[j] * u * u * u / (6.0 * h) + (y_[i] / h - m_[i] * h / 6.0) * a +
         (y_[j] / h - m_[j] * h / 6.0) * u;
}

double PeriodicSpline::d1(double t) const {
  if (t_.size() == 1) return 0.0;
  double u, h;
  const int i = locate(t, u, h);
  const int j = (i + 1) % static_cast<int>(t_.size());
  const double a = h - u;
  return -m_[i] * a * a / (2.0 * h) + m_[j] * u * u / (2.0 * h) - (y_[i] / h - m_[i] * h / 6.0) +
         (y_[j] / h - m_[j] * h / 6.0);
}

double PeriodicSpline::d2(double t) const {
  if (t_.size() == 1) return 0.0;
  double u, h;
  const int i = locate(t, u, h);
  const int j = (i + 1) % static_cast<int>(t_.size());
  return (m_[i] * (h - u) + m_[j] * u) / h;
}

Trajectory::Trajectory(const std::vector<Waypoint>& wps, double period, const Wobble& wobble)
    : wobble_(wobble), period_(period) {
  if (wps.empty()) throw std::invalid_argument("trajectory needs at least one waypoint");
  std::vector<double> t, x, y, z, yaw;
  for (const auto& w : wps) {
    t.push_back(w.t);
    x.push_back(w.p.x());
    y.push_back(w.p.y());
    z.push_back(w.p.z());
    yaw.push_back(w.yaw);
  }
  x_ = PeriodicSpline(t, x, period);
  y_ = PeriodicSpline(t, y, period);
  z_ = PeriodicSpline(t, z, period);
  yaw_ = PeriodicSpline(t, yaw, period);
}

KinematicSample Trajectory::eval(double t) const {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  KinematicSample s;
  s.p = {x_.value(t), y_.value(t), z_.value(t)};
  s.v = {x_.d1(t), y_.d1(t), z_.d1(t)};
  s.a = {x_.d2(t), y_.d2(t), z_.d2(t)};

  const double wr = kTwoPi * wobble_.roll_freq, wp = kTwoPi * wobble_.pitch_freq;
  const double roll = wobble_.roll_amp * std::sin(wr * t);
  const double droll = wobble_.roll_amp * wr * std::cos(wr * t);
  const double pitch = wobble_.pitch_amp * std::sin(wp * t);
  const double dpitch = wobble_.pitch_amp * wp * std::cos(wp * t);
  const double yaw = yaw_.value(t);
  const double dyaw = yaw_.d1(t);

  s.q = (Eigen::AngleAxisd(yaw, Vec3::UnitZ()) * Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
         Eigen::AngleAxisd(roll, Vec3::UnitX()))
            .normalized();
  const double sr = std::sin(roll), cr = std::cos(roll);
  const double sp = std::sin(pitch), cp = std::cos(pitch);
  s.w_body = {droll - dyaw * sp, dpitch * cr + dyaw * cp * sr, -dpitch * sr + dyaw * cp * cr};
  return s;
}

}  // namespace dynvio
