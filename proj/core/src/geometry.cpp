#include "dynvio/geometry.hpp"

#include <cmath>

namespace dynvio {

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Quat exp_quat(const Vec3& theta) {
  const double angle = theta.norm();
  if (angle < kSmallAngle) {
    Quat q(1.0, 0.5 * theta.x(), 0.5 * theta.y(), 0.5 * theta.z());
    return q.normalized();
  }
  const double half = 0.5 * angle;
  const Vec3 axis = theta / angle;
  const double s = std::sin(half);
  return Quat(std::cos(half), s * axis.x(), s * axis.y(), s * axis.z());
}

Vec3 log_quat(const Quat& q_in) {
  Quat q = q_in.normalized();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Vec3 v = q.vec();
  const double n = v.norm();
  if (n < kSmallAngle) return 2.0 * v / q.w();
  return 2.0 * std::atan2(n, q.w()) * v / n;
}

Mat3 right_jacobian(const Vec3& theta) {
  const double t = theta.norm();
  const Mat3 k = skew(theta);
  if (t < 1e-6) return Mat3::Identity() - 0.5 * k + k * k / 6.0;
  return Mat3::Identity() - (1.0 - std::cos(t)) / (t * t) * k + (t - std::sin(t)) / (t * t * t) * k * k;
}

Mat3 right_jacobian_inv(const Vec3& theta) {
  const double t = theta.norm();
  const Mat3 k = skew(theta);
  if (t < 1e-6) return Mat3::Identity() + 0.5 * k + k * k / 12.0;
  const double c = 1.0 / (t * t) - (1.0 + std::cos(t)) / (2.0 * t * std::sin(t));
  return Mat3::Identity() + 0.5 * k + c * k * k;
}

Eigen::Matrix4d quat_left(const Quat& q) {
  Eigen::Matrix4d m;
  const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
  m << w, -x, -y, -z,
       x, w, -z, y,
       y, z, w, -x,
       z, -y, x, w;
  return m;
}

Eigen::Matrix4d quat_right(const Quat& q) {
  Eigen::Matrix4d m;
  const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
  m << w, -x, -y, -z,
       x, w, z, -y,
       y, -z, w, x,
       z, y, -x, w;
  return m;
}

}  // namespace dynvio
