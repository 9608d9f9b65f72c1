#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace dynvio {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec15 = Eigen::Matrix<double, 15, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat15 = Eigen::Matrix<double, 15, 15>;
using Quat = Eigen::Quaterniond;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// Rotation angles below this use the first-order series in exp/log.
inline constexpr double kSmallAngle = 1e-8;

Mat3 skew(const Vec3& v);

/// Quaternion exponential of a rotation vector (axis * angle).
Quat exp_quat(const Vec3& theta);

/// Rotation vector of a unit quaternion, angle in [0, pi].
Vec3 log_quat(const Quat& q);

/// SO(3) right Jacobian: Exp(theta + d) ~= Exp(theta) Exp(Jr d).
Mat3 right_jacobian(const Vec3& theta);

/// Inverse of the SO(3) right Jacobian.
Mat3 right_jacobian_inv(const Vec3& theta);

/// Left / right quaternion product matrices, coefficient order (w, x, y, z):
/// a * b == quat_left(a) * [b] == quat_right(b) * [a].
Eigen::Matrix4d quat_left(const Quat& q);
Eigen::Matrix4d quat_right(const Quat& q);

inline Eigen::Vector4d wxyz(const Quat& q) { return {q.w(), q.x(), q.y(), q.z()}; }

/// Bit-exact coefficient equality, used by the defaulted value comparisons.
inline bool operator==(const Quat& a, const Quat& b) { return a.coeffs() == b.coeffs(); }

}  // namespace dynvio
