#pragma once

#include <optional>

#include "dynvio/state.hpp"

namespace dynvio {

using Mat26 = Eigen::Matrix<double, 2, 6>;

/// Reprojection of an inverse-depth feature anchored in one body frame into
/// another. Residual = predicted pixel - observed pixel.
struct Reprojection {
  bool valid = false;  ///< false when the point lands behind the target camera
  Vec2 residual = Vec2::Zero();
  /// Jacobians w.r.t. the [dp, dq] part of the anchor / target tangent.
  Mat26 J_anchor = Mat26::Zero();
  Mat26 J_target = Mat26::Zero();
  Vec2 J_inv_depth = Vec2::Zero();
};

Reprojection reproject(const CameraModel& cam, const BodyState& anchor, const BodyState& target,
                       const Vec2& anchor_uv, const Vec2& target_uv, double inv_depth,
                       bool with_jacobians = true);

/// World point of an inverse-depth feature.
Vec3 anchor_to_world(const CameraModel& cam, const BodyState& anchor, const Vec2& anchor_uv,
                     double inv_depth);

/// Camera-frame point of a world point seen from a body state.
Vec3 world_to_camera(const CameraModel& cam, const BodyState& x, const Vec3& p_w);

/// Linear two-view triangulation. Returns the depth of the point in the
/// first camera, or nullopt if the rays are degenerate.
std::optional<double> triangulate_two_view(const CameraModel& cam, const BodyState& x0, const Vec2& uv0,
                                           const BodyState& x1, const Vec2& uv1);

}  // namespace dynvio
