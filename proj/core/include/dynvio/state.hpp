#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "dynvio/geometry.hpp"

namespace dynvio {

/// Tangent layout of one body state: [dp, dq, dv, dba, dbw].
namespace tangent {
inline constexpr int kP = 0;
inline constexpr int kQ = 3;
inline constexpr int kV = 6;
inline constexpr int kBa = 9;
inline constexpr int kBw = 12;
inline constexpr int kDim = 15;
}  // namespace tangent

struct BodyState {
  double stamp = 0.0;
  Vec3 p_wb = Vec3::Zero();
  Vec3 v_wb = Vec3::Zero();
  Quat q_wb = Quat::Identity();
  Vec3 b_a = Vec3::Zero();
  Vec3 b_w = Vec3::Zero();

  bool finite() const;
  bool operator==(const BodyState&) const = default;
};

class NonFiniteError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Manifold retraction: additive on p, v, biases; q <- q * Exp(dq).
BodyState boxplus(const BodyState& x, const Vec15& delta);

/// Inverse of boxplus: boxplus(b, boxminus(a, b)) == a.
Vec15 boxminus(const BodyState& a, const BodyState& b);

struct RigidTransform {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return R * x + t; }
  RigidTransform inverse() const { return {R.transpose(), -R.transpose() * t}; }
};

/// Pinhole camera. T_bc maps camera-frame points into the body frame.
struct CameraModel {
  double fx = 400.0;
  double fy = 400.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;
  RigidTransform T_bc;

  void validate() const;
  bool in_image(const Vec2& uv) const;
};

class BehindCameraError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline constexpr double kMinProjectDepth = 1e-6;

/// Pixel of a camera-frame point. Throws BehindCameraError for z <= 1e-6.
Vec2 project(const CameraModel& cam, const Vec3& landmark_c);

/// Camera-frame point at the given depth along the pixel ray.
Vec3 backproject(const CameraModel& cam, const Vec2& uv, double depth);

/// Normalized ray (z = 1) of a pixel.
Vec3 unproject(const CameraModel& cam, const Vec2& uv);

/// Body frame to camera frame mounting used by the simulator presets:
/// camera z looks along body x, camera x along body -y.
RigidTransform forward_looking_mount(const Vec3& t_bc = Vec3(0.05, 0.0, 0.02));

enum class FeatureCategory { kTrackedOptimized, kTrackedNew, kLostInWindow };

std::string to_string(FeatureCategory c);

struct Observation {
  long frame_id = -1;
  Vec2 uv = Vec2::Zero();
  bool operator==(const Observation&) const = default;
};

/// A point feature parameterized by inverse depth in its anchor camera (the
/// first observation of the track).
struct Feature {
  long id = -1;
  double inv_depth = 0.0;
  double weight = 1.0;
  std::vector<Observation> track;
  FeatureCategory category = FeatureCategory::kTrackedNew;
  /// True once the feature has been admitted to the optimized set.
  bool graduated = false;
  /// True when inv_depth holds a usable estimate.
  bool triangulated = false;

  const Observation& anchor() const { return track.front(); }
  const Observation* find(long frame_id) const;
  bool operator==(const Feature&) const = default;
};

}  // namespace dynvio
