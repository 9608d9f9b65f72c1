#include "dynvio/state.hpp"

#include <cmath>

namespace dynvio {

bool BodyState::finite() const {
  return std::isfinite(stamp) && p_wb.allFinite() && v_wb.allFinite() &&
         q_wb.coeffs().allFinite() && b_a.allFinite() && b_w.allFinite();
}

BodyState boxplus(const BodyState& x, const Vec15& delta) {
  if (!delta.allFinite()) throw NonFiniteError("boxplus: non-finite increment");
  BodyState out = x;
  out.p_wb += delta.segment<3>(tangent::kP);
  out.q_wb = (x.q_wb * exp_quat(delta.segment<3>(tangent::kQ))).normalized();
  out.v_wb += delta.segment<3>(tangent::kV);
  out.b_a += delta.segment<3>(tangent::kBa);
  out.b_w += delta.segment<3>(tangent::kBw);
  return out;
}

Vec15 boxminus(const BodyState& a, const BodyState& b) {
  Vec15 d;
  d.segment<3>(tangent::kP) = a.p_wb - b.p_wb;
  d.segment<3>(tangent::kQ) = log_quat(b.q_wb.conjugate() * a.q_wb);
  d.segment<3>(tangent::kV) = a.v_wb - b.v_wb;
  d.segment<3>(tangent::kBa) = a.b_a - b.b_a;
  d.segment<3>(tangent::kBw) = a.b_w - b.b_w;
  return d;
}

void CameraModel::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("camera: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw std::invalid_argument("camera: image size must be positive");
  if (cx < 0.0 || cx > width || cy < 0.0 || cy > height)
    throw std::invalid_argument("camera: principal point outside image");
}

bool CameraModel::in_image(const Vec2& uv) const {
  return uv.x() >= 0.0 && uv.y() >= 0.0 && uv.x() < width && uv.y() < height;
}

Vec2 project(const CameraModel& cam, const Vec3& p) {
  if (!(p.z() > kMinProjectDepth)) throw BehindCameraError("project: point behind camera");
  return {cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy};
}

Vec3 unproject(const CameraModel& cam, const Vec2& uv) {
  return {(uv.x() - cam.cx) / cam.fx, (uv.y() - cam.cy) / cam.fy, 1.0};
}

Vec3 backproject(const CameraModel& cam, const Vec2& uv, double depth) {
  return depth * unproject(cam, uv);
}

RigidTransform forward_looking_mount(const Vec3& t_bc) {
  RigidTransform T;
  // columns: camera x, y, z axes expressed in body coordinates
  T.R << 0.0, 0.0, 1.0,
         -1.0, 0.0, 0.0,
         0.0, -1.0, 0.0;
  T.t = t_bc;
  return T;
}

std::string to_string(FeatureCategory c) {
  switch (c) {
    case FeatureCategory::kTrackedOptimized: return "tracked_optimized";
    case FeatureCategory::kTrackedNew: return "tracked_new";
    case FeatureCategory::kLostInWindow: return "lost_in_window";
  }
  return "unknown";
}

const Observation* Feature::find(long frame_id) const {
  for (const auto& o : track)
    if (o.frame_id == frame_id) return &o;
  return nullptr;
}

}  // namespace dynvio
