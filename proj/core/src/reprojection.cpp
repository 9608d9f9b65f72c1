#include "dynvio/reprojection.hpp"

#include <Eigen/SVD>
#include <cmath>

namespace dynvio {

Vec3 anchor_to_world(const CameraModel& cam, const BodyState& anchor, const Vec2& anchor_uv,
                     double inv_depth) {
  const Vec3 p_c = unproject(cam, anchor_uv) / inv_depth;
  return anchor.q_wb * cam.T_bc.apply(p_c) + anchor.p_wb;
}

Vec3 world_to_camera(const CameraModel& cam, const BodyState& x, const Vec3& p_w) {
  const Vec3 p_b = x.q_wb.conjugate() * (p_w - x.p_wb);
  return cam.T_bc.R.transpose() * (p_b - cam.T_bc.t);
}

Reprojection reproject(const CameraModel& cam, const BodyState& anchor, const BodyState& target,
                       const Vec2& anchor_uv, const Vec2& target_uv, double inv_depth,
                       bool with_jacobians) {
  Reprojection out;
  const Mat3& R_bc = cam.T_bc.R;
  const Vec3 f_a = unproject(cam, anchor_uv);
  const Vec3 p_ca = f_a / inv_depth;
  const Vec3 p_ba = R_bc * p_ca + cam.T_bc.t;
  const Mat3 R_a = anchor.q_wb.toRotationMatrix();
  const Mat3 R_t = target.q_wb.toRotationMatrix();
  const Vec3 p_w = R_a * p_ba + anchor.p_wb;
  const Vec3 p_bt = R_t.transpose() * (p_w - target.p_wb);
  const Vec3 p_ct = R_bc.transpose() * (p_bt - cam.T_bc.t);
  if (!(p_ct.z() > kMinProjectDepth) || !std::isfinite(p_ct.z())) return out;

  out.valid = true;
  const double iz = 1.0 / p_ct.z();
  out.residual = Vec2(cam.fx * p_ct.x() * iz + cam.cx, cam.fy * p_ct.y() * iz + cam.cy) - target_uv;
  if (!with_jacobians) return out;

  Eigen::Matrix<double, 2, 3> dpi;
  dpi << cam.fx * iz, 0.0, -cam.fx * p_ct.x() * iz * iz,
         0.0, cam.fy * iz, -cam.fy * p_ct.y() * iz * iz;
  const Eigen::Matrix<double, 2, 3> d_bt = dpi * R_bc.transpose();
  const Eigen::Matrix<double, 2, 3> d_w = d_bt * R_t.transpose();

  out.J_target.leftCols<3>() = -d_w;
  out.J_target.rightCols<3>() = d_bt * skew(p_bt);
  out.J_anchor.leftCols<3>() = d_w;
  out.J_anchor.rightCols<3>() = -d_w * R_a * skew(p_ba);
  out.J_inv_depth = d_w * R_a * R_bc * (-f_a / (inv_depth * inv_depth));
  return out;
}

std::optional<double> triangulate_two_view(const CameraModel& cam, const BodyState& x0, const Vec2& uv0,
                                           const BodyState& x1, const Vec2& uv1) {
  // camera-0 frame is the reference; P1 maps camera-0 points into camera 1
  const Mat3 R_w0 = x0.q_wb.toRotationMatrix() * cam.T_bc.R;
  const Vec3 t_w0 = x0.q_wb * cam.T_bc.t + x0.p_wb;
  const Mat3 R_w1 = x1.q_wb.toRotationMatrix() * cam.T_bc.R;
  const Vec3 t_w1 = x1.q_wb * cam.T_bc.t + x1.p_wb;
  const Mat3 R_10 = R_w1.transpose() * R_w0;
  const Vec3 t_10 = R_w1.transpose() * (t_w0 - t_w1);

  Eigen::Matrix<double, 3, 4> P0 = Eigen::Matrix<double, 3, 4>::Zero();
  P0.leftCols<3>() = Mat3::Identity();
  Eigen::Matrix<double, 3, 4> P1;
  P1.leftCols<3>() = R_10;
  P1.col(3) = t_10;

  const Vec3 f0 = unproject(cam, uv0);
  const Vec3 f1 = unproject(cam, uv1);
  Eigen::Matrix4d A;
  A.row(0) = f0.x() * P0.row(2) - P0.row(0);
  A.row(1) = f0.y() * P0.row(2) - P0.row(1);
  A.row(2) = f1.x() * P1.row(2) - P1.row(0);
  A.row(3) = f1.y() * P1.row(2) - P1.row(1);
  Eigen::JacobiSVD<Eigen::Matrix4d> svd(A, Eigen::ComputeFullV);
  const Eigen::Vector4d h = svd.matrixV().col(3);
  if (std::abs(h(3)) < 1e-12) return std::nullopt;
  const double depth = h(2) / h(3);
  if (!std::isfinite(depth)) return std::nullopt;
  // the second camera must see the point in front as well
  const Vec3 p0 = h.head<3>() / h(3);
  if ((R_10 * p0 + t_10).z() <= 0.0) return std::nullopt;
  return depth;
}

}  // namespace dynvio
