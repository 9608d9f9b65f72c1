#include "dynvio/imu_preint.hpp"

#include <Eigen/Cholesky>
#include <cmath>

namespace dynvio {
namespace {

// Propagation works in the tangent order [p, q, v, b_a, b_w] and is permuted
// into residual order at the end.
constexpr int kP = 0, kQ = 3, kV = 6, kBa = 9, kBw = 12;

using Mat15x18 = Eigen::Matrix<double, 15, 18>;
using Mat18 = Eigen::Matrix<double, 18, 18>;

struct Integrator {
  Vec3 dp = Vec3::Zero();
  Vec3 dv = Vec3::Zero();
  Quat dq = Quat::Identity();
  // exact derivatives of the discrete recursion w.r.t. the biases
  Mat3 Jp_ba = Mat3::Zero(), Jp_bw = Mat3::Zero();
  Mat3 Jv_ba = Mat3::Zero(), Jv_bw = Mat3::Zero();
  Mat3 Jq_bw = Mat3::Zero();
  Mat15 cov = Mat15::Zero();
  Vec3 ba, bw;
  Mat18 noise = Mat18::Zero();

  void step(const ImuSample& s0, const ImuSample& s1) {
    const double dt = s1.stamp - s0.stamp;
    const Mat3 I = Mat3::Identity();

    const Vec3 w_x = 0.5 * (s0.w_m + s1.w_m) - bw;
    const Vec3 phi = w_x * dt;
    const Quat dq1 = (dq * exp_quat(phi)).normalized();
    const Mat3 R0 = dq.toRotationMatrix();
    const Mat3 R1 = dq1.toRotationMatrix();
    const Vec3 a0_x = s0.a_m - ba;
    const Vec3 a1_x = s1.a_m - ba;
    const Vec3 un_acc = 0.5 * (R0 * a0_x + R1 * a1_x);
    const Vec3 dp1 = dp + dv * dt + 0.5 * un_acc * dt * dt;
    const Vec3 dv1 = dv + un_acc * dt;

    const Mat3 Rw = skew(w_x), Ra0 = skew(a0_x), Ra1 = skew(a1_x);
    const Mat3 rot_step = I - Rw * dt;

    Mat15 F = Mat15::Zero();
    F.block<3, 3>(kP, kP) = I;
    F.block<3, 3>(kP, kQ) = -0.25 * R0 * Ra0 * dt * dt - 0.25 * R1 * Ra1 * rot_step * dt * dt;
    F.block<3, 3>(kP, kV) = I * dt;
    F.block<3, 3>(kP, kBa) = -0.25 * (R0 + R1) * dt * dt;
    F.block<3, 3>(kP, kBw) = 0.25 * R1 * Ra1 * dt * dt * dt;
    F.block<3, 3>(kQ, kQ) = rot_step;
    F.block<3, 3>(kQ, kBw) = -I * dt;
    F.block<3, 3>(kV, kQ) = -0.5 * R0 * Ra0 * dt - 0.5 * R1 * Ra1 * rot_step * dt;
    F.block<3, 3>(kV, kV) = I;
    F.block<3, 3>(kV, kBa) = -0.5 * (R0 + R1) * dt;
    F.block<3, 3>(kV, kBw) = 0.5 * R1 * Ra1 * dt * dt;
    F.block<3, 3>(kBa, kBa) = I;
    F.block<3, 3>(kBw, kBw) = I;

    Mat15x18 V = Mat15x18::Zero();
    V.block<3, 3>(kP, 0) = 0.25 * R0 * dt * dt;
    V.block<3, 3>(kP, 3) = -0.25 * R1 * Ra1 * dt * dt * 0.5 * dt;
    V.block<3, 3>(kP, 6) = 0.25 * R1 * dt * dt;
    V.block<3, 3>(kP, 9) = V.block<3, 3>(kP, 3);
    V.block<3, 3>(kQ, 3) = 0.5 * I * dt;
    V.block<3, 3>(kQ, 9) = 0.5 * I * dt;
    V.block<3, 3>(kV, 0) = 0.5 * R0 * dt;
    V.block<3, 3>(kV, 3) = -0.5 * R1 * Ra1 * dt * 0.5 * dt;
    V.block<3, 3>(kV, 6) = 0.5 * R1 * dt;
    V.block<3, 3>(kV, 9) = V.block<3, 3>(kV, 3);
    V.block<3, 3>(kBa, 12) = I * dt;
    V.block<3, 3>(kBw, 15) = I * dt;

    const Mat3 Jq1_bw = exp_quat(phi).toRotationMatrix().transpose() * Jq_bw - right_jacobian(phi) * dt;
    const Mat3 dacc_ba = -0.5 * (R0 + R1);
    const Mat3 dacc_bw = -0.5 * (R0 * Ra0 * Jq_bw + R1 * Ra1 * Jq1_bw);
    Jp_ba += Jv_ba * dt + 0.5 * dacc_ba * dt * dt;
    Jp_bw += Jv_bw * dt + 0.5 * dacc_bw * dt * dt;
    Jv_ba += dacc_ba * dt;
    Jv_bw += dacc_bw * dt;
    Jq_bw = Jq1_bw;

    set_noise(dt);
    cov = F * cov * F.transpose() + V * noise * V.transpose();
    cov = 0.5 * (cov + cov.transpose());

    dp = dp1;
    dv = dv1;
    dq = dq1;
  }

  // Each white-noise sample enters two adjacent midpoint steps with weight
  // 1/2, so its per-step variance is doubled to keep the summed covariance
  // consistent with a discrete sample variance of density^2 / dt.
  void set_noise(double dt) {
    const Mat3 I = Mat3::Identity();
    const double acc_var = 2.0 * params->acc_noise * params->acc_noise / dt;
    const double gyr_var = 2.0 * params->gyr_noise * params->gyr_noise / dt;
    noise.block<3, 3>(0, 0) = acc_var * I;
    noise.block<3, 3>(3, 3) = gyr_var * I;
    noise.block<3, 3>(6, 6) = acc_var * I;
    noise.block<3, 3>(9, 9) = gyr_var * I;
    noise.block<3, 3>(12, 12) = params->acc_walk * params->acc_walk / dt * I;
    noise.block<3, 3>(15, 15) = params->gyr_walk * params->gyr_walk / dt * I;
  }

  const ImuNoiseParams* params = nullptr;
};

// Residual order [alpha, beta, gamma, b_a, b_w] from tangent order [p, q, v, b_a, b_w].
constexpr int kRowFromTangent[5] = {imu_row::kAlpha, imu_row::kGamma, imu_row::kBeta, imu_row::kBa,
                                    imu_row::kBw};

Mat15 to_residual_order(const Mat15& m) {
  Mat15 out;
  for (int bi = 0; bi < 5; ++bi)
    for (int bj = 0; bj < 5; ++bj)
      out.block<3, 3>(kRowFromTangent[bi], kRowFromTangent[bj]) = m.block<3, 3>(3 * bi, 3 * bj);
  return out;
}

Mat15 whitener(const Mat15& P) {
  // zero noise model: residuals are used unweighted
  if (!(P.diagonal().minCoeff() > 0.0)) return Mat15::Identity();
  const Mat15 info = P.inverse();
  const Mat15 sym = 0.5 * (info + info.transpose());
  Eigen::LLT<Mat15> llt(sym);
  if (llt.info() != Eigen::Success) {
    Eigen::LLT<Mat15> reg(sym + 1e-9 * sym.diagonal().maxCoeff() * Mat15::Identity());
    return reg.matrixL().transpose();
  }
  return llt.matrixL().transpose();
}

struct Delta {
  Vec3 alpha, beta;
  Quat gamma;
};

Delta corrected_delta(const Preintegration& pre, const Vec3& b_a, const Vec3& b_w) {
  const Vec3 dba = b_a - pre.lin_b_a;
  const Vec3 dbw = b_w - pre.lin_b_w;
  const Vec3 c = 0.5 * pre.J_gamma_bw * dbw;
  return {pre.alpha0 + pre.J_alpha_ba * dba + pre.J_alpha_bw * dbw,
          pre.beta0 + pre.J_beta_ba * dba + pre.J_beta_bw * dbw,
          (pre.gamma0 * Quat(1.0, c.x(), c.y(), c.z())).normalized()};
}

void apply_correction(Preintegration& pre, const Vec3& b_a, const Vec3& b_w) {
  const Delta d = corrected_delta(pre, b_a, b_w);
  pre.alpha = d.alpha;
  pre.beta = d.beta;
  pre.gamma = d.gamma;
  pre.eval_b_a = b_a;
  pre.eval_b_w = b_w;
}

}  // namespace

void ImuNoiseParams::validate() const {
  if (!(acc_noise >= 0.0) || !(gyr_noise >= 0.0) || !(acc_walk >= 0.0) || !(gyr_walk >= 0.0))
    throw std::invalid_argument("imu noise densities must be non-negative");
  if (!b_a0.allFinite() || !b_w0.allFinite()) throw std::invalid_argument("imu initial biases must be finite");
}

Preintegration integrate(std::span<const ImuSample> samples, const Vec3& b_a0, const Vec3& b_w0,
                         const ImuNoiseParams& noise) {
  if (samples.size() < 2) throw InsufficientImuData("integrate: need at least two IMU samples");
  if (!b_a0.allFinite() || !b_w0.allFinite()) throw NonFiniteError("integrate: non-finite bias");
  for (size_t i = 1; i < samples.size(); ++i)
    if (!(samples[i].stamp > samples[i - 1].stamp))
      throw std::invalid_argument("integrate: IMU stamps must be strictly increasing");

  Integrator it;
  it.ba = b_a0;
  it.bw = b_w0;
  it.params = &noise;
  for (size_t i = 0; i + 1 < samples.size(); ++i) it.step(samples[i], samples[i + 1]);

  Preintegration pre;
  pre.alpha0 = pre.alpha = it.dp;
  pre.beta0 = pre.beta = it.dv;
  pre.gamma0 = pre.gamma = it.dq.normalized();
  pre.J_alpha_ba = it.Jp_ba;
  pre.J_alpha_bw = it.Jp_bw;
  pre.J_beta_ba = it.Jv_ba;
  pre.J_beta_bw = it.Jv_bw;
  pre.J_gamma_bw = it.Jq_bw;
  pre.P = to_residual_order(it.cov);
  pre.sqrt_info = whitener(pre.P);
  pre.lin_b_a = pre.eval_b_a = b_a0;
  pre.lin_b_w = pre.eval_b_w = b_w0;
  pre.t_start = samples.front().stamp;
  pre.t_end = samples.back().stamp;
  pre.dt_total = pre.t_end - pre.t_start;
  pre.noise = noise;
  pre.samples.assign(samples.begin(), samples.end());
  return pre;
}

std::optional<Preintegration> repropagate(const Preintegration& pre, const Vec3& b_a_new,
                                          const Vec3& b_w_new, double threshold) {
  if ((b_a_new - pre.lin_b_a).norm() > threshold || (b_w_new - pre.lin_b_w).norm() > threshold)
    return std::nullopt;
  Preintegration out = pre;
  apply_correction(out, b_a_new, b_w_new);
  return out;
}

Preintegration corrected(const Preintegration& pre, const Vec3& b_a, const Vec3& b_w, double threshold) {
  if (auto r = repropagate(pre, b_a, b_w, threshold)) return *std::move(r);
  return integrate(pre.samples, b_a, b_w, pre.noise);
}

Preintegration chain(const Preintegration& first, const Preintegration& second, const Vec3& b_a,
                     const Vec3& b_w) {
  std::vector<ImuSample> merged = first.samples;
  auto begin = second.samples.begin();
  if (!merged.empty() && begin != second.samples.end() && begin->stamp <= merged.back().stamp) ++begin;
  merged.insert(merged.end(), begin, second.samples.end());
  return integrate(merged, b_a, b_w, first.noise);
}

ImuResidual imu_residual(const Preintegration& pre, const BodyState& x_k, const BodyState& x_k1,
                         const Vec3& g_w, bool with_jacobians) {
  if (!x_k.finite() || !x_k1.finite()) throw NonFiniteError("imu_residual: non-finite state");
  const Delta d = corrected_delta(pre, x_k.b_a, x_k.b_w);

  const double dt = pre.dt_total;
  const Mat3 RkT = x_k.q_wb.toRotationMatrix().transpose();
  const Vec3 x_alpha = x_k1.p_wb - x_k.p_wb - x_k.v_wb * dt - 0.5 * g_w * dt * dt;
  const Vec3 x_beta = x_k1.v_wb - x_k.v_wb - g_w * dt;
  const Quat B = x_k.q_wb.conjugate() * x_k1.q_wb;
  const Quat e = B * d.gamma.conjugate();

  ImuResidual out;
  out.raw.segment<3>(imu_row::kAlpha) = RkT * x_alpha - d.alpha;
  out.raw.segment<3>(imu_row::kBeta) = RkT * x_beta - d.beta;
  out.raw.segment<3>(imu_row::kGamma) = 2.0 * e.vec();
  out.raw.segment<3>(imu_row::kBa) = x_k1.b_a - x_k.b_a;
  out.raw.segment<3>(imu_row::kBw) = x_k1.b_w - x_k.b_w;
  out.whitened = pre.sqrt_info * out.raw;
  if (!with_jacobians) return out;

  namespace t = tangent;
  const Mat3 I = Mat3::Identity();
  Mat15 Jk = Mat15::Zero(), Jk1 = Mat15::Zero();

  Jk.block<3, 3>(imu_row::kAlpha, t::kP) = -RkT;
  Jk.block<3, 3>(imu_row::kAlpha, t::kQ) = skew(RkT * x_alpha);
  Jk.block<3, 3>(imu_row::kAlpha, t::kV) = -RkT * dt;
  Jk.block<3, 3>(imu_row::kAlpha, t::kBa) = -pre.J_alpha_ba;
  Jk.block<3, 3>(imu_row::kAlpha, t::kBw) = -pre.J_alpha_bw;

  Jk.block<3, 3>(imu_row::kBeta, t::kQ) = skew(RkT * x_beta);
  Jk.block<3, 3>(imu_row::kBeta, t::kV) = -RkT;
  Jk.block<3, 3>(imu_row::kBeta, t::kBa) = -pre.J_beta_ba;
  Jk.block<3, 3>(imu_row::kBeta, t::kBw) = -pre.J_beta_bw;

  const double ew = e.w();
  const Mat3 ev_x = skew(e.vec());
  Jk.block<3, 3>(imu_row::kGamma, t::kQ) = -(ew * I - ev_x);
  {
    // gamma(b_w) = gamma0 * normalize(1, c), c = J_gamma_bw (b_w - lin) / 2
    const Vec3 c = 0.5 * pre.J_gamma_bw * (x_k.b_w - pre.lin_b_w);
    const double n = std::sqrt(1.0 + c.squaredNorm());
    Eigen::Vector4d w4(1.0, -c.x(), -c.y(), -c.z());
    Eigen::Matrix<double, 4, 3> dw_dc = Eigen::Matrix<double, 4, 3>::Zero();
    dw_dc.bottomRows<3>() = -I / n;
    dw_dc -= w4 * c.transpose() / (n * n * n);
    const Eigen::Matrix4d M = quat_left(B) * quat_right(pre.gamma0.conjugate());
    const Eigen::Matrix<double, 4, 3> de_dbw = M * dw_dc * 0.5 * pre.J_gamma_bw;
    Jk.block<3, 3>(imu_row::kGamma, t::kBw) = 2.0 * de_dbw.bottomRows<3>();
  }
  Jk.block<3, 3>(imu_row::kBa, t::kBa) = -I;
  Jk.block<3, 3>(imu_row::kBw, t::kBw) = -I;

  Jk1.block<3, 3>(imu_row::kAlpha, t::kP) = RkT;
  Jk1.block<3, 3>(imu_row::kBeta, t::kV) = RkT;
  Jk1.block<3, 3>(imu_row::kGamma, t::kQ) = (ew * I + ev_x) * d.gamma.toRotationMatrix();
  Jk1.block<3, 3>(imu_row::kBa, t::kBa) = I;
  Jk1.block<3, 3>(imu_row::kBw, t::kBw) = I;

  out.J_k = pre.sqrt_info * Jk;
  out.J_k1 = pre.sqrt_info * Jk1;
  return out;
}

BodyState propagate(const Preintegration& pre_in, const BodyState& x_k, const Vec3& g_w) {
  const Preintegration pre = corrected(pre_in, x_k.b_a, x_k.b_w);
  const double dt = pre.dt_total;
  const Mat3 Rk = x_k.q_wb.toRotationMatrix();
  BodyState out = x_k;
  out.stamp = x_k.stamp + dt;
  out.p_wb = x_k.p_wb + x_k.v_wb * dt + 0.5 * g_w * dt * dt + Rk * pre.alpha;
  out.v_wb = x_k.v_wb + g_w * dt + Rk * pre.beta;
  out.q_wb = (x_k.q_wb * pre.gamma).normalized();
  return out;
}

}  // namespace dynvio
