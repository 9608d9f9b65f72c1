#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "dynvio/geometry.hpp"
#include "dynvio/state.hpp"

namespace dynvio {

struct ImuSample {
  double stamp = 0.0;
  Vec3 a_m = Vec3::Zero();  ///< specific force, body frame, m/s^2
  Vec3 w_m = Vec3::Zero();  ///< angular rate, body frame, rad/s
  bool operator==(const ImuSample&) const = default;
};

/// Continuous-time IMU noise densities plus initial biases.
struct ImuNoiseParams {
  double acc_noise = 0.02;    ///< m/s^2/sqrt(Hz)
  double gyr_noise = 1e-3;    ///< rad/s/sqrt(Hz)
  double acc_walk = 2e-4;     ///< m/s^3/sqrt(Hz)
  double gyr_walk = 2e-5;     ///< rad/s^2/sqrt(Hz)
  Vec3 b_a0 = Vec3::Zero();
  Vec3 b_w0 = Vec3::Zero();

  void validate() const;
  bool operator==(const ImuNoiseParams&) const = default;
};

/// Standard gravity magnitude; the world gravity vector points along -z.
inline constexpr double kGravity = 9.81;
inline Vec3 default_gravity() { return {0.0, 0.0, -kGravity}; }

/// Bias distance beyond which the first-order correction is not trusted.
inline constexpr double kRelinearizationThreshold = 0.1;

class InsufficientImuData : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Residual row blocks: [alpha, beta, gamma, b_a, b_w].
namespace imu_row {
inline constexpr int kAlpha = 0;
inline constexpr int kBeta = 3;
inline constexpr int kGamma = 6;
inline constexpr int kBa = 9;
inline constexpr int kBw = 12;
}  // namespace imu_row

/// Preintegrated relative motion between two body frames.
///
/// alpha/beta/gamma hold the increments evaluated at (eval_b_a, eval_b_w);
/// alpha0/beta0/gamma0 hold them at the linearization biases. Bias
/// corrections are always taken relative to the linearization point, so
/// repeated repropagation never compounds.
struct Preintegration {
  Vec3 alpha = Vec3::Zero();
  Vec3 beta = Vec3::Zero();
  Quat gamma = Quat::Identity();

  Vec3 alpha0 = Vec3::Zero();
  Vec3 beta0 = Vec3::Zero();
  Quat gamma0 = Quat::Identity();

  Mat3 J_alpha_ba = Mat3::Zero();
  Mat3 J_alpha_bw = Mat3::Zero();
  Mat3 J_beta_ba = Mat3::Zero();
  Mat3 J_beta_bw = Mat3::Zero();
  Mat3 J_gamma_bw = Mat3::Zero();

  /// Covariance in residual row order [alpha, beta, gamma, b_a, b_w].
  Mat15 P = Mat15::Zero();
  /// Upper-triangular W with W^T W = P^-1; whitened residual is W r.
  Mat15 sqrt_info = Mat15::Identity();

  Vec3 lin_b_a = Vec3::Zero();
  Vec3 lin_b_w = Vec3::Zero();
  Vec3 eval_b_a = Vec3::Zero();
  Vec3 eval_b_w = Vec3::Zero();

  double dt_total = 0.0;
  double t_start = 0.0;
  double t_end = 0.0;

  ImuNoiseParams noise;
  std::vector<ImuSample> samples;

  bool operator==(const Preintegration&) const = default;
};

/// Midpoint integration of a sample batch with covariance and bias
/// Jacobian propagation. Requires at least two samples with strictly
/// increasing stamps.
Preintegration integrate(std::span<const ImuSample> samples, const Vec3& b_a0, const Vec3& b_w0,
                         const ImuNoiseParams& noise);

/// First-order bias correction. Returns nullopt when either bias moved more
/// than `threshold` from the linearization point (caller must re-integrate).
std::optional<Preintegration> repropagate(const Preintegration& pre, const Vec3& b_a_new,
                                          const Vec3& b_w_new,
                                          double threshold = kRelinearizationThreshold);

/// Repropagates, or re-integrates from the stored samples when the bias
/// moved past the threshold.
Preintegration corrected(const Preintegration& pre, const Vec3& b_a, const Vec3& b_w,
                         double threshold = kRelinearizationThreshold);

/// Concatenates two adjacent batches and integrates them from scratch at the
/// given biases.
Preintegration chain(const Preintegration& first, const Preintegration& second, const Vec3& b_a,
                     const Vec3& b_w);

struct ImuResidual {
  Vec15 raw = Vec15::Zero();       ///< un-whitened residual
  Vec15 whitened = Vec15::Zero();  ///< sqrt_info * raw
  /// Whitened Jacobians w.r.t. the tangent of x_k and x_k1.
  Mat15 J_k = Mat15::Zero();
  Mat15 J_k1 = Mat15::Zero();
};

/// IMU residual between consecutive body states. The increments are bias
/// corrected for x_k's biases (first order, relative to the linearization
/// point) before evaluation. g_w is the gravitational acceleration in the
/// world frame.
ImuResidual imu_residual(const Preintegration& pre, const BodyState& x_k, const BodyState& x_k1,
                         const Vec3& g_w, bool with_jacobians = true);

/// Dead-reckoned state at the end of the interval from x_k.
BodyState propagate(const Preintegration& pre, const BodyState& x_k, const Vec3& g_w);

}  // namespace dynvio
