#pragma once

#include <span>
#include <stdexcept>

namespace dynvio::atls {

/// Shape of the adaptive truncated least-squares surrogate cost.
///
/// Residuals below `r_hat_max` are full inliers (weight 1), residuals at or
/// beyond `r_trunc` are fully rejected (weight 0) and pay the constant cost
/// r_hat_max * r_trunc. All quantities are residual magnitudes in pixels.
struct AtlsShape {
  double r_max = 10.0;
  double r_hat_max = 1.0;
  double r_trunc = 2.0;
  double mu = 1.0;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// r_hat_max used when no trusted (weight 1) feature has a residual.
inline constexpr double kDefaultRHatFloor = 1.0;
/// Lower bound for r_trunc after recovery narrowing.
inline constexpr double kDefaultTruncFloor = 0.5;

/// A trusted-feature residual sample for r_hat_max.
struct WeightedResidual {
  double residual = 0.0;
  double weight = 1.0;
};

/// Largest current residual among features whose weight is exactly one,
/// or `floor` if there is none.
double compute_r_hat_max(std::span<const WeightedResidual> residuals, double floor = kDefaultRHatFloor);

/// r_trunc = min(r_max, 2 r_hat_max) and the matching non-convexity mu.
AtlsShape build_shape(double r_max, double r_hat_max);

/// Halves r_trunc (not below `trunc_floor`), clamps r_hat_max under it and
/// recomputes mu.
AtlsShape narrow(const AtlsShape& shape, double trunc_floor = kDefaultTruncFloor);

/// Shape with an explicit truncation range; r_hat_max is clamped below it.
AtlsShape shape_with_trunc(double r_max, double r_hat_max, double r_trunc);

/// Outlier-process penalty Phi(w) = mu r_hat_max r_trunc (1 - w) / (mu + w).
double penalty(const AtlsShape& shape, double weight);

/// Closed-form minimizer over w in [0, 1] of w r^2 + penalty(w).
double weight_update(const AtlsShape& shape, double residual);

/// Effective robust cost rho(r^2) = w r^2 + penalty(w) at the optimal weight.
double effective_cost(const AtlsShape& shape, double residual);

/// Weights never increase: min(new, previous).
inline double clamp_weight(double new_weight, double previous) {
  return new_weight < previous ? new_weight : previous;
}

/// Conservative residual of a not-yet-optimized feature: the largest
/// reprojection error over its in-window observations. Empty input is 0.
double residual_for_new_feature(std::span<const double> reprojection_errors);

}  // namespace dynvio::atls
