#include "dynvio/atls_kernel.hpp"

#include <algorithm>
#include <cmath>

namespace dynvio::atls {
namespace {

constexpr double kSingularGuard = 1e-6;

double mu_for(double r_max, double r_hat_max, double r_trunc) {
  if (r_hat_max < 0.5 * r_max && std::abs(r_trunc - 2.0 * r_hat_max) <= 1e-12 * r_trunc) return 1.0;
  return r_hat_max / (r_trunc - r_hat_max);
}

}  // namespace

double compute_r_hat_max(std::span<const WeightedResidual> residuals, double floor) {
  double best_sq = -1.0;
  for (const auto& r : residuals)
    if (r.weight == 1.0) best_sq = std::max(best_sq, r.residual * r.residual);
  return best_sq < 0.0 ? floor : std::sqrt(best_sq);
}

AtlsShape shape_with_trunc(double r_max, double r_hat_max, double r_trunc) {
  if (!(r_max > 0.0)) throw ConfigError("atls: r_max must be positive");
  if (!(r_hat_max >= 0.0)) throw ConfigError("atls: r_hat_max must be non-negative");
  if (!(r_trunc > 0.0)) throw ConfigError("atls: r_trunc must be positive");
  AtlsShape s;
  s.r_max = r_max;
  s.r_trunc = r_trunc;
  s.r_hat_max = std::min(r_hat_max, r_trunc * (1.0 - kSingularGuard));
  s.mu = mu_for(r_max, s.r_hat_max, r_trunc);
  return s;
}

AtlsShape build_shape(double r_max, double r_hat_max) {
  if (!(r_max > 0.0)) throw ConfigError("atls: r_max must be positive");
  if (!(r_hat_max >= 0.0)) throw ConfigError("atls: r_hat_max must be non-negative");
  // r_hat_max == 0 would collapse the truncation range to zero
  const double r_trunc = std::min(r_max, 2.0 * std::max(r_hat_max, 1e-9));
  return shape_with_trunc(r_max, r_hat_max, r_trunc);
}

AtlsShape narrow(const AtlsShape& shape, double trunc_floor) {
  const double r_trunc = std::max(0.5 * shape.r_trunc, std::min(trunc_floor, shape.r_trunc));
  AtlsShape s = shape;
  s.r_trunc = r_trunc;
  s.r_hat_max = std::min(shape.r_hat_max, r_trunc * (1.0 - kSingularGuard));
  s.mu = s.r_hat_max / (r_trunc - s.r_hat_max);
  return s;
}

double penalty(const AtlsShape& s, double w) {
  return s.mu * s.r_hat_max * s.r_trunc * (1.0 - w) / (s.mu + w);
}

double weight_update(const AtlsShape& s, double r) {
  if (r * r < s.r_hat_max * s.r_hat_max) return 1.0;
  if (r * r >= s.r_trunc * s.r_trunc) return 0.0;
  const double w = std::sqrt(s.mu * (s.mu + 1.0) * s.r_hat_max * s.r_trunc) / r - s.mu;
  return std::clamp(w, 0.0, 1.0);
}

double effective_cost(const AtlsShape& s, double r) {
  const double w = weight_update(s, r);
  return w * r * r + penalty(s, w);
}

double residual_for_new_feature(std::span<const double> errors) {
  double best = 0.0;
  for (double e : errors) best = std::max(best, e);
  return best;
}

}  // namespace dynvio::atls
