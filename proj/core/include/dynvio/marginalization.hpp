#pragma once

#include "dynvio/window.hpp"
#include "dynvio/window_solver.hpp"

namespace dynvio {

enum class MarginalizationDecision { kOldest, kSecondNewest };

struct MarginalizationReport {
  /// The eliminated block was not positive definite and was regularized.
  bool regularized = false;
  int eliminated_dim = 0;
  int kept_dim = 0;
  int prior_rows = 0;
};

/// Removes the oldest frame (folding its IMU, prior and anchored visual terms
/// into the marginal prior) or the second-newest frame (chaining its IMU
/// samples into the next preintegration and dropping its observations).
MarginalizationReport marginalize(WindowState& w, MarginalizationDecision decision, const CameraModel& cam,
                                  const SolverConfig& cfg);

MarginalizationReport marginalize_oldest(WindowState& w, const CameraModel& cam, const SolverConfig& cfg);

/// Drops an interior frame. Requires 0 < index < size - 1.
MarginalizationReport drop_frame(WindowState& w, int index, const CameraModel& cam, const SolverConfig& cfg);

/// Splits a symmetric information system (H, g) into the square-root form
/// J^T J = H, J^T r = g, discarding directions with eigenvalue <= eps.
void information_to_prior(const MatX& H, const VecX& g, MatX& J, VecX& r, double eps = 1e-8);

}  // namespace dynvio
