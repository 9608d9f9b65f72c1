#pragma once

#include <stdexcept>
#include <vector>

#include "dynvio/state.hpp"

namespace dynvio {

class MetricsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct PoseSample {
  double stamp = 0.0;
  Vec3 p = Vec3::Zero();
  Quat q = Quat::Identity();
};

/// Estimated and ground-truth poses with matched stamps.
struct TrajectoryPair {
  std::vector<PoseSample> est;
  std::vector<PoseSample> gt;
};

/// Nearest-neighbour association of every estimate to a ground-truth stamp
/// within `max_dt` seconds.
TrajectoryPair associate(const std::vector<BodyState>& est, const std::vector<BodyState>& gt,
                         double max_dt = 0.01);

struct RigidAlignment {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
};

/// Closed-form rotation + translation (no scale) minimizing
/// sum || R est + t - gt ||^2. Throws MetricsError for fewer than 2 matches.
RigidAlignment align_rigid(const TrajectoryPair& pair);

/// Position RMSE after rigid alignment.
double ate_rmse(const TrajectoryPair& pair);

struct RteSeries {
  std::vector<double> stamps;  ///< ground-truth stamp at the end of each segment
  std::vector<double> errors;  ///< meters
  double rmse = 0.0;
};

/// Relative translation error over consecutive, non-overlapping
/// ground-truth arc-length segments of `segment` meters. The relative motion
/// is expressed in the frame of the segment start.
RteSeries rte(const TrajectoryPair& pair, double segment = 0.2);

}  // namespace dynvio
