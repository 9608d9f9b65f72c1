#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dynvio/bias_guard.hpp"
#include "dynvio/imu_preint.hpp"
#include "dynvio/window.hpp"
#include "dynvio/window_solver.hpp"

namespace dynvio {

enum class Method { kPlainLs, kHuber, kAtls, kAtlsBcc, kAtlsBccSsr };

std::string to_string(Method m);
/// Throws std::invalid_argument for unknown names.
Method parse_method(const std::string& name);
KernelMode kernel_for(Method m);
GuardPolicy policy_for(Method m);

struct EstimatorConfig {
  Method method = Method::kAtlsBccSsr;
  SolverConfig solver;
  BccConfig bcc;
  CameraModel camera;
  ImuNoiseParams imu_noise;
  Vec3 g_w = default_gravity();
  /// Upper bound on features tracked in one frame; new tracks beyond it are ignored.
  int max_features = 200;
  /// Standard deviations of the prior placed on the first frame's velocity
  /// and biases (its pose is held fixed by the gauge).
  double init_vel_sigma = 0.1;
  double init_ba_sigma = 0.1;
  double init_bw_sigma = 0.01;
};

struct FrameInput {
  double stamp = 0.0;
  /// IMU samples covering [previous frame stamp, stamp], both ends included.
  std::vector<ImuSample> imu;
  std::vector<std::pair<long, Vec2>> observations;
};

struct FrameResult {
  double stamp = 0.0;
  BodyState state;
  bool keyframe = false;
  bool reset = false;
  bool optimized = false;
  GuardResult guard;
  /// Wall-clock time of the optimization stage.
  double ba_ms = 0.0;
  int window_size = 0;
};

class Estimator {
 public:
  Estimator(EstimatorConfig cfg, const BodyState& initial);

  FrameResult process(const FrameInput& in);

  const WindowState& window() const { return window_; }
  const EstimatorConfig& config() const { return cfg_; }
  /// Smallest weight ever assigned to each feature id.
  const std::map<long, double>& weight_history() const { return weight_history_; }

 private:
  void add_observations(const std::vector<std::pair<long, Vec2>>& obs);
  void reset_window();
  void set_initial_prior();
  void slide(bool keyframe);
  int latest_keyframe_index() const;

  EstimatorConfig cfg_;
  BodyState initial_;
  WindowState window_;
  std::map<long, double> weight_history_;
  long next_frame_id_ = 0;
};

}  // namespace dynvio
