#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dynvio/imu_preint.hpp"
#include "dynvio/state.hpp"
#include "dynvio/trajectory.hpp"

namespace dynvio {

enum class MotionKind { kStatic, kConstantVelocity, kAbrupt };

std::string to_string(MotionKind k);
MotionKind parse_motion_kind(const std::string& s);

struct ClusterMotion {
  MotionKind kind = MotionKind::kStatic;
  Vec3 velocity = Vec3::Zero();  ///< m/s, world frame
  double t_move = 0.0;           ///< onset of abrupt motion, seconds

  /// Rigid displacement of the cluster at time t.
  Vec3 displacement(double t) const;
  Vec3 velocity_at(double t) const;
  bool operator==(const ClusterMotion&) const = default;
};

/// Landmark group description. Points are either listed explicitly or drawn
/// uniformly inside an axis-aligned box from the scenario seed.
struct ClusterSpec {
  std::string label;
  ClusterMotion motion;
  std::vector<Vec3> points;
  Vec3 box_center = Vec3::Zero();
  Vec3 box_size = Vec3::Zero();
  int count = 0;
  /// When positive, each point re-enters the band after travelling this far
  /// along the motion direction and is then reported under a new id.
  double wrap_length = 0.0;
  bool operator==(const ClusterSpec&) const = default;
};

struct LandmarkCluster {
  std::string label;
  std::vector<Vec3> points;  ///< positions at t = 0
  ClusterMotion motion;
  Vec3 center = Vec3::Zero();
  double wrap_length = 0.0;

  bool dynamic() const { return motion.kind != MotionKind::kStatic; }
  /// World position of point i at time t and how many times it wrapped.
  Vec3 position(int i, double t, int* wraps = nullptr) const;
  bool operator==(const LandmarkCluster&) const = default;
};

class ScenarioError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Scenario {
  std::string name = "custom";
  double duration = 30.0;
  double imu_rate = 200.0;
  double cam_rate = 20.0;
  std::vector<Waypoint> waypoints;
  double loop_period = 10.0;
  Wobble wobble;
  std::vector<ClusterSpec> clusters;
  ImuNoiseParams imu;
  double pixel_sigma = 0.5;
  uint64_t seed = 1;
  CameraModel camera;
  double max_range = 25.0;

  /// Throws ScenarioError.
  void validate() const;
  Trajectory trajectory() const;
  /// Radius of the region swept by the trajectory (at least 1 m).
  double extent() const;
};

std::vector<std::string> preset_names();
/// Throws ScenarioError for an unknown name.
Scenario preset(const std::string& name);

struct SimFrame {
  double stamp = 0.0;
  std::vector<std::pair<long, Vec2>> observations;
  bool operator==(const SimFrame&) const = default;
};

struct SimBundle {
  std::vector<ImuSample> imu;
  std::vector<SimFrame> frames;
  /// True state (with biases) at every frame stamp.
  std::vector<BodyState> ground_truth;
  std::vector<LandmarkCluster> clusters;
  std::vector<std::string> warnings;
  bool operator==(const SimBundle&) const = default;
};

/// Feature ids encode the cluster, the track number of the point and the
/// point index. A point gets a new track each time it re-enters the view.
long feature_id(int cluster, int track, int point);
int cluster_of(long id);

/// Deterministic in (scenario, scenario.seed).
SimBundle generate(const Scenario& s);

/// Landmark clusters expanded from their `ClusterSpec` boxes (same draw as `generate`).
std::vector<LandmarkCluster> expand_clusters(const Scenario& s);

bool is_dynamic_feature(const std::vector<LandmarkCluster>& clusters, long id);

/// Samples of the IMU interval (t0, t1] plus the sample at t0.
std::vector<ImuSample> imu_between(const std::vector<ImuSample>& imu, double t0, double t1);

}  // namespace dynvio
