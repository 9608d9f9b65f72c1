#include "dynvio/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "dynvio/reprojection.hpp"

namespace dynvio {

std::string to_string(MotionKind k) {
  switch (k) {
    case MotionKind::kStatic: return "static";
    case MotionKind::kConstantVelocity: return "constant_velocity";
    case MotionKind::kAbrupt: return "abrupt";
  }
  return "unknown";
}

MotionKind parse_motion_kind(const std::string& s) {
  for (MotionKind k : {MotionKind::kStatic, MotionKind::kConstantVelocity, MotionKind::kAbrupt})
    if (to_string(k) == s) return k;
  throw ScenarioError("unknown motion kind '" + s + "'");
}

Vec3 ClusterMotion::displacement(double t) const {
  switch (kind) {
    case MotionKind::kStatic: return Vec3::Zero();
    case MotionKind::kConstantVelocity: return velocity * t;
    case MotionKind::kAbrupt: return t < t_move ? Vec3::Zero() : Vec3(velocity * (t - t_move));
  }
  return Vec3::Zero();
}

Vec3 ClusterMotion::velocity_at(double t) const {
  switch (kind) {
    case MotionKind::kStatic: return Vec3::Zero();
    case MotionKind::kConstantVelocity: return velocity;
    case MotionKind::kAbrupt: return t < t_move ? Vec3::Zero() : velocity;
  }
  return Vec3::Zero();
}

Vec3 LandmarkCluster::position(int i, double t, int* wraps) const {
  const Vec3& p0 = points.at(i);
  const Vec3 d = motion.displacement(t);
  if (wraps) *wraps = 0;
  const double speed = motion.velocity.norm();
  if (!(wrap_length > 0.0) || !(speed > 0.0)) return p0 + d;
  const Vec3 u = motion.velocity / speed;
  const double c = (p0 - center).dot(u);
  const double s = c + d.dot(u) + 0.5 * wrap_length;
  const double n = std::floor(s / wrap_length);
  if (wraps) *wraps = static_cast<int>(n);
  const double folded = s - n * wrap_length - 0.5 * wrap_length;
  return p0 + d + u * (folded - c - d.dot(u));
}

void Scenario::validate() const {
  if (!(duration > 0.0)) throw ScenarioError("duration must be positive");
  if (!(imu_rate > 0.0) || !(cam_rate > 0.0)) throw ScenarioError("rates must be positive");
  if (imu_rate < 5.0 * cam_rate) throw ScenarioError("imu_rate must be at least 5x cam_rate");
  const double ratio = imu_rate / cam_rate;
  if (std::abs(ratio - std::round(ratio)) > 1e-9) throw ScenarioError("imu_rate must be a multiple of cam_rate");
  if (waypoints.empty()) throw ScenarioError("trajectory needs waypoints");
  if (waypoints.front().t != 0.0) throw ScenarioError("first waypoint must be at t = 0");
  if (!(loop_period > waypoints.back().t)) throw ScenarioError("loop_period must exceed the last waypoint time");
  if (!(pixel_sigma >= 0.0) || !(max_range > 0.0)) throw ScenarioError("invalid sensor parameters");
  try {
    imu.validate();
    camera.validate();
  } catch (const std::invalid_argument& e) {
    throw ScenarioError(e.what());
  }
  for (const auto& c : clusters) {
    if (c.count < 0 || c.count >= 100000 || c.points.size() >= 100000)
      throw ScenarioError("cluster '" + c.label + "' has too many points");
    if (c.wrap_length < 0.0) throw ScenarioError("wrap_length must be non-negative");
  }
  if (clusters.size() >= 200) throw ScenarioError("too many clusters");
}

Trajectory Scenario::trajectory() const { return Trajectory(waypoints, loop_period, wobble); }

double Scenario::extent() const {
  const Trajectory tr = trajectory();
  double r = 1.0;
  const int steps = 200;
  for (int i = 0; i <= steps; ++i) r = std::max(r, tr.eval(loop_period * i / steps).p.norm());
  return r;
}

long feature_id(int cluster, int track, int point) {
  return (static_cast<long>(cluster) + 1) * 10'000'000'000L + static_cast<long>(track) * 100'000L + point;
}

int cluster_of(long id) { return static_cast<int>(id / 10'000'000'000L) - 1; }

bool is_dynamic_feature(const std::vector<LandmarkCluster>& clusters, long id) {
  const int c = cluster_of(id);
  return c >= 0 && c < static_cast<int>(clusters.size()) && clusters[c].dynamic();
}

namespace {

// independent streams per purpose so adding noise never moves the layout
std::mt19937_64 stream(uint64_t seed, uint64_t purpose) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(purpose)};
  return std::mt19937_64(seq);
}

}  // namespace

std::vector<LandmarkCluster> expand_clusters(const Scenario& s) {
  auto rng = stream(s.seed, 1);
  std::uniform_real_distribution<double> uni(-0.5, 0.5);
  std::vector<LandmarkCluster> out;
  for (const auto& spec : s.clusters) {
    LandmarkCluster c;
    c.label = spec.label;
    c.motion = spec.motion;
    c.wrap_length = spec.wrap_length;
    c.points = spec.points;
    for (int i = 0; i < spec.count; ++i) {
      const Vec3 r(uni(rng), uni(rng), uni(rng));
      c.points.push_back(spec.box_center + spec.box_size.cwiseProduct(r));
    }
    if (spec.count > 0) {
      c.center = spec.box_center;
    } else if (!c.points.empty()) {
      for (const auto& p : c.points) c.center += p;
      c.center /= static_cast<double>(c.points.size());
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<ImuSample> imu_between(const std::vector<ImuSample>& imu, double t0, double t1) {
  constexpr double kTol = 1e-9;
  auto lo = std::lower_bound(imu.begin(), imu.end(), t0 - kTol,
                             [](const ImuSample& a, double t) { return a.stamp < t; });
  std::vector<ImuSample> out;
  for (auto it = lo; it != imu.end() && it->stamp <= t1 + kTol; ++it) out.push_back(*it);
  return out;
}

SimBundle generate(const Scenario& s) {
  s.validate();
  SimBundle b;
  const Trajectory traj = s.trajectory();
  b.clusters = expand_clusters(s);

  const int ratio = static_cast<int>(std::lround(s.imu_rate / s.cam_rate));
  const double dt = 1.0 / s.imu_rate;
  const long n = static_cast<long>(std::floor(s.duration * s.imu_rate + 1e-9));
  const Vec3 g_w = default_gravity();

  auto imu_rng = stream(s.seed, 2);
  auto pix_rng = stream(s.seed, 3);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto gvec = [&](std::mt19937_64& r) { return Vec3(gauss(r), gauss(r), gauss(r)); };

  Vec3 b_a = s.imu.b_a0, b_w = s.imu.b_w0;
  const double sd = std::sqrt(dt);
  std::vector<double> frame_stamps;
  for (long i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / s.imu_rate;
    const KinematicSample k = traj.eval(t);
    const Mat3 R = k.q.toRotationMatrix();
    ImuSample sample;
    sample.stamp = t;
    sample.a_m = R.transpose() * (k.a - g_w) + b_a + s.imu.acc_noise / sd * gvec(imu_rng);
    sample.w_m = k.w_body + b_w + s.imu.gyr_noise / sd * gvec(imu_rng);
    b.imu.push_back(sample);
    if (i % ratio == 0) {
      BodyState x;
      x.stamp = t;
      x.p_wb = k.p;
      x.v_wb = k.v;
      x.q_wb = k.q;
      x.b_a = b_a;
      x.b_w = b_w;
      b.ground_truth.push_back(x);
      frame_stamps.push_back(t);
    }
    b_a += s.imu.acc_walk * sd * gvec(imu_rng);
    b_w += s.imu.gyr_walk * sd * gvec(imu_rng);
  }

  // a point starts a new track whenever it re-enters the view or wraps
  struct TrackState {
    int track = -1;
    int wraps = 0;
    long last_seen = -2;
  };
  std::vector<std::vector<TrackState>> tracks(b.clusters.size());
  for (size_t c = 0; c < b.clusters.size(); ++c) tracks[c].resize(b.clusters[c].points.size());

  double blind_since = -1.0;
  bool warned = false;
  for (size_t f = 0; f < frame_stamps.size(); ++f) {
    const double t = frame_stamps[f];
    const BodyState& x = b.ground_truth[f];
    SimFrame frame;
    frame.stamp = t;
    for (size_t c = 0; c < b.clusters.size(); ++c) {
      const LandmarkCluster& cl = b.clusters[c];
      for (size_t i = 0; i < cl.points.size(); ++i) {
        int wraps = 0;
        const Vec3 p_w = cl.position(static_cast<int>(i), t, &wraps);
        const Vec3 p_c = world_to_camera(s.camera, x, p_w);
        if (!(p_c.z() > 0.1) || p_c.z() > s.max_range) continue;
        const Vec2 uv = project(s.camera, p_c);
        if (!s.camera.in_image(uv)) continue;
        const Vec2 noisy = uv + s.pixel_sigma * Vec2(gauss(pix_rng), gauss(pix_rng));
        TrackState& ts = tracks[c][i];
        if (ts.last_seen + 1 != static_cast<long>(f) || ts.wraps != wraps) ++ts.track;
        ts.last_seen = static_cast<long>(f);
        ts.wraps = wraps;
        frame.observations.emplace_back(feature_id(static_cast<int>(c), ts.track, static_cast<int>(i)), noisy);
      }
    }
    if (frame.observations.empty()) {
      if (blind_since < 0.0) blind_since = t;
      if (!warned && t - blind_since > 1.0) {
        b.warnings.push_back("no landmark visible from t=" + std::to_string(blind_since) + " s for more than 1 s");
        warned = true;
      }
    } else {
      blind_since = -1.0;
      warned = false;
    }
    b.frames.push_back(std::move(frame));
  }
  return b;
}

namespace {

ClusterSpec box(const std::string& label, const Vec3& center, const Vec3& size, int count) {
  ClusterSpec c;
  c.label = label;
  c.box_center = center;
  c.box_size = size;
  c.count = count;
  return c;
}

/// Room with a textured far wall, side walls and floor; `density` scales all counts.
std::vector<ClusterSpec> room(double density) {
  auto n = [&](int base) { return static_cast<int>(std::lround(base * density)); };
  return {box("wall_front", {6.0, 0.0, 1.5}, {0.8, 10.0, 4.0}, n(400)),
          box("wall_left", {3.0, 5.0, 1.5}, {6.0, 0.6, 4.0}, n(150)),
          box("wall_right", {3.0, -5.0, 1.5}, {6.0, 0.6, 4.0}, n(150)),
          box("floor", {3.5, 0.0, 0.0}, {6.0, 10.0, 0.1}, n(200)),
          box("clutter", {4.0, 0.0, 1.0}, {2.0, 6.0, 2.0}, n(100))};
}

/// Elliptic loop around the origin looking roughly along +x.
std::vector<Waypoint> room_loop(double period) {
  std::vector<Waypoint> w;
  const int n = 8;
  for (int i = 0; i < n; ++i) {
    const double th = 2.0 * std::numbers::pi * i / n;
    Waypoint p;
    p.t = period * i / n;
    p.p = Vec3(0.6 * std::cos(th), 1.0 * std::sin(th), 1.2 + 0.15 * std::sin(2.0 * th));
    p.yaw = 0.3 * std::sin(th);
    w.push_back(p);
  }
  return w;
}

/// Back-and-forth dolly along x with a small lateral sway.
std::vector<Waypoint> dolly(double period) {
  std::vector<Waypoint> w;
  const int n = 8;
  for (int i = 0; i < n; ++i) {
    const double th = 2.0 * std::numbers::pi * i / n;
    Waypoint p;
    p.t = period * i / n;
    p.p = Vec3(-0.7 * std::cos(th), 0.25 * std::cos(2.0 * th), 1.2 + 0.1 * std::sin(th));
    p.yaw = 0.1 * std::sin(th);
    w.push_back(p);
  }
  return w;
}

Scenario base(const std::string& name) {
  Scenario s;
  s.name = name;
  s.camera.T_bc = forward_looking_mount();
  s.wobble = {0.05, 0.23, 0.05, 0.17};
  s.loop_period = 10.0;
  s.waypoints = room_loop(s.loop_period);
  s.clusters = room(1.0);
  return s;
}

/// People jogging through a band of the room at depth `depth`, each a
/// small rigid cluster with its own constant velocity. Velocities come from a
/// fixed generator so the preset does not depend on the scenario seed.
std::vector<ClusterSpec> crowd(const std::string& label, double depth, int people, int points_each, uint64_t salt) {
  std::mt19937_64 gen(salt);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * static_cast<double>(gen() >> 11) * 0x1.0p-53; };
  std::vector<ClusterSpec> out;
  for (int k = 0; k < people; ++k) {
    const double y0 = -4.0 + 8.0 * (k + uniform(0.0, 1.0)) / people;
    ClusterSpec c = box(label + "_" + std::to_string(k), {depth + uniform(-0.4, 0.4), y0, 0.9}, {0.4, 0.5, 1.7},
                        points_each);
    c.motion.kind = MotionKind::kConstantVelocity;
    // moving along y while climbing or descending (stairs, ramps): the
    // vertical part keeps the motion off the epipolar lines of a sideways
    // moving camera
    const double dir = (gen() & 1U) ? 1.0 : -1.0;
    const double climb = ((gen() & 1U) ? 1.0 : -1.0) * uniform(0.35, 0.8);
    const double speed = uniform(1.4, 3.0);
    c.motion.velocity = speed * Vec3(uniform(-0.2, 0.2), dir * std::cos(climb), std::sin(climb));
    c.wrap_length = 8.0;
    out.push_back(std::move(c));
  }
  return out;
}

ClusterSpec abrupt_block(const Vec3& velocity, double t_move) {
  ClusterSpec c = box("abrupt_block", {3.0, 0.0, 1.2}, {0.3, 2.6, 2.0}, 400);
  c.motion.kind = MotionKind::kAbrupt;
  c.motion.velocity = velocity;
  c.motion.t_move = t_move;
  return c;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"static_room", "dynamic_mid", "occlusion_high", "lateral_abrupt", "parallel_abrupt"};
}

Scenario preset(const std::string& name) {
  if (name == "static_room") return base(name);
  if (name == "dynamic_mid") {
    Scenario s = base(name);
    for (auto& c : crowd("walker_near", 3.0, 10, 20, 11)) s.clusters.push_back(std::move(c));
    for (auto& c : crowd("walker_far", 4.2, 10, 20, 12)) s.clusters.push_back(std::move(c));
    return s;
  }
  if (name == "occlusion_high") {
    Scenario s = base(name);
    s.clusters = room(0.6);
    for (auto& c : crowd("crowd_near", 3.0, 30, 20, 21)) s.clusters.push_back(std::move(c));
    for (auto& c : crowd("crowd_far", 4.2, 30, 20, 22)) s.clusters.push_back(std::move(c));
    return s;
  }
  if (name == "lateral_abrupt" || name == "parallel_abrupt") {
    Scenario s = base(name);
    s.loop_period = 8.0;
    s.waypoints = dolly(s.loop_period);
    const Vec3 v = name == "lateral_abrupt" ? Vec3(0.0, 0.5, 0.0) : Vec3(0.5, 0.0, 0.0);
    s.clusters.push_back(abrupt_block(v, 10.0));
    return s;
  }
  throw ScenarioError("unknown scenario preset '" + name + "'");
}

}  // namespace dynvio
