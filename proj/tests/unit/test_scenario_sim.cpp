#include "doctest.h"

#include <filesystem>
#include <map>
#include <set>

#include "dynvio/imu_preint.hpp"
#include "dynvio/reprojection.hpp"
#include "dynvio/scenario.hpp"
#include "dynvio/scenario_io.hpp"
#include "test_support.hpp"

using namespace dynvio;
using dynvio::testing::noise_free;

namespace {

Scenario hover(double duration = 3.0) {
  Scenario s = noise_free(preset("static_room"));
  s.name = "hover";
  s.duration = duration;
  s.loop_period = 2.0;
  s.waypoints = {{0.0, Vec3(0.0, 0.0, 1.2), 0.3}, {1.0, Vec3(0.0, 0.0, 1.2), 0.3}};
  s.wobble = {};
  s.imu.b_a0.setZero();
  s.imu.b_w0.setZero();
  return s;
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("dynvio_sim_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

int abrupt_index(const SimBundle& b) {
  for (size_t c = 0; c < b.clusters.size(); ++c)
    if (b.clusters[c].motion.kind == MotionKind::kAbrupt) return static_cast<int>(c);
  return -1;
}

}  // namespace

TEST_CASE("generation is deterministic for a fixed seed") {
  Scenario s = preset("dynamic_mid");
  s.duration = 3.0;
  const SimBundle a = generate(s);
  const SimBundle b = generate(s);
  CHECK(a == b);
  s.seed = 2;
  const SimBundle c = generate(s);
  CHECK_FALSE(a.imu == c.imu);
}

TEST_CASE("hovering body measures gravity and no rotation") {
  const SimBundle b = generate(hover());
  REQUIRE_FALSE(b.imu.empty());
  for (const auto& m : b.imu) {
    CHECK((m.a_m - Vec3(0.0, 0.0, 9.81)).norm() < 1e-9);
    CHECK(m.w_m.norm() < 1e-12);
  }
  for (const auto& x : b.ground_truth) CHECK(x.v_wb.norm() < 1e-12);
}

TEST_CASE("stream sizes follow the rates") {
  Scenario s = preset("static_room");
  s.duration = 2.0;
  const SimBundle b = generate(s);
  CHECK(b.imu.size() == 401);
  CHECK(b.frames.size() == 41);
  CHECK(b.ground_truth.size() == 41);
  for (size_t i = 0; i < b.frames.size(); ++i) {
    CHECK(b.frames[i].stamp == b.ground_truth[i].stamp);
    CHECK(b.frames[i].stamp == doctest::Approx(0.05 * static_cast<double>(i)).epsilon(1e-12));
  }
  for (size_t i = 1; i < b.imu.size(); ++i) CHECK(b.imu[i].stamp > b.imu[i - 1].stamp);
}

TEST_CASE("scenario validation") {
  Scenario s = preset("static_room");
  CHECK_NOTHROW(s.validate());
  s.imu_rate = 80.0;
  CHECK_THROWS_AS(s.validate(), ScenarioError);
  s = preset("static_room");
  s.duration = 0.0;
  CHECK_THROWS_AS(s.validate(), ScenarioError);
  s = preset("static_room");
  s.imu.acc_noise = -1.0;
  CHECK_THROWS(s.validate());
  CHECK_THROWS_AS(preset("no_such_room"), ScenarioError);
}

TEST_CASE("preset catalogue") {
  for (const auto& name : preset_names()) {
    const Scenario s = preset(name);
    CHECK(s.name == name);
    CHECK_NOTHROW(s.validate());
  }
  for (const auto& c : expand_clusters(preset("static_room"))) CHECK_FALSE(c.dynamic());
  int abrupt = 0;
  for (const auto& c : expand_clusters(preset("lateral_abrupt"))) abrupt += c.motion.kind == MotionKind::kAbrupt;
  CHECK(abrupt == 1);
}

TEST_CASE("abrupt clusters are bit-static before onset and rigid after") {
  for (const std::string name : {"lateral_abrupt", "parallel_abrupt"}) {
    const Scenario s = preset(name);
    const auto clusters = expand_clusters(s);
    const LandmarkCluster* c = nullptr;
    for (const auto& k : clusters)
      if (k.motion.kind == MotionKind::kAbrupt) c = &k;
    REQUIRE(c != nullptr);
    const double t_move = c->motion.t_move;
    CHECK(c->motion.velocity_at(0.5 * t_move) == Vec3::Zero());
    for (int i = 0; i < static_cast<int>(c->points.size()); i += 37) {
      const Vec3 p0 = c->position(i, 0.0);
      for (double t : {0.1, 0.5 * t_move, t_move - 1e-9}) CHECK(c->position(i, t) == p0);
      for (double t : {t_move + 0.5, t_move + 3.0}) {
        const Vec3 expected = p0 + c->motion.velocity * (t - t_move);
        CHECK((c->position(i, t) - expected).norm() < 1e-12);
      }
    }
    // same point, same pose, same pixel
    const Trajectory tr = s.trajectory();
    const KinematicSample k = tr.eval(3.0);
    BodyState x;
    x.p_wb = k.p;
    x.q_wb = k.q;
    const Vec3 a = world_to_camera(s.camera, x, c->position(0, 1.0));
    const Vec3 b = world_to_camera(s.camera, x, c->position(0, 2.0));
    CHECK(a == b);
  }
}

TEST_CASE("lateral and parallel presets move across and along the camera path") {
  const Scenario lat = preset("lateral_abrupt");
  const Scenario par = preset("parallel_abrupt");
  const auto cl = expand_clusters(lat), cp = expand_clusters(par);
  const Trajectory tr = lat.trajectory();
  const double t_move = cl.back().motion.t_move;
  const Vec3 v_cam = tr.eval(t_move).v;
  REQUIRE(v_cam.norm() > 0.05);
  const Vec3 v_lat = cl.back().motion.velocity, v_par = cp.back().motion.velocity;
  CHECK(std::abs(v_lat.normalized().dot(v_cam.normalized())) < 0.5);
  CHECK(std::abs(v_par.normalized().dot(v_cam.normalized())) > 0.5);
}

TEST_CASE("abrupt block covers a large part of the image at onset") {
  Scenario s = preset("lateral_abrupt");
  s.duration = 11.0;
  const SimBundle b = generate(s);
  const int ab = abrupt_index(b);
  REQUIRE(ab >= 0);
  const double t_move = b.clusters[ab].motion.t_move;
  for (const auto& f : b.frames) {
    if (std::abs(f.stamp - t_move) > 1e-9) continue;
    Vec2 lo = Vec2::Constant(1e9), hi = Vec2::Constant(-1e9);
    for (const auto& [id, uv] : f.observations) {
      if (cluster_of(id) != ab) continue;
      lo = lo.cwiseMin(uv);
      hi = hi.cwiseMax(uv);
    }
    REQUIRE(hi.x() > lo.x());
    const double area = (hi - lo).prod() / (s.camera.width * s.camera.height);
    MESSAGE("abrupt block image coverage " << area);
    CHECK(area > 0.25);
    CHECK(area < 0.6);
  }
}

TEST_CASE("occlusion_high is dominated by dynamic features") {
  Scenario s = preset("occlusion_high");
  s.duration = 30.0;
  const SimBundle b = generate(s);
  double sum = 0.0;
  int frames = 0;
  for (const auto& f : b.frames) {
    if (f.observations.empty()) continue;
    int dyn = 0;
    for (const auto& [id, uv] : f.observations) dyn += is_dynamic_feature(b.clusters, id);
    sum += static_cast<double>(dyn) / static_cast<double>(f.observations.size());
    ++frames;
  }
  REQUIRE(frames > 0);
  const double mean = sum / frames;
  MESSAGE("dynamic fraction " << mean);
  CHECK(mean >= 0.6);
  CHECK(mean <= 0.8);
}

TEST_CASE("noise-free IMU integrates back to the true trajectory") {
  Scenario s = noise_free(preset("static_room"));
  s.duration = 30.0;
  const SimBundle b = generate(s);
  BodyState x = b.ground_truth.front();
  double worst = 0.0;
  for (size_t k = 1; k < b.ground_truth.size(); ++k) {
    const auto pre = integrate(imu_between(b.imu, x.stamp, b.ground_truth[k].stamp), x.b_a, x.b_w, s.imu);
    x = propagate(pre, x, default_gravity());
    worst = std::max(worst, (x.p_wb - b.ground_truth[k].p_wb).norm());
  }
  MESSAGE("dead-reckoning drift over 30 s: " << worst);
  CHECK(worst < 1e-3);
}

TEST_CASE("feature ids encode cluster, track and point") {
  for (int c : {0, 3, 59}) {
    for (int t : {0, 1, 999}) {
      for (int p : {0, 7, 1999}) {
        const long id = feature_id(c, t, p);
        CHECK(cluster_of(id) == c);
        CHECK(id % 100'000L == p);
        CHECK((id / 100'000L) % 100'000L == t);
      }
    }
  }
}

TEST_CASE("feature ids are stable over contiguous visibility") {
  Scenario s = preset("dynamic_mid");
  s.duration = 10.0;
  const SimBundle b = generate(s);
  // a track id appears on consecutive frames only, and at most once per frame
  std::map<long, size_t> last;
  std::set<long> closed;
  for (size_t f = 0; f < b.frames.size(); ++f) {
    std::set<long> seen;
    for (const auto& [id, uv] : b.frames[f].observations) {
      CHECK(seen.insert(id).second);
      CHECK(closed.count(id) == 0);
      auto it = last.find(id);
      if (it != last.end()) CHECK(it->second + 1 == f);
      last[id] = f;
    }
    for (auto it = last.begin(); it != last.end();) {
      if (it->second + 1 == f) {
        closed.insert(it->first);
        it = last.erase(it);
      } else {
        ++it;
      }
    }
  }
}

TEST_CASE("noise-free observations match ground-truth projections") {
  Scenario s = noise_free(preset("lateral_abrupt"));
  s.duration = 14.0;
  const SimBundle b = generate(s);
  for (size_t f = 0; f < b.frames.size(); f += 9) {
    for (const auto& [id, uv] : b.frames[f].observations) {
      const int c = cluster_of(id);
      const int p = static_cast<int>(id % 100'000L);
      const Vec3 p_w = b.clusters[c].position(p, b.frames[f].stamp);
      const Vec2 expect = project(s.camera, world_to_camera(s.camera, b.ground_truth[f], p_w));
      CHECK((uv - expect).norm() < 1e-9);
    }
  }
}

TEST_CASE("losing every landmark for over a second raises a warning") {
  Scenario s = hover(4.0);
  s.clusters.clear();
  ClusterSpec behind;
  behind.label = "behind";
  behind.points = {Vec3(-5.0, 0.0, 1.2)};
  s.clusters.push_back(behind);
  const SimBundle b = generate(s);
  CHECK(b.warnings.size() == 1);

  Scenario seen = hover(4.0);
  CHECK(generate(seen).warnings.empty());
}

TEST_CASE("bundle CSV round trip") {
  Scenario s = preset("dynamic_mid");
  s.duration = 2.0;
  const SimBundle b = generate(s);
  const auto dir = scratch("bundle");
  write_bundle(b, dir);
  CHECK(read_csv(dir / "imu.csv").header ==
        std::vector<std::string>{"stamp", "ax", "ay", "az", "wx", "wy", "wz"});
  CHECK(read_csv(dir / "frames.csv").header == std::vector<std::string>{"stamp", "feature_id", "u", "v"});
  CHECK(read_csv(dir / "gt.csv").header.size() == 17);
  const SimBundle r = read_bundle(dir);
  REQUIRE(r.imu.size() == b.imu.size());
  REQUIRE(r.frames.size() == b.frames.size());
  for (size_t i = 0; i < b.imu.size(); ++i) {
    CHECK((r.imu[i].a_m - b.imu[i].a_m).norm() < 1e-8);
    CHECK((r.imu[i].w_m - b.imu[i].w_m).norm() < 1e-8);
  }
  for (size_t f = 0; f < b.frames.size(); ++f) {
    REQUIRE(r.frames[f].observations.size() == b.frames[f].observations.size());
    for (size_t j = 0; j < b.frames[f].observations.size(); ++j) {
      CHECK(r.frames[f].observations[j].first == b.frames[f].observations[j].first);
      CHECK((r.frames[f].observations[j].second - b.frames[f].observations[j].second).norm() < 1e-6);
    }
    CHECK((r.ground_truth[f].p_wb - b.ground_truth[f].p_wb).norm() < 1e-8);
    CHECK(r.ground_truth[f].q_wb.angularDistance(b.ground_truth[f].q_wb) < 1e-8);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("scenario JSON round trip and preset overrides") {
  for (const auto& name : preset_names()) {
    const Scenario s = preset(name);
    const Scenario r = scenario_from_json(scenario_to_json(s));
    CHECK(r.name == s.name);
    CHECK(r.duration == s.duration);
    CHECK(r.clusters == s.clusters);
    CHECK(r.imu == s.imu);
    CHECK(r.seed == s.seed);
    CHECK(expand_clusters(r) == expand_clusters(s));
  }
  const Scenario o = scenario_from_json(R"({"preset": "occlusion_high", "duration": 5, "seed": 9})");
  CHECK(o.duration == 5.0);
  CHECK(o.seed == 9);
  CHECK(o.clusters == preset("occlusion_high").clusters);
  CHECK_THROWS(scenario_from_json(R"({"preset": "nowhere"})"));
  CHECK_THROWS(scenario_from_json("not json"));

  const auto dir = scratch("json");
  save_scenario(preset("lateral_abrupt"), dir / "s.json");
  CHECK(resolve_scenario((dir / "s.json").string()).clusters == preset("lateral_abrupt").clusters);
  CHECK(resolve_scenario("static_room").name == "static_room");
  CHECK_THROWS(resolve_scenario((dir / "missing.json").string()));
  std::filesystem::remove_all(dir);
}
