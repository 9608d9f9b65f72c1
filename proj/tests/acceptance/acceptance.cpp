// Acceptance report: one PASS/FAIL line per criterion. Pass criterion
// numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dynvio/atls_kernel.hpp"
#include "dynvio/bias_guard.hpp"
#include "dynvio/harness.hpp"
#include "dynvio/imu_preint.hpp"
#include "dynvio/reprojection.hpp"
#include "dynvio/scenario.hpp"
#include "dynvio/window_solver.hpp"
#include "test_support.hpp"

using namespace dynvio;
using dynvio::testing::Gen;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

atls::AtlsShape random_shape(Gen& g) {
  const double r_max = g.uniform(1.0, 30.0);
  return atls::build_shape(r_max, g.uniform(0.05, 1.2) * r_max);
}

// ---------------------------------------------------------------- 1

double grid_argmin(const atls::AtlsShape& s, double r) {
  auto cost = [&](double w) { return w * r * r + atls::penalty(s, w); };
  double best = 0.0, best_c = cost(0.0);
  for (int i = 1; i <= 1000; ++i) {
    const double c = cost(i * 1e-3);
    if (c < best_c) best = i * 1e-3, best_c = c;
  }
  const double lo = std::max(0.0, best - 1e-3);
  double fine = best, fine_c = best_c;
  for (int i = 0; i <= 2000; ++i) {
    const double w = std::min(1.0, lo + i * 1e-6);
    const double c = cost(w);
    if (c < fine_c) fine = w, fine_c = c;
  }
  return fine;
}

Outcome kernel_optimality() {
  const auto t0 = Clock::now();
  Gen g(1001);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const atls::AtlsShape s = random_shape(g);
    for (int j = 0; j < 200; ++j) {
      const double r = g.uniform(0.0, 2.0 * s.r_trunc);
      worst = std::max(worst, std::abs(atls::weight_update(s, r) - grid_argmin(s, r)));
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-4 && secs < 5.0, "max |dw| " + num(worst) + ", " + num(secs) + " s"};
}

// ---------------------------------------------------------------- 2

Outcome truncation_property() {
  Gen g(1002);
  double plateau_dev = 0.0, jump = 0.0;
  for (int i = 0; i < 200; ++i) {
    const atls::AtlsShape s = random_shape(g);
    const double plateau = atls::effective_cost(s, s.r_trunc);
    for (int j = 0; j < 50; ++j) {
      const double r = s.r_trunc * g.log_uniform(1.0, 1e3);
      plateau_dev = std::max(plateau_dev, std::abs(atls::effective_cost(s, r) - plateau));
    }
    // cost change across each edge minus what the local slope 2 w r
    // explains; the probe is narrow enough that curvature stays far below
    // the tolerance even for strongly clamped shapes
    for (double edge : {s.r_hat_max, s.r_trunc}) {
      const double e = 1e-12 * edge;
      const double slope = 2.0 * edge * (atls::weight_update(s, edge - e) + atls::weight_update(s, edge + e));
      const double d = atls::effective_cost(s, edge + e) - atls::effective_cost(s, edge - e) - slope * e;
      jump = std::max(jump, std::abs(d));
    }
  }
  return {plateau_dev < 1e-9 && jump < 1e-9, "plateau deviation " + num(plateau_dev) + ", max jump " + num(jump)};
}

// ---------------------------------------------------------------- 3

Outcome jacobian_suite() {
  Gen g(1003);
  const Vec3 gw = default_gravity();
  double imu_worst = 0.0, vis_worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto sig = dynvio::testing::ImuSignal::random(g);
    const auto samples = sig.samples(0.0, g.uniform(0.05, 0.3), 200.0);
    const Vec3 ba = g.vec3(0.1), bw = g.vec3(0.01);
    const Preintegration pre = integrate(samples, ba, bw, ImuNoiseParams{});
    BodyState xk = g.state();
    xk.b_a = ba + g.vec3(0.02);
    xk.b_w = bw + g.vec3(0.005);
    const BodyState xk1 = boxplus(propagate(pre, xk, gw), g.tangent(0.05));
    const ImuResidual r = imu_residual(pre, xk, xk1, gw);
    auto fk = [&](const VecX& d) -> VecX { return imu_residual(pre, boxplus(xk, Vec15(d)), xk1, gw, false).whitened; };
    auto fk1 = [&](const VecX& d) -> VecX {
      return imu_residual(pre, xk, boxplus(xk1, Vec15(d)), gw, false).whitened;
    };
    imu_worst = std::max(imu_worst, dynvio::testing::relative_error(r.J_k, dynvio::testing::numeric_jacobian(fk, 15)));
    imu_worst =
        std::max(imu_worst, dynvio::testing::relative_error(r.J_k1, dynvio::testing::numeric_jacobian(fk1, 15)));
  }

  CameraModel cam;
  cam.T_bc = forward_looking_mount();
  for (int checked = 0; checked < 50;) {
    BodyState anchor = g.state(), target = anchor;
    target.p_wb += g.vec3(0.5);
    target.q_wb = (anchor.q_wb * exp_quat(g.vec3(0.2))).normalized();
    const Vec2 uv_a(g.uniform(50, 590), g.uniform(50, 430));
    const double inv_depth = g.uniform(0.1, 1.0);
    const Vec3 pc = world_to_camera(cam, target, anchor_to_world(cam, anchor, uv_a, inv_depth));
    if (pc.z() < 0.5) continue;
    const Vec2 uv_t = project(cam, pc) + Vec2(g.uniform(-3, 3), g.uniform(-3, 3));
    const Reprojection rp = reproject(cam, anchor, target, uv_a, uv_t, inv_depth);
    auto pose = [](const VecX& d) {
      Vec15 full = Vec15::Zero();
      full.head<6>() = d;
      return full;
    };
    auto fa = [&](const VecX& d) -> VecX {
      return reproject(cam, boxplus(anchor, pose(d)), target, uv_a, uv_t, inv_depth, false).residual;
    };
    auto ft = [&](const VecX& d) -> VecX {
      return reproject(cam, anchor, boxplus(target, pose(d)), uv_a, uv_t, inv_depth, false).residual;
    };
    auto fl = [&](const VecX& d) -> VecX {
      return reproject(cam, anchor, target, uv_a, uv_t, inv_depth + d(0), false).residual;
    };
    using dynvio::testing::numeric_jacobian;
    using dynvio::testing::relative_error;
    vis_worst = std::max({vis_worst, relative_error(rp.J_anchor, numeric_jacobian(fa, 6)),
                          relative_error(rp.J_target, numeric_jacobian(ft, 6)),
                          relative_error(rp.J_inv_depth, numeric_jacobian(fl, 1))});
    ++checked;
  }
  return {imu_worst < 1e-5 && vis_worst < 1e-5,
          "imu max rel err " + num(imu_worst) + ", visual max rel err " + num(vis_worst)};
}

// ---------------------------------------------------------------- 4

Outcome repropagation() {
  Gen g(1004);
  double lo = 1e9, hi = -1e9;
  bool identity = true;
  for (int trial = 0; trial < 20; ++trial) {
    const auto samples = dynvio::testing::ImuSignal::random(g).samples(0.0, 1.0, 200.0);
    const Vec3 ba = g.vec3(0.1), bw = g.vec3(0.01);
    const Preintegration pre = integrate(samples, ba, bw, ImuNoiseParams{});
    const auto same = repropagate(pre, ba, bw);
    identity = identity && same && same->alpha == pre.alpha && same->beta == pre.beta;

    const Vec3 ua = g.vec3(1.0).normalized(), uw = g.vec3(1.0).normalized();
    std::vector<double> xs, ys;
    for (double s : {1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4}) {
      // the threshold is lifted so the largest step is corrected too
      const auto fast = repropagate(pre, ba + s * ua, bw + s * uw, 1.0);
      const Preintegration full = integrate(samples, ba + s * ua, bw + s * uw, ImuNoiseParams{});
      const double err = (fast->alpha - full.alpha).norm() + (fast->beta - full.beta).norm();
      xs.push_back(std::log(s));
      ys.push_back(std::log(err));
    }
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
    double sxy = 0.0, sxx = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
      sxy += (xs[i] - mx) * (ys[i] - my);
      sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    lo = std::min(lo, sxy / sxx);
    hi = std::max(hi, sxy / sxx);
  }
  return {identity && lo >= 1.8 && hi <= 2.2,
          "log-log slopes in [" + num(lo) + ", " + num(hi) + "], zero-change identity " +
              (identity ? "bit-exact" : "BROKEN")};
}

// ---------------------------------------------------------------- 5

/// Features of the bundle tracked in at least `min_frames` frames.
std::set<long> long_tracks(const SimBundle& b, int min_frames) {
  std::map<long, int> count;
  for (const auto& f : b.frames)
    for (const auto& [id, uv] : f.observations) ++count[id];
  std::set<long> out;
  for (const auto& [id, n] : count)
    if (n >= min_frames) out.insert(id);
  return out;
}

Outcome baseline_sanity() {
  const Scenario s = preset("static_room");
  const SimBundle b = generate(s);
  RunOptions opt;
  opt.trace.weights = true;
  const EstimatorRun plain = run_estimator(s, b, Method::kPlainLs, opt);
  const EstimatorRun atls = run_estimator(s, b, Method::kAtls, opt);
  if (plain.failed || atls.failed) return {false, "run failed: " + plain.failure + atls.failure};
  const double ate_plain = evaluate(plain.trajectory, b.ground_truth).ate_rmse;
  const double ate_atls = evaluate(atls.trajectory, b.ground_truth).ate_rmse;

  std::map<long, double> final_weight;
  for (const auto& row : atls.weight_rows) final_weight[row.feature_id] = row.weight;
  const std::set<long> tracked = long_tracks(b, 20);
  int total = 0, full = 0;
  for (const auto& [id, life] : atls.features) {
    if (life.graduated_kf < 0 || !tracked.count(id) || !final_weight.count(id)) continue;
    ++total;
    full += final_weight[id] == 1.0;
  }
  const double frac = total ? static_cast<double>(full) / total : 0.0;
  const bool pass = ate_plain < 0.05 && std::abs(ate_atls - ate_plain) <= 0.1 * ate_plain && frac >= 0.95;
  return {pass, "plain_ls ATE " + num(ate_plain) + " m, atls ATE " + num(ate_atls) + " m, weight-1 fraction " +
                    num(frac) + " of " + std::to_string(total) + " long tracks"};
}

// ---------------------------------------------------------------- 6

Outcome dynamic_rejection() {
  const SolverConfig defaults;
  const int horizon = 2 * defaults.n_k;
  std::ostringstream detail;
  bool ate_ok = true;
  int dyn_total = 0, dyn_zeroed = 0;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    Scenario s = preset("occlusion_high");
    s.seed = seed;
    const SimBundle b = generate(s);
    const EstimatorRun plain = run_estimator(s, b, Method::kPlainLs);
    const EstimatorRun atls = run_estimator(s, b, Method::kAtls);
    const double inf = std::numeric_limits<double>::infinity();
    const double ate_plain = plain.failed ? inf : evaluate(plain.trajectory, b.ground_truth).ate_rmse;
    const double ate_atls = atls.failed ? inf : evaluate(atls.trajectory, b.ground_truth).ate_rmse;
    ate_ok = ate_ok && !atls.failed && ate_atls <= 0.5 * ate_plain;
    detail << (seed > 1 ? "; " : "") << "seed " << seed << " atls " << num(ate_atls) << " vs plain "
           << (plain.failed ? std::string("diverged") : num(ate_plain));
    for (const auto& [id, life] : atls.features) {
      if (!is_dynamic_feature(b.clusters, id) || life.graduated_kf < 0) continue;
      ++dyn_total;
      dyn_zeroed += life.zeroed_kf >= 0 && life.zeroed_kf - life.graduated_kf <= horizon;
    }
  }
  const double frac = dyn_total ? static_cast<double>(dyn_zeroed) / dyn_total : 0.0;
  detail << "; dynamic zeroed within " << horizon << " keyframes of graduation: " << num(frac) << " of " << dyn_total;
  return {ate_ok && frac >= 0.9, detail.str()};
}

// ---------------------------------------------------------------- 7

Outcome abrupt_recovery() {
  std::ostringstream detail;
  bool ate_ok = true, fire_ok = true;
  for (const std::string name : {"lateral_abrupt", "parallel_abrupt"}) {
    int timely = 0;
    std::vector<double> ratios;
    bool diverged = false;
    for (uint64_t seed = 1; seed <= 5; ++seed) {
      Scenario s = preset(name);
      s.seed = seed;
      const SimBundle b = generate(s);
      const EstimatorRun only = run_estimator(s, b, Method::kAtls);
      const EstimatorRun full = run_estimator(s, b, Method::kAtlsBccSsr);
      double t_move = 0.0;
      for (const auto& c : b.clusters)
        if (c.motion.kind == MotionKind::kAbrupt) t_move = c.motion.t_move;
      if (full.failed) {
        diverged = true;
        ate_ok = false;
        continue;
      }
      const double inf = std::numeric_limits<double>::infinity();
      const double a_only = only.failed ? inf : evaluate(only.trajectory, b.ground_truth).ate_rmse;
      const double a_full = evaluate(full.trajectory, b.ground_truth).ate_rmse;
      ratios.push_back(a_full / a_only);
      ate_ok = ate_ok && a_full <= 0.5 * a_only;
      int kf_at_onset = -1;
      bool fired = false;
      for (const auto& f : full.frames) {
        if (f.stamp + 1e-9 < t_move) continue;
        if (kf_at_onset < 0) kf_at_onset = f.keyframes_so_far;
        if (f.keyframes_so_far - kf_at_onset > 2) break;
        fired = fired || f.bcc_fired;
      }
      timely += fired;
    }
    fire_ok = fire_ok && timely >= 4;
    detail << name << ": ATE ratio full/atls";
    for (double r : ratios) detail << " " << num(r);
    detail << (diverged ? " (diverged)" : "") << ", timely fires " << timely << "/5; ";
  }

  int static_fires = 0, static_failures = 0;
  for (uint64_t seed = 1; seed <= 100; ++seed) {
    Scenario s = preset("static_room");
    s.seed = seed;
    const EstimatorRun r = run_estimator(s, generate(s), Method::kAtlsBccSsr);
    static_fires += r.bcc_fires;
    static_failures += r.failed;
  }
  detail << "static_room fires over 100 seeds " << static_fires;
  if (static_failures) detail << " (" << static_failures << " failed runs)";
  return {ate_ok && fire_ok && static_fires == 0 && static_failures == 0, detail.str()};
}

// ---------------------------------------------------------------- 8

Outcome marginalization_oracle() {
  // noise-free measurements, weighted with the preset's noise model
  Scenario s = preset("static_room");
  s.duration = 10.0;
  const SimBundle b = generate(dynvio::testing::noise_free(s));
  const EstimatorRun sliding = run_estimator(s, b, Method::kPlainLs);
  if (sliding.failed) return {false, "sliding-window run failed: " + sliding.failure};

  const int stride = 2;
  const int count = static_cast<int>(b.frames.size() - 1) / stride + 1;
  WindowState batch = dynvio::testing::window_from_bundle(s, b, 0, count, stride);
  Gen g(1008);
  for (size_t i = 1; i < batch.frames.size(); ++i) {
    Vec15 d = g.tangent(1e-2);
    d.segment<6>(9) *= 0.1;
    batch.frames[i].state = boxplus(batch.frames[i].state, d);
  }
  SolverConfig cfg;
  cfg.kernel_mode = KernelMode::kPlainLs;
  cfg.pixel_sigma = s.pixel_sigma;
  cfg.max_inner_iterations = 100;
  cfg.relative_tolerance = 1e-14;
  const SolveReport rep = optimize_states(batch, s.camera, cfg);

  const BodyState& last = sliding.trajectory.back();
  const BodyState& oracle = batch.frames.back().state;
  if (std::abs(last.stamp - oracle.stamp) > 1e-9) return {false, "final stamps differ"};
  const double dp = (last.p_wb - oracle.p_wb).norm();
  const double truth = (oracle.p_wb - b.ground_truth.back().p_wb).norm();
  return {dp < 1e-3, "final position difference " + num(dp) + " m (batch of " + std::to_string(count) +
                         " frames, " + std::to_string(rep.iterations) + " iterations, batch vs truth " + num(truth) +
                         " m)"};
}

// ---------------------------------------------------------------- 9

Outcome bcc_properties() {
  Gen g(1009);
  const BccConfig cfg;
  int bad_scale = 0;
  for (int i = 0; i < 1000; ++i) {
    const int n = g.integer(1, 12);
    std::vector<double> a, b, as, bs;
    for (int k = 0; k < n; ++k) {
      b.push_back(g.log_uniform(1e-3, 10.0));
      a.push_back(b.back() * g.log_uniform(0.1, 10.0));
    }
    const double c = g.log_uniform(1e-2, 1e3);
    for (int k = 0; k < n; ++k) {
      as.push_back(c * a[k]);
      bs.push_back(c * b[k]);
    }
    const BccReport r0 = bcc_from_norms(a, b, cfg), r1 = bcc_from_norms(as, bs, cfg);
    bool ok = true, near_edge = false;
    for (int k = 0; k < n; ++k) {
      ok = ok && std::abs(r1.ratios[k] - r0.ratios[k]) <= 1e-12 * r0.ratios[k];
      near_edge = near_edge || std::abs(r0.ratios[k] - cfg.tau_r) < 1e-9;
    }
    if (!near_edge) ok = ok && r1.n_a == r0.n_a && r1.consistent == r0.consistent;
    bad_scale += !ok;
  }

  Scenario s = preset("static_room");
  s.duration = 5.0;
  s.seed = 9;
  const SimBundle bundle = generate(s);
  const SolverConfig scfg;
  const WindowState base = dynvio::testing::window_from_bundle(s, bundle, 10, 6, 3);
  int bad_restore = 0;
  for (int i = 0; i < 1000; ++i) {
    WindowState w = base;
    for (auto& [id, f] : w.features) f.weight = g.uniform(0, 1) < 0.2 ? g.uniform(0.0, 1.0) : 1.0;
    const StateSnapshot snap = snapshot(w);
    for (auto& f : w.frames) f.state = boxplus(f.state, g.tangent(0.3));
    for (auto& [id, f] : w.features) {
      f.inv_depth *= g.uniform(0.5, 2.0);
      f.weight = g.uniform(0.0, 1.0);
    }
    w.prior.r = VecX::Constant(w.prior.r.size(), g.uniform(-1, 1));
    const atls::AtlsShape shape = atls::build_shape(scfg.r_max, g.uniform(0.5, 6.0));
    const atls::AtlsShape narrowed = recover_and_narrow(w, snap, shape, 0, s.camera, scfg, cfg);
    WindowState expected = snap.window;
    categorize(expected);
    apply_weight_update(expected, s.camera, scfg, narrowed);
    bool same = w.frames == snap.window.frames && w.prior == snap.window.prior;
    for (const auto& [id, f] : w.features) {
      const Feature& o = snap.window.features.at(id);
      same = same && f.inv_depth == o.inv_depth && f.track == o.track && f.weight == expected.features.at(id).weight;
    }
    bad_restore += !same;
  }
  return {bad_scale == 0 && bad_restore == 0, "scale invariance failures " + std::to_string(bad_scale) +
                                                  "/1000, lossless recovery failures " +
                                                  std::to_string(bad_restore) + "/1000"};
}

// ---------------------------------------------------------------- 10

Outcome compute_scaling() {
  Scenario s = preset("occlusion_high");
  s.duration = 10.0;
  const SimBundle b = generate(s);
  auto median_ms = [&](Method m, int features) {
    RunOptions opt;
    opt.max_features = features;
    std::vector<double> t;
    for (int rep = 0; rep < 3; ++rep) t.push_back(run_estimator(s, b, m, opt).mean_ba_ms);
    return median(t);
  };
  std::ostringstream detail;
  std::map<Method, double> slope;
  for (Method m : {Method::kPlainLs, Method::kAtls}) {
    const double t100 = median_ms(m, 100), t200 = median_ms(m, 200), t400 = median_ms(m, 400);
    slope[m] = std::log(t400 / t100) / std::log(4.0);
    detail << to_string(m) << " " << num(t100) << "/" << num(t200) << "/" << num(t400) << " ms (slope "
           << num(slope[m]) << "); ";
  }
  return {slope[Method::kAtls] <= slope[Method::kPlainLs], detail.str() + "median of 3 runs"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"kernel optimality", kernel_optimality},
      {"truncation plateau and continuity", truncation_property},
      {"Jacobian suite", jacobian_suite},
      {"preintegration repropagation", repropagation},
      {"baseline sanity", baseline_sanity},
      {"dynamic rejection", dynamic_rejection},
      {"abrupt-object recovery", abrupt_recovery},
      {"marginalization oracle", marginalization_oracle},
      {"BCC properties", bcc_properties},
      {"compute scaling", compute_scaling},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failures = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("criterion %2d %s: %s (%s) [%.1f s]\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
