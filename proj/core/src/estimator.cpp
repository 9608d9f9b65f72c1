#include "dynvio/estimator.hpp"

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <stdexcept>

#include "dynvio/marginalization.hpp"

namespace dynvio {

std::string to_string(Method m) {
  switch (m) {
    case Method::kPlainLs: return "plain_ls";
    case Method::kHuber: return "huber";
    case Method::kAtls: return "atls";
    case Method::kAtlsBcc: return "atls_bcc";
    case Method::kAtlsBccSsr: return "atls_bcc_ssr";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::kPlainLs, Method::kHuber, Method::kAtls, Method::kAtlsBcc, Method::kAtlsBccSsr})
    if (to_string(m) == name) return m;
  throw std::invalid_argument("unknown method '" + name + "'");
}

KernelMode kernel_for(Method m) {
  switch (m) {
    case Method::kPlainLs: return KernelMode::kPlainLs;
    case Method::kHuber: return KernelMode::kHuber;
    default: return KernelMode::kAtls;
  }
}

GuardPolicy policy_for(Method m) {
  switch (m) {
    case Method::kAtlsBcc: return GuardPolicy::kRevert;
    case Method::kAtlsBccSsr: return GuardPolicy::kRecover;
    default: return GuardPolicy::kNone;
  }
}

namespace {

uint64_t mix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

Estimator::Estimator(EstimatorConfig cfg, const BodyState& initial) : cfg_(std::move(cfg)), initial_(initial) {
  cfg_.solver.kernel_mode = kernel_for(cfg_.method);
  cfg_.solver.validate();
  cfg_.bcc.validate();
  cfg_.camera.validate();
  cfg_.imu_noise.validate();
  if (cfg_.max_features < 1) throw std::invalid_argument("max_features must be positive");
  if (!initial.finite()) throw NonFiniteError("initial state must be finite");
  if (!(cfg_.init_vel_sigma > 0.0) || !(cfg_.init_ba_sigma > 0.0) || !(cfg_.init_bw_sigma > 0.0))
    throw std::invalid_argument("initial prior sigmas must be positive");
  window_.g_w = cfg_.g_w;
}

int Estimator::latest_keyframe_index() const {
  for (int i = window_.size() - 2; i > 0; --i)
    if (window_.frames[i].keyframe) return i;
  return 0;
}

void Estimator::add_observations(const std::vector<std::pair<long, Vec2>>& obs) {
  const long fid = window_.newest().id;
  std::vector<std::pair<long, Vec2>> fresh;
  int tracked = 0;
  for (const auto& [id, uv] : obs) {
    auto it = window_.features.find(id);
    if (it != window_.features.end()) {
      it->second.track.push_back({fid, uv});
      ++tracked;
    } else {
      fresh.emplace_back(id, uv);
    }
  }
  // a hash order keeps the admitted subset unbiased w.r.t. id ranges
  std::sort(fresh.begin(), fresh.end(), [](const auto& a, const auto& b) {
    const uint64_t ha = mix(static_cast<uint64_t>(a.first)), hb = mix(static_cast<uint64_t>(b.first));
    return ha != hb ? ha < hb : a.first < b.first;
  });
  for (const auto& [id, uv] : fresh) {
    if (tracked >= cfg_.max_features) break;
    Feature f;
    f.id = id;
    const auto h = weight_history_.find(id);
    f.weight = h == weight_history_.end() ? 1.0 : h->second;
    f.track.push_back({fid, uv});
    window_.features.emplace(id, std::move(f));
    ++tracked;
  }
  // tracks that were never promoted are forgotten once lost
  for (auto it = window_.features.begin(); it != window_.features.end();) {
    if (!it->second.graduated && it->second.find(fid) == nullptr)
      it = window_.features.erase(it);
    else
      ++it;
  }
}

void Estimator::set_initial_prior() {
  const Frame& f0 = window_.frames.front();
  MarginalPrior p;
  p.frame_ids = {f0.id};
  p.lin_states = {f0.state};
  p.J = MatX::Zero(9, 15);
  p.J.block<3, 3>(0, tangent::kV) = Mat3::Identity() / cfg_.init_vel_sigma;
  p.J.block<3, 3>(3, tangent::kBa) = Mat3::Identity() / cfg_.init_ba_sigma;
  p.J.block<3, 3>(6, tangent::kBw) = Mat3::Identity() / cfg_.init_bw_sigma;
  p.r = VecX::Zero(9);
  window_.prior = std::move(p);
}

void Estimator::reset_window() {
  Frame cur = window_.frames.back();
  cur.preint.reset();
  cur.keyframe = true;
  window_.frames.assign(1, cur);
  set_initial_prior();
  for (auto it = window_.features.begin(); it != window_.features.end();) {
    const Observation* o = it->second.find(cur.id);
    if (o == nullptr) {
      it = window_.features.erase(it);
      continue;
    }
    Feature& f = it->second;
    const Observation keep = *o;
    f.track.assign(1, keep);
    f.graduated = false;
    f.triangulated = false;
    f.category = FeatureCategory::kTrackedNew;
    ++it;
  }
}

void Estimator::slide(bool keyframe) {
  const int n = window_.size();
  if (n >= 3 && !window_.frames[n - 2].keyframe)
    drop_frame(window_, n - 2, cfg_.camera, cfg_.solver);
  window_.frames.back().keyframe = keyframe;
  while (window_.size() >= cfg_.solver.n_k) marginalize_oldest(window_, cfg_.camera, cfg_.solver);
}

FrameResult Estimator::process(const FrameInput& in) {
  FrameResult out;
  out.stamp = in.stamp;

  if (window_.frames.empty()) {
    Frame f;
    f.id = next_frame_id_++;
    f.state = initial_;
    f.state.stamp = in.stamp;
    f.keyframe = true;
    window_.frames.push_back(f);
    set_initial_prior();
    add_observations(in.observations);
    out.state = f.state;
    out.keyframe = true;
    out.window_size = 1;
    return out;
  }

  const BodyState& last = window_.newest().state;
  if (!(in.stamp > last.stamp)) throw std::invalid_argument("frame stamps must be strictly increasing");
  Frame f;
  f.id = next_frame_id_++;
  f.preint = integrate(in.imu, last.b_a, last.b_w, cfg_.imu_noise);
  f.state = propagate(*f.preint, last, window_.g_w);
  f.state.stamp = in.stamp;
  f.keyframe = false;
  window_.frames.push_back(std::move(f));
  add_observations(in.observations);

  const auto samples = parallax_samples(window_, cfg_.camera, latest_keyframe_index(), cfg_.solver.kernel_mode);
  const auto parallax = weighted_parallax(samples);
  if (std::holds_alternative<WindowResetSignal>(parallax)) {
    reset_window();
    out.reset = true;
    out.keyframe = true;
    out.state = window_.newest().state;
    out.window_size = window_.size();
    return out;
  }

  graduate_features(window_, cfg_.camera, cfg_.solver);
  const auto t0 = std::chrono::steady_clock::now();
  out.guard = guard_loop(window_, cfg_.camera, cfg_.solver, cfg_.bcc, policy_for(cfg_.method));
  const auto t1 = std::chrono::steady_clock::now();
  out.ba_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  out.optimized = true;

  for (const auto& [id, feat] : window_.features) {
    auto [it, inserted] = weight_history_.emplace(id, feat.weight);
    if (!inserted) it->second = std::min(it->second, feat.weight);
  }

  out.state = window_.newest().state;
  out.keyframe = select_keyframe(std::get<double>(parallax), cfg_.solver.parallax_threshold);
  slide(out.keyframe);
  out.window_size = window_.size();
  return out;
}

}  // namespace dynvio
