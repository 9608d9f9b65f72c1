#include "dynvio/window_solver.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "dynvio/reprojection.hpp"

namespace dynvio {

std::string to_string(KernelMode m) {
  switch (m) {
    case KernelMode::kPlainLs: return "plain_ls";
    case KernelMode::kHuber: return "huber";
    case KernelMode::kAtls: return "atls";
  }
  return "unknown";
}

void SolverConfig::validate() const {
  if (n_k < 3) throw std::invalid_argument("n_k must be at least 3");
  if (n_o < 2) throw std::invalid_argument("n_o must be at least 2");
  if (!(parallax_threshold > 0.0) || !(huber_delta > 0.0) || !(r_max > 0.0) || !(pixel_sigma > 0.0) ||
      !(r_hat_floor > 0.0) || !(trunc_floor > 0.0))
    throw std::invalid_argument("solver thresholds must be positive");
  if (max_outer_alternations < 1 || max_inner_iterations < 1)
    throw std::invalid_argument("iteration counts must be positive");
  if (!(min_depth > 0.0) || !(max_depth > min_depth)) throw std::invalid_argument("invalid depth gate");
}

std::variant<double, WindowResetSignal> weighted_parallax(std::span<const ParallaxSample> tracked) {
  double num = 0.0, den = 0.0;
  for (const auto& s : tracked) {
    num += s.weight * s.parallax;
    den += s.weight;
  }
  if (tracked.empty() || !(den > 0.0)) return WindowResetSignal{};
  return num / den;
}

bool select_keyframe(double theta_avg, double parallax_threshold) { return theta_avg > parallax_threshold; }

double effective_weight(const Feature& f, KernelMode mode) {
  return mode == KernelMode::kAtls ? f.weight : 1.0;
}

std::vector<ParallaxSample> parallax_samples(const WindowState& w, const CameraModel& cam, int ref,
                                             KernelMode mode) {
  std::vector<ParallaxSample> out;
  const Frame& cur = w.newest();
  const Frame& kf = w.frames.at(ref);
  const Mat3 R_cc = (cur.state.q_wb.toRotationMatrix() * cam.T_bc.R).transpose() *
                    (kf.state.q_wb.toRotationMatrix() * cam.T_bc.R);
  for (const auto& [id, f] : w.features) {
    const Observation* a = f.find(kf.id);
    const Observation* b = f.find(cur.id);
    if (a == nullptr || b == nullptr) continue;
    const Vec3 ray = R_cc * unproject(cam, a->uv);
    if (!(ray.z() > kMinProjectDepth)) continue;
    const Vec2 pred(cam.fx * ray.x() / ray.z() + cam.cx, cam.fy * ray.y() / ray.z() + cam.cy);
    out.push_back({(pred - b->uv).norm(), effective_weight(f, mode)});
  }
  return out;
}

void categorize(WindowState& w) {
  const long newest = w.newest().id;
  for (auto& [id, f] : w.features) {
    if (f.find(newest) == nullptr)
      f.category = FeatureCategory::kLostInWindow;
    else
      f.category = f.graduated ? FeatureCategory::kTrackedOptimized : FeatureCategory::kTrackedNew;
  }
}

std::optional<double> triangulate_feature(const WindowState& w, const CameraModel& cam, const Feature& f,
                                          const SolverConfig& cfg) {
  if (f.track.size() < 2) return std::nullopt;
  const Observation& first = f.track.front();
  const Observation& last = f.track.back();
  const int i0 = w.index_of(first.frame_id);
  const int i1 = w.index_of(last.frame_id);
  if (i0 < 0 || i1 < 0 || i0 == i1) return std::nullopt;
  const auto depth = triangulate_two_view(cam, w.frames[i0].state, first.uv, w.frames[i1].state, last.uv);
  if (!depth || *depth < cfg.min_depth || *depth > cfg.max_depth) return std::nullopt;
  if (f.track.size() == 2) return 1.0 / *depth;

  // Two views seed the depth; every in-window observation then refines it
  // by a golden-section search on log inverse depth within the gate.
  const auto cost = [&](double log_inv) {
    double c = 0.0;
    for (double e : reprojection_errors(w, cam, f, std::exp(log_inv))) c += e * e;
    return c;
  };
  const double seed = -std::log(*depth);
  double a = std::max(seed - std::log(3.0), -std::log(cfg.max_depth));
  double b = std::min(seed + std::log(3.0), -std::log(cfg.min_depth));
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
  double f1 = cost(x1), f2 = cost(x2);
  for (int it = 0; it < 40; ++it) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - phi * (b - a);
      f1 = cost(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + phi * (b - a);
      f2 = cost(x2);
    }
  }
  const double refined = f1 < f2 ? x1 : x2;
  return cost(refined) < cost(seed) ? std::exp(refined) : 1.0 / *depth;
}

std::vector<double> reprojection_errors(const WindowState& w, const CameraModel& cam, const Feature& f,
                                        double inv_depth) {
  std::vector<double> out;
  if (f.track.empty()) return out;
  const int ia = w.index_of(f.anchor().frame_id);
  if (ia < 0) return out;
  for (size_t k = 1; k < f.track.size(); ++k) {
    const int it = w.index_of(f.track[k].frame_id);
    if (it < 0) continue;
    const Reprojection rp =
        reproject(cam, w.frames[ia].state, w.frames[it].state, f.anchor().uv, f.track[k].uv, inv_depth, false);
    out.push_back(rp.valid ? rp.residual.norm() : std::numeric_limits<double>::infinity());
  }
  return out;
}

std::optional<double> current_frame_residual(const WindowState& w, const CameraModel& cam, const Feature& f) {
  const Frame& cur = w.newest();
  const Observation* obs = f.find(cur.id);
  if (obs == nullptr || f.track.empty() || f.anchor().frame_id == cur.id) return std::nullopt;
  const int ia = w.index_of(f.anchor().frame_id);
  if (ia < 0) return std::nullopt;
  const Reprojection rp = reproject(cam, w.frames[ia].state, cur.state, f.anchor().uv, obs->uv, f.inv_depth, false);
  if (!rp.valid) return std::numeric_limits<double>::infinity();
  return rp.residual.norm();
}

int graduate_features(WindowState& w, const CameraModel& cam, const SolverConfig& cfg) {
  const long newest = w.newest().id;
  int promoted = 0;
  for (auto& [id, f] : w.features) {
    if (f.find(newest) == nullptr) continue;
    if (f.graduated && f.triangulated) continue;
    if (!f.graduated && static_cast<int>(f.track.size()) < cfg.n_o) continue;
    const auto inv_depth = triangulate_feature(w, cam, f, cfg);
    if (!inv_depth) continue;
    f.inv_depth = *inv_depth;
    f.triangulated = true;
    if (!f.graduated) ++promoted;
    f.graduated = true;
    f.category = FeatureCategory::kTrackedOptimized;
  }
  return promoted;
}

void relinearize_preintegrations(WindowState& w, double threshold) {
  for (int i = 1; i < w.size(); ++i) {
    auto& pre = w.frames[i].preint;
    if (!pre) continue;
    const BodyState& x = w.frames[i - 1].state;
    const double dba = (x.b_a - pre->lin_b_a).norm();
    const double dbw = (x.b_w - pre->lin_b_w).norm();
    if (dba > threshold || dbw > threshold) *pre = integrate(pre->samples, x.b_a, x.b_w, pre->noise);
  }
}

bool is_optimized(const Feature& f, KernelMode mode) {
  return f.graduated && f.triangulated && f.inv_depth > 0.0 && f.track.size() >= 2 &&
         effective_weight(f, mode) > 0.0;
}

std::vector<VisualResidualTerm> visual_terms(const WindowState& w, const SolverConfig& cfg) {
  std::vector<VisualResidualTerm> out;
  for (const auto& [id, f] : w.features) {
    if (!is_optimized(f, cfg.kernel_mode)) continue;
    const int ia = w.index_of(f.anchor().frame_id);
    for (size_t k = 1; k < f.track.size(); ++k) {
      const int it = w.index_of(f.track[k].frame_id);
      if (ia < 0 || it < 0) continue;
      out.push_back({id, ia, it, f.anchor().uv, f.track[k].uv, effective_weight(f, cfg.kernel_mode)});
    }
  }
  return out;
}

namespace {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

struct FeatureBlock {
  long id = -1;
  int anchor = -1;
  Vec2 anchor_uv = Vec2::Zero();
  std::vector<std::pair<int, Vec2>> obs;
  double weight = 1.0;
};

/// Linearization of one feature: its diagonal entry, gradient and the
/// coupling vectors to the [dp, dq] blocks of the frames it touches.
struct FeatureSystem {
  double hff = 0.0;
  double gf = 0.0;
  std::vector<int> frames;
  std::vector<Vec6> couple;
};

class Problem {
 public:
  Problem(const WindowState& w, const CameraModel& cam, const SolverConfig& cfg)
      : w_(w), cam_(cam), cfg_(cfg), n_(w.size()) {
    for (const auto& [id, f] : w.features) {
      if (!is_optimized(f, cfg.kernel_mode)) continue;
      FeatureBlock b;
      b.id = id;
      b.anchor = w.index_of(f.anchor().frame_id);
      b.anchor_uv = f.anchor().uv;
      b.weight = effective_weight(f, cfg.kernel_mode);
      for (size_t k = 1; k < f.track.size(); ++k) {
        const int it = w.index_of(f.track[k].frame_id);
        if (it >= 0 && it != b.anchor) b.obs.emplace_back(it, f.track[k].uv);
      }
      if (b.anchor < 0 || b.obs.empty()) continue;
      // a term that already projects behind a camera cannot be linearized
      bool valid = true;
      for (const auto& [it, uv] : b.obs)
        valid = valid && reproject(cam, w.frames[b.anchor].state, w.frames[it].state, b.anchor_uv, uv,
                                   f.inv_depth, false)
                             .valid;
      if (!valid) continue;
      blocks_.push_back(std::move(b));
    }
    if (!w.prior.empty()) {
      for (long id : w.prior.frame_ids) {
        const int idx = w.index_of(id);
        if (idx < 0) throw SolverError("marginal prior references a frame outside the window");
        prior_idx_.push_back(idx);
      }
    }
  }

  const std::vector<FeatureBlock>& blocks() const { return blocks_; }
  int num_visual_terms() const {
    int n = 0;
    for (const auto& b : blocks_) n += static_cast<int>(b.obs.size());
    return n;
  }

  /// Robust cost; +inf when any visual term becomes invalid.
  double cost(const std::vector<BodyState>& x, const std::vector<double>& lambda) const {
    double c = 0.0;
    if (!prior_idx_.empty()) c += prior_residual(x).squaredNorm();
    for (int i = 1; i < n_; ++i) {
      const auto& pre = w_.frames[i].preint;
      if (!pre) continue;
      c += imu_residual(*pre, x[i - 1], x[i], w_.g_w, false).whitened.squaredNorm();
    }
    for (size_t j = 0; j < blocks_.size(); ++j) {
      const FeatureBlock& b = blocks_[j];
      if (!(lambda[j] > 0.0)) return std::numeric_limits<double>::infinity();
      for (const auto& [it, uv] : b.obs) {
        const Reprojection rp = reproject(cam_, x[b.anchor], x[it], b.anchor_uv, uv, lambda[j], false);
        if (!rp.valid) return std::numeric_limits<double>::infinity();
        c += visual_cost(rp.residual.squaredNorm(), b.weight);
      }
    }
    return c;
  }

  /// Builds the frame-block normal equations H dx = -g (visual depth terms
  /// kept separate in `fs` for the Schur complement).
  void linearize(const std::vector<BodyState>& x, const std::vector<double>& lambda, MatX& H, VecX& g,
                 std::vector<FeatureSystem>& fs) const {
    const int N = 15 * n_;
    H.setZero(N, N);
    g.setZero(N);

    if (!prior_idx_.empty()) {
      const VecX r = prior_residual(x);
      MatX J = w_.prior.J;
      for (size_t k = 0; k < prior_idx_.size(); ++k) {
        const Vec15 d = boxminus(x[prior_idx_[k]], w_.prior.lin_states[k]);
        const Mat3 Jinv = right_jacobian_inv(d.segment<3>(tangent::kQ));
        const int c = 15 * static_cast<int>(k) + tangent::kQ;
        J.middleCols<3>(c) = (J.middleCols<3>(c) * Jinv).eval();
      }
      for (size_t a = 0; a < prior_idx_.size(); ++a) {
        const auto Ja = J.middleCols<15>(15 * a);
        g.segment<15>(15 * prior_idx_[a]) += Ja.transpose() * r;
        for (size_t b = 0; b < prior_idx_.size(); ++b)
          H.block<15, 15>(15 * prior_idx_[a], 15 * prior_idx_[b]) += Ja.transpose() * J.middleCols<15>(15 * b);
      }
    }

    for (int i = 1; i < n_; ++i) {
      const auto& pre = w_.frames[i].preint;
      if (!pre) continue;
      const ImuResidual res = imu_residual(*pre, x[i - 1], x[i], w_.g_w, true);
      const int a = 15 * (i - 1), b = 15 * i;
      H.block<15, 15>(a, a) += res.J_k.transpose() * res.J_k;
      H.block<15, 15>(a, b) += res.J_k.transpose() * res.J_k1;
      H.block<15, 15>(b, a) += res.J_k1.transpose() * res.J_k;
      H.block<15, 15>(b, b) += res.J_k1.transpose() * res.J_k1;
      g.segment<15>(a) += res.J_k.transpose() * res.whitened;
      g.segment<15>(b) += res.J_k1.transpose() * res.whitened;
    }

    fs.assign(blocks_.size(), FeatureSystem{});
    for (size_t j = 0; j < blocks_.size(); ++j) {
      const FeatureBlock& bl = blocks_[j];
      FeatureSystem& s = fs[j];
      s.frames.push_back(bl.anchor);
      s.couple.push_back(Vec6::Zero());
      const int a = 15 * bl.anchor;
      for (const auto& [it, uv] : bl.obs) {
        const Reprojection rp = reproject(cam_, x[bl.anchor], x[it], bl.anchor_uv, uv, lambda[j], true);
        if (!rp.valid) continue;
        const double sc = visual_scale(rp.residual.norm(), bl.weight);
        const Vec2 r = sc * rp.residual;
        const Mat26 Ja = sc * rp.J_anchor;
        const Mat26 Jt = sc * rp.J_target;
        const Vec2 Jl = sc * rp.J_inv_depth;
        const int t = 15 * it;
        H.block<6, 6>(a, a) += Ja.transpose() * Ja;
        H.block<6, 6>(t, t) += Jt.transpose() * Jt;
        H.block<6, 6>(a, t) += Ja.transpose() * Jt;
        H.block<6, 6>(t, a) += Jt.transpose() * Ja;
        g.segment<6>(a) += Ja.transpose() * r;
        g.segment<6>(t) += Jt.transpose() * r;
        s.hff += Jl.squaredNorm();
        s.gf += Jl.dot(r);
        s.couple[0] += Ja.transpose() * Jl;
        s.frames.push_back(it);
        s.couple.push_back(Jt.transpose() * Jl);
      }
    }
  }

 private:
  VecX prior_residual(const std::vector<BodyState>& x) const {
    VecX dx(15 * prior_idx_.size());
    for (size_t k = 0; k < prior_idx_.size(); ++k)
      dx.segment<15>(15 * k) = boxminus(x[prior_idx_[k]], w_.prior.lin_states[k]);
    return w_.prior.r + w_.prior.J * dx;
  }

  double visual_cost(double sq_px, double weight) const {
    const double s2 = cfg_.pixel_sigma * cfg_.pixel_sigma;
    switch (cfg_.kernel_mode) {
      case KernelMode::kPlainLs: return sq_px / s2;
      case KernelMode::kAtls: return weight * sq_px / s2;
      case KernelMode::kHuber: {
        const double e = std::sqrt(sq_px) / cfg_.pixel_sigma;
        const double d = cfg_.huber_delta / cfg_.pixel_sigma;
        return e <= d ? e * e : 2.0 * d * e - d * d;
      }
    }
    return sq_px / s2;
  }

  /// Factor applied to a residual and its Jacobian so that the squared
  /// scaled residual reproduces the (first-order) robust cost.
  double visual_scale(double norm_px, double weight) const {
    switch (cfg_.kernel_mode) {
      case KernelMode::kPlainLs: return 1.0 / cfg_.pixel_sigma;
      case KernelMode::kAtls: return std::sqrt(weight) / cfg_.pixel_sigma;
      case KernelMode::kHuber: {
        const double e = norm_px / cfg_.pixel_sigma;
        const double d = cfg_.huber_delta / cfg_.pixel_sigma;
        return (e <= d ? 1.0 : std::sqrt(d / e)) / cfg_.pixel_sigma;
      }
    }
    return 1.0 / cfg_.pixel_sigma;
  }

  const WindowState& w_;
  const CameraModel& cam_;
  const SolverConfig& cfg_;
  int n_;
  std::vector<FeatureBlock> blocks_;
  std::vector<int> prior_idx_;
};

constexpr double kMinDiag = 1e-6;

/// Damped Schur-complement solve. Returns false if the reduced system
/// could not be factorized.
bool solve_damped(const MatX& H, const VecX& g, const std::vector<FeatureSystem>& fs, double damping,
                  VecX& dx, std::vector<double>& dl) {
  const int N = static_cast<int>(H.rows());
  MatX A = H;
  VecX b = g;
  for (int i = 0; i < N; ++i) A(i, i) += damping * std::max(H(i, i), kMinDiag);

  std::vector<double> hff_d(fs.size());
  for (size_t j = 0; j < fs.size(); ++j) {
    const FeatureSystem& s = fs[j];
    hff_d[j] = s.hff + damping * std::max(s.hff, kMinDiag);
    const double inv = 1.0 / hff_d[j];
    for (size_t p = 0; p < s.frames.size(); ++p) {
      const int fp = 15 * s.frames[p];
      b.segment<6>(fp) -= s.couple[p] * (s.gf * inv);
      for (size_t q = 0; q < s.frames.size(); ++q)
        A.block<6, 6>(fp, 15 * s.frames[q]) -= s.couple[p] * s.couple[q].transpose() * inv;
    }
  }

  // gauge: the first frame's position and orientation stay fixed
  for (int i = 0; i < 6; ++i) {
    A.row(i).setZero();
    A.col(i).setZero();
    A(i, i) = 1.0;
    b(i) = 0.0;
  }

  Eigen::LDLT<MatX> ldlt(A);
  if (ldlt.info() != Eigen::Success) return false;
  dx = ldlt.solve(-b);
  if (!dx.allFinite()) return false;

  dl.resize(fs.size());
  for (size_t j = 0; j < fs.size(); ++j) {
    const FeatureSystem& s = fs[j];
    double acc = s.gf;
    for (size_t p = 0; p < s.frames.size(); ++p) acc += s.couple[p].dot(dx.segment<6>(15 * s.frames[p]));
    dl[j] = -acc / hff_d[j];
  }
  return true;
}

}  // namespace

double window_cost(const WindowState& w, const CameraModel& cam, const SolverConfig& cfg) {
  Problem prob(w, cam, cfg);
  std::vector<BodyState> x;
  for (const auto& f : w.frames) x.push_back(f.state);
  std::vector<double> lambda;
  for (const auto& b : prob.blocks()) lambda.push_back(w.features.at(b.id).inv_depth);
  return prob.cost(x, lambda);
}

SolveReport optimize_states(WindowState& w, const CameraModel& cam, const SolverConfig& cfg) {
  SolveReport report;
  if (w.size() < 2) return report;
  relinearize_preintegrations(w, cfg.relinearization_threshold);

  const Problem prob(w, cam, cfg);
  report.features_used = static_cast<int>(prob.blocks().size());
  report.visual_terms = prob.num_visual_terms();

  std::vector<BodyState> x;
  for (const auto& f : w.frames) x.push_back(f.state);
  std::vector<double> lambda;
  for (const auto& b : prob.blocks()) lambda.push_back(w.features.at(b.id).inv_depth);

  double cost = prob.cost(x, lambda);
  if (!std::isfinite(cost)) {
    std::ostringstream msg;
    msg << "optimize_states: initial cost is not finite (" << prob.blocks().size() << " features, " << w.size()
        << " frames)";
    throw SolverError(msg.str());
  }
  report.initial_cost = cost;
  report.accepted_costs.push_back(cost);

  double damping = cfg.initial_damping;
  MatX H;
  VecX g, dx;
  std::vector<FeatureSystem> fs;
  std::vector<double> dl;

  for (int iter = 0; iter < cfg.max_inner_iterations; ++iter) {
    report.iterations = iter + 1;
    prob.linearize(x, lambda, H, g, fs);

    bool accepted = false;
    double new_cost = cost;
    while (damping < 1e12) {
      if (!solve_damped(H, g, fs, damping, dx, dl)) {
        damping *= 10.0;
        continue;
      }
      std::vector<BodyState> x_new(x.size());
      std::vector<double> l_new(lambda.size());
      try {
        for (size_t i = 0; i < x.size(); ++i) x_new[i] = boxplus(x[i], dx.segment<15>(15 * i));
      } catch (const NonFiniteError&) {
        damping *= 10.0;
        continue;
      }
      for (size_t j = 0; j < lambda.size(); ++j) l_new[j] = lambda[j] + dl[j];
      new_cost = prob.cost(x_new, l_new);
      if (new_cost < cost) {
        x.swap(x_new);
        lambda.swap(l_new);
        damping = std::max(damping * 0.1, 1e-12);
        accepted = true;
        break;
      }
      damping *= 10.0;
    }
    if (!accepted) {
      // no descent direction left at any damping: the iterate is stationary
      report.converged = true;
      break;
    }
    const double decrease = cost - new_cost;
    cost = new_cost;
    report.accepted_costs.push_back(cost);
    if (decrease <= cfg.relative_tolerance * std::max(cost, 1e-300)) {
      report.converged = true;
      break;
    }
  }
  if (!report.converged) report.hit_iteration_limit = true;
  report.final_cost = cost;

  for (int i = 0; i < w.size(); ++i) w.frames[i].state = x[i];
  for (size_t j = 0; j < prob.blocks().size(); ++j) {
    Feature& f = w.features.at(prob.blocks()[j].id);
    f.inv_depth = lambda[j];
    if (lambda[j] < 1.0 / cfg.max_depth || lambda[j] > 1.0 / cfg.min_depth) f.triangulated = false;
  }
  return report;
}

atls::AtlsShape current_shape(const WindowState& w, const CameraModel& cam, const SolverConfig& cfg, int narrowing) {
  std::vector<atls::WeightedResidual> trusted;
  for (const auto& [id, f] : w.features) {
    if (f.category != FeatureCategory::kTrackedOptimized || !f.triangulated) continue;
    const auto r = current_frame_residual(w, cam, f);
    if (r && std::isfinite(*r)) trusted.push_back({*r, f.weight});
  }
  atls::AtlsShape shape = atls::build_shape(cfg.r_max, atls::compute_r_hat_max(trusted, cfg.r_hat_floor));
  for (int i = 0; i < narrowing; ++i) shape = atls::narrow(shape, cfg.trunc_floor);
  return shape;
}

namespace {

// New-feature residual at the most favourable inverse depth inside the depth
// gate. Used when two-view triangulation fails, which for a point that
// violates the epipolar constraint is the common case.
double best_gated_new_residual(const WindowState& w, const CameraModel& cam, const Feature& f,
                               const SolverConfig& cfg) {
  constexpr int kSamples = 48;
  const double lo = std::log(1.0 / cfg.max_depth);
  const double hi = std::log(1.0 / cfg.min_depth);
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < kSamples; ++i) {
    const double inv_depth = std::exp(lo + (hi - lo) * i / (kSamples - 1));
    const auto errors = reprojection_errors(w, cam, f, inv_depth);
    if (errors.empty()) return best;
    best = std::min(best, atls::residual_for_new_feature(errors));
  }
  return best;
}

}  // namespace

void apply_weight_update(WindowState& w, const CameraModel& cam, const SolverConfig& cfg,
                         const atls::AtlsShape& shape) {
  for (auto& [id, f] : w.features) {
    if (f.weight <= 0.0) continue;
    if (f.category == FeatureCategory::kTrackedOptimized) {
      if (!f.triangulated) continue;
      const auto r = current_frame_residual(w, cam, f);
      if (!r) continue;
      f.weight = atls::clamp_weight(atls::weight_update(shape, *r), f.weight);
    } else if (f.category == FeatureCategory::kTrackedNew) {
      if (f.track.size() < 2) continue;
      const auto inv_depth = triangulate_feature(w, cam, f, cfg);
      const double r = inv_depth ? atls::residual_for_new_feature(reprojection_errors(w, cam, f, *inv_depth))
                                 : best_gated_new_residual(w, cam, f, cfg);
      if (!std::isfinite(r) && !inv_depth) continue;
      f.weight = atls::clamp_weight(atls::weight_update(shape, r), f.weight);
    }
  }
}

atls::AtlsShape update_weights(WindowState& w, const CameraModel& cam, const SolverConfig& cfg, int narrowing) {
  categorize(w);
  const atls::AtlsShape shape = current_shape(w, cam, cfg, narrowing);
  apply_weight_update(w, cam, cfg, shape);
  return shape;
}

AlternationReport alternate(WindowState& w, const CameraModel& cam, const SolverConfig& cfg, int narrowing) {
  if (w.size() < 2) throw std::invalid_argument("alternate: window needs at least two frames");
  AlternationReport report;
  if (cfg.kernel_mode != KernelMode::kAtls) {
    categorize(w);
    report.solves.push_back(optimize_states(w, cam, cfg));
    return report;
  }
  for (int round = 0; round < cfg.max_outer_alternations; ++round) {
    report.shape = update_weights(w, cam, cfg, narrowing);
    report.solves.push_back(optimize_states(w, cam, cfg));
  }
  return report;
}

}  // namespace dynvio
