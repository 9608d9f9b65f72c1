#include "dynvio/marginalization.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dynvio/reprojection.hpp"

namespace dynvio {

namespace {

constexpr double kEigenEps = 1e-8;

/// Prior Jacobian w.r.t. the current tangent of each prior frame.
MatX prior_jacobian(const WindowState& w, VecX& r) {
  const MarginalPrior& p = w.prior;
  VecX dx(p.dim());
  MatX J = p.J;
  for (size_t k = 0; k < p.frame_ids.size(); ++k) {
    const BodyState& x = w.frames.at(w.index_of(p.frame_ids[k])).state;
    const Vec15 d = boxminus(x, p.lin_states[k]);
    dx.segment<15>(15 * k) = d;
    const int c = 15 * static_cast<int>(k) + tangent::kQ;
    J.middleCols<3>(c) = (J.middleCols<3>(c) * right_jacobian_inv(d.segment<3>(tangent::kQ))).eval();
  }
  r = p.r + p.J * dx;
  return J;
}

/// Eliminates the leading `m` parameters of (H, g) by the Schur complement.
bool schur_eliminate(const MatX& H, const VecX& g, int m, MatX& H_out, VecX& g_out) {
  const int k = static_cast<int>(H.rows()) - m;
  const MatX Hmm = 0.5 * (H.topLeftCorner(m, m) + H.topLeftCorner(m, m).transpose());
  Eigen::SelfAdjointEigenSolver<MatX> es(Hmm);
  bool regularized = false;
  MatX Hmm_inv;
  if (es.eigenvalues().minCoeff() > kEigenEps) {
    Hmm_inv = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  } else {
    regularized = true;
    Eigen::SelfAdjointEigenSolver<MatX> reg(Hmm + kEigenEps * MatX::Identity(m, m));
    const VecX inv =
        (reg.eigenvalues().array() > kEigenEps).select(reg.eigenvalues().cwiseInverse(), VecX::Zero(m));
    Hmm_inv = reg.eigenvectors() * inv.asDiagonal() * reg.eigenvectors().transpose();
  }
  const MatX Hkm = H.bottomLeftCorner(k, m);
  H_out = H.bottomRightCorner(k, k) - Hkm * Hmm_inv * Hkm.transpose();
  H_out = 0.5 * (H_out + H_out.transpose());
  g_out = g.tail(k) - Hkm * Hmm_inv * g.head(m);
  return regularized;
}

void set_prior(WindowState& w, const std::vector<int>& kept, const MatX& H, const VecX& g,
               MarginalizationReport& report) {
  MarginalPrior prior;
  for (int idx : kept) {
    prior.frame_ids.push_back(w.frames[idx].id);
    prior.lin_states.push_back(w.frames[idx].state);
  }
  information_to_prior(H, g, prior.J, prior.r, kEigenEps);
  report.kept_dim = static_cast<int>(H.rows());
  report.prior_rows = static_cast<int>(prior.J.rows());
  w.prior = std::move(prior);
}

/// Removes the observation of a frame from a feature, moving the anchor to
/// the next observation if needed. Returns false if the track became empty.
bool remove_observation(WindowState& w, Feature& f, long frame_id, const CameraModel& cam,
                        const SolverConfig& cfg) {
  auto it = std::find_if(f.track.begin(), f.track.end(), [&](const Observation& o) { return o.frame_id == frame_id; });
  if (it == f.track.end()) return true;
  if (it == f.track.begin() && f.track.size() >= 2) {
    const Observation& next = f.track[1];
    if (f.triangulated && f.inv_depth > 0.0) {
      const Vec3 p_w = anchor_to_world(cam, w.frames.at(w.index_of(frame_id)).state, f.anchor().uv, f.inv_depth);
      const Vec3 p_c = world_to_camera(cam, w.frames.at(w.index_of(next.frame_id)).state, p_w);
      if (p_c.z() >= cfg.min_depth && p_c.z() <= cfg.max_depth)
        f.inv_depth = 1.0 / p_c.z();
      else
        f.triangulated = false;
    }
  }
  f.track.erase(it);
  return !f.track.empty();
}

void remove_frame_observations(WindowState& w, long frame_id, const CameraModel& cam, const SolverConfig& cfg) {
  for (auto it = w.features.begin(); it != w.features.end();) {
    if (!remove_observation(w, it->second, frame_id, cam, cfg))
      it = w.features.erase(it);
    else
      ++it;
  }
}

}  // namespace

void information_to_prior(const MatX& H, const VecX& g, MatX& J, VecX& r, double eps) {
  Eigen::SelfAdjointEigenSolver<MatX> es(0.5 * (H + H.transpose()));
  const VecX& S = es.eigenvalues();
  int rows = 0;
  for (int i = 0; i < S.size(); ++i)
    if (S(i) > eps) ++rows;
  J.resize(rows, H.cols());
  r.resize(rows);
  int row = 0;
  for (int i = 0; i < S.size(); ++i) {
    if (!(S(i) > eps)) continue;
    const VecX v = es.eigenvectors().col(i);
    J.row(row) = std::sqrt(S(i)) * v.transpose();
    r(row) = v.dot(g) / std::sqrt(S(i));
    ++row;
  }
}

MarginalizationReport marginalize(WindowState& w, MarginalizationDecision decision, const CameraModel& cam,
                                  const SolverConfig& cfg) {
  if (decision == MarginalizationDecision::kOldest) return marginalize_oldest(w, cam, cfg);
  return drop_frame(w, w.size() - 2, cam, cfg);
}

MarginalizationReport marginalize_oldest(WindowState& w, const CameraModel& cam, const SolverConfig& cfg) {
  if (w.size() < 2) throw std::invalid_argument("marginalize_oldest: window needs at least two frames");
  MarginalizationReport report;
  const long oldest = w.frames[0].id;

  // features anchored in the oldest frame that currently enter the solve
  std::vector<long> feats;
  for (const auto& [id, f] : w.features) {
    if (!is_optimized(f, cfg.kernel_mode) || f.anchor().frame_id != oldest) continue;
    bool valid = true;
    for (size_t k = 1; k < f.track.size(); ++k) {
      const int it = w.index_of(f.track[k].frame_id);
      valid = valid && it > 0 &&
              reproject(cam, w.frames[0].state, w.frames[it].state, f.anchor().uv, f.track[k].uv, f.inv_depth, false)
                  .valid;
    }
    if (valid) feats.push_back(id);
  }

  std::vector<int> kept;
  auto keep = [&](int idx) {
    if (idx > 0 && std::find(kept.begin(), kept.end(), idx) == kept.end()) kept.push_back(idx);
  };
  keep(1);
  for (long id : w.prior.frame_ids) keep(w.index_of(id));
  for (long id : feats)
    for (const auto& o : w.features.at(id).track) keep(w.index_of(o.frame_id));
  std::sort(kept.begin(), kept.end());

  const int m = 15 + static_cast<int>(feats.size());
  const int dim = m + 15 * static_cast<int>(kept.size());
  auto col_of = [&](int frame_idx) {
    if (frame_idx == 0) return 0;
    const auto pos = std::find(kept.begin(), kept.end(), frame_idx) - kept.begin();
    return m + 15 * static_cast<int>(pos);
  };

  MatX H = MatX::Zero(dim, dim);
  VecX g = VecX::Zero(dim);

  if (!w.prior.empty()) {
    VecX r;
    const MatX J = prior_jacobian(w, r);
    for (size_t a = 0; a < w.prior.frame_ids.size(); ++a) {
      const int ca = col_of(w.index_of(w.prior.frame_ids[a]));
      g.segment<15>(ca) += J.middleCols<15>(15 * a).transpose() * r;
      for (size_t b = 0; b < w.prior.frame_ids.size(); ++b) {
        const int cb = col_of(w.index_of(w.prior.frame_ids[b]));
        H.block<15, 15>(ca, cb) += J.middleCols<15>(15 * a).transpose() * J.middleCols<15>(15 * b);
      }
    }
  }

  if (w.frames[1].preint) {
    const ImuResidual res = imu_residual(*w.frames[1].preint, w.frames[0].state, w.frames[1].state, w.g_w, true);
    const int a = 0, b = col_of(1);
    H.block<15, 15>(a, a) += res.J_k.transpose() * res.J_k;
    H.block<15, 15>(a, b) += res.J_k.transpose() * res.J_k1;
    H.block<15, 15>(b, a) += res.J_k1.transpose() * res.J_k;
    H.block<15, 15>(b, b) += res.J_k1.transpose() * res.J_k1;
    g.segment<15>(a) += res.J_k.transpose() * res.whitened;
    g.segment<15>(b) += res.J_k1.transpose() * res.whitened;
  }

  for (size_t j = 0; j < feats.size(); ++j) {
    const Feature& f = w.features.at(feats[j]);
    const int cf = 15 + static_cast<int>(j);
    const double weight = effective_weight(f, cfg.kernel_mode);
    for (size_t k = 1; k < f.track.size(); ++k) {
      const int it = w.index_of(f.track[k].frame_id);
      const Reprojection rp =
          reproject(cam, w.frames[0].state, w.frames[it].state, f.anchor().uv, f.track[k].uv, f.inv_depth, true);
      double sc = 1.0 / cfg.pixel_sigma;
      if (cfg.kernel_mode == KernelMode::kAtls) {
        sc *= std::sqrt(weight);
      } else if (cfg.kernel_mode == KernelMode::kHuber) {
        const double e = rp.residual.norm() / cfg.pixel_sigma;
        const double d = cfg.huber_delta / cfg.pixel_sigma;
        if (e > d) sc *= std::sqrt(d / e);
      }
      Eigen::Matrix<double, 2, 7> Jl;
      Jl.leftCols<6>() = sc * rp.J_target;
      Jl.col(6) = sc * rp.J_inv_depth;
      const Mat26 Ja = sc * rp.J_anchor;
      const Vec2 r = sc * rp.residual;
      const int ct = col_of(it);
      // blocks: anchor pose (0..5), target pose (ct..ct+5), depth (cf)
      const int idx[3] = {0, ct, cf};
      const int len[3] = {6, 6, 1};
      Eigen::Matrix<double, 2, 13> Jall;
      Jall.leftCols<6>() = Ja;
      Jall.middleCols<6>(6) = Jl.leftCols<6>();
      Jall.col(12) = Jl.col(6);
      const Eigen::Matrix<double, 13, 13> JtJ = Jall.transpose() * Jall;
      const Eigen::Matrix<double, 13, 1> Jtr = Jall.transpose() * r;
      const int off[3] = {0, 6, 12};
      for (int p = 0; p < 3; ++p) {
        g.segment(idx[p], len[p]) += Jtr.segment(off[p], len[p]);
        for (int q = 0; q < 3; ++q) H.block(idx[p], idx[q], len[p], len[q]) += JtJ.block(off[p], off[q], len[p], len[q]);
      }
    }
  }

  MatX Hk;
  VecX gk;
  report.regularized = schur_eliminate(H, g, m, Hk, gk);
  report.eliminated_dim = m;

  // kept indices shift down by one once the oldest frame is removed
  set_prior(w, kept, Hk, gk, report);
  remove_frame_observations(w, oldest, cam, cfg);
  w.frames.erase(w.frames.begin());
  w.frames[0].preint.reset();
  return report;
}

MarginalizationReport drop_frame(WindowState& w, int index, const CameraModel& cam, const SolverConfig& cfg) {
  if (index <= 0 || index >= w.size() - 1) throw std::invalid_argument("drop_frame: index must be interior");
  MarginalizationReport report;
  const long id = w.frames[index].id;

  if (!w.prior.empty() && w.prior.involves(id)) {
    VecX r;
    const MatX J = prior_jacobian(w, r);
    const int n = static_cast<int>(w.prior.frame_ids.size());
    const int pos = static_cast<int>(std::find(w.prior.frame_ids.begin(), w.prior.frame_ids.end(), id) -
                                      w.prior.frame_ids.begin());
    // reorder columns so the dropped frame comes first
    std::vector<int> order{pos};
    std::vector<int> kept;
    for (int k = 0; k < n; ++k)
      if (k != pos) {
        order.push_back(k);
        kept.push_back(w.index_of(w.prior.frame_ids[k]));
      }
    MatX Jo(J.rows(), J.cols());
    for (int k = 0; k < n; ++k) Jo.middleCols<15>(15 * k) = J.middleCols<15>(15 * order[k]);
    const MatX H = Jo.transpose() * Jo;
    const VecX g = Jo.transpose() * r;
    MatX Hk;
    VecX gk;
    report.regularized = schur_eliminate(H, g, 15, Hk, gk);
    report.eliminated_dim = 15;
    set_prior(w, kept, Hk, gk, report);
  }

  const Frame& prev = w.frames[index - 1];
  Frame& next = w.frames[index + 1];
  if (w.frames[index].preint && next.preint)
    next.preint = chain(*w.frames[index].preint, *next.preint, prev.state.b_a, prev.state.b_w);

  remove_frame_observations(w, id, cam, cfg);
  w.frames.erase(w.frames.begin() + index);
  return report;
}

}  // namespace dynvio
