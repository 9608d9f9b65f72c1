#include "dynvio/metrics.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

namespace dynvio {

TrajectoryPair associate(const std::vector<BodyState>& est, const std::vector<BodyState>& gt, double max_dt) {
  TrajectoryPair pair;
  if (gt.empty()) return pair;
  std::vector<double> stamps;
  for (const auto& g : gt) stamps.push_back(g.stamp);
  for (const auto& e : est) {
    auto it = std::lower_bound(stamps.begin(), stamps.end(), e.stamp);
    size_t best = static_cast<size_t>(std::min<std::ptrdiff_t>(it - stamps.begin(), stamps.size() - 1));
    if (best > 0 && std::abs(stamps[best - 1] - e.stamp) < std::abs(stamps[best] - e.stamp)) --best;
    if (std::abs(stamps[best] - e.stamp) > max_dt) continue;
    pair.est.push_back({e.stamp, e.p_wb, e.q_wb});
    pair.gt.push_back({gt[best].stamp, gt[best].p_wb, gt[best].q_wb});
  }
  return pair;
}

RigidAlignment align_rigid(const TrajectoryPair& pair) {
  const size_t n = pair.est.size();
  if (n < 2 || pair.gt.size() != n) throw MetricsError("alignment needs at least two matched poses");
  Vec3 me = Vec3::Zero(), mg = Vec3::Zero();
  for (size_t i = 0; i < n; ++i) {
    me += pair.est[i].p;
    mg += pair.gt[i].p;
  }
  me /= static_cast<double>(n);
  mg /= static_cast<double>(n);
  Mat3 C = Mat3::Zero();
  for (size_t i = 0; i < n; ++i) C += (pair.gt[i].p - mg) * (pair.est[i].p - me).transpose();
  Eigen::JacobiSVD<Mat3> svd(C, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 S = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) S(2, 2) = -1.0;
  RigidAlignment a;
  a.R = svd.matrixU() * S * svd.matrixV().transpose();
  a.t = mg - a.R * me;
  return a;
}

double ate_rmse(const TrajectoryPair& pair) {
  const RigidAlignment a = align_rigid(pair);
  double sq = 0.0;
  for (size_t i = 0; i < pair.est.size(); ++i) sq += (a.R * pair.est[i].p + a.t - pair.gt[i].p).squaredNorm();
  return std::sqrt(sq / static_cast<double>(pair.est.size()));
}

RteSeries rte(const TrajectoryPair& pair, double segment) {
  if (!(segment > 0.0)) throw MetricsError("segment length must be positive");
  if (pair.est.size() != pair.gt.size()) throw MetricsError("unmatched trajectory pair");
  RteSeries out;
  const size_t n = pair.gt.size();
  size_t i = 0;
  double arc = 0.0;
  double sq = 0.0;
  for (size_t j = 1; j < n; ++j) {
    arc += (pair.gt[j].p - pair.gt[j - 1].p).norm();
    if (arc + 1e-9 < segment) continue;
    const Vec3 d_gt = pair.gt[i].q.conjugate() * (pair.gt[j].p - pair.gt[i].p);
    const Vec3 d_est = pair.est[i].q.conjugate() * (pair.est[j].p - pair.est[i].p);
    const double e = (d_est - d_gt).norm();
    out.stamps.push_back(pair.gt[j].stamp);
    out.errors.push_back(e);
    sq += e * e;
    i = j;
    arc = 0.0;
  }
  if (!out.errors.empty()) out.rmse = std::sqrt(sq / static_cast<double>(out.errors.size()));
  return out;
}

}  // namespace dynvio
