#include "dynvio/bias_guard.hpp"

#include <algorithm>

namespace dynvio {

void BccConfig::validate() const {
  if (!(tau_r >= 1.0)) throw std::invalid_argument("tau_r must be at least 1");
  if (tau_a < 1) throw std::invalid_argument("tau_a must be at least 1");
  if (max_recovery_rounds < 1) throw std::invalid_argument("max_recovery_rounds must be at least 1");
  if (!(denom_floor > 0.0)) throw std::invalid_argument("denom_floor must be positive");
}

BccReport bcc_from_norms(std::span<const double> optimized, std::span<const double> hybrid, const BccConfig& cfg,
                         int round) {
  if (optimized.size() != hybrid.size()) throw std::invalid_argument("bcc_from_norms: size mismatch");
  BccReport report;
  report.round = round;
  for (size_t k = 0; k < optimized.size(); ++k) {
    const double ratio = optimized[k] / std::max(hybrid[k], cfg.denom_floor);
    report.ratios.push_back(ratio);
    if (ratio > cfg.tau_r) ++report.n_a;
  }
  report.consistent = report.n_a <= cfg.tau_a;
  return report;
}

std::vector<double> alpha_beta_gamma_norms(const WindowState& w) {
  std::vector<double> out;
  for (int k = 0; k + 2 < w.size(); ++k) {
    const auto& pre = w.frames[k + 1].preint;
    if (!pre) {
      out.push_back(0.0);
      continue;
    }
    const ImuResidual r = imu_residual(*pre, w.frames[k].state, w.frames[k + 1].state, w.g_w, false);
    out.push_back(r.raw.head<9>().norm());
  }
  return out;
}

WindowState hybrid_state(const WindowState& optimized, const StateSnapshot& before) {
  WindowState out = optimized;
  for (auto& f : out.frames) {
    const int idx = before.window.index_of(f.id);
    if (idx < 0) continue;
    f.state.b_a = before.window.frames[idx].state.b_a;
    f.state.b_w = before.window.frames[idx].state.b_w;
  }
  return out;
}

BccReport consistency_check(const WindowState& x_hat, const WindowState& x_minus, const BccConfig& cfg, int round) {
  if (x_hat.size() < 3) {
    BccReport r;
    r.round = round;
    return r;
  }
  const auto num = alpha_beta_gamma_norms(x_hat);
  const auto den = alpha_beta_gamma_norms(x_minus);
  return bcc_from_norms(num, den, cfg, round);
}

atls::AtlsShape recover_and_narrow(WindowState& w, const StateSnapshot& snap, const atls::AtlsShape& shape,
                                   int round, const CameraModel& cam, const SolverConfig& scfg,
                                   const BccConfig& bcfg) {
  if (round >= bcfg.max_recovery_rounds) throw RecoveryExhausted("stable state recovery exhausted");
  restore(w, snap);
  categorize(w);
  const atls::AtlsShape narrowed = atls::narrow(shape, scfg.trunc_floor);
  apply_weight_update(w, cam, scfg, narrowed);
  return narrowed;
}

namespace {

void revert_to_prediction(WindowState& w, const StateSnapshot& snap) {
  restore(w, snap);
  if (w.size() >= 2 && w.frames.back().preint)
    w.frames.back().state = propagate(*w.frames.back().preint, w.frames[w.size() - 2].state, w.g_w);
}

}  // namespace

GuardResult guard_loop(WindowState& w, const CameraModel& cam, const SolverConfig& scfg, const BccConfig& bcfg,
                       GuardPolicy policy) {
  GuardResult result;
  const StateSnapshot snap = snapshot(w);
  AlternationReport alt = alternate(w, cam, scfg, 0);
  result.shape = alt.shape;
  result.optimizations = static_cast<int>(alt.solves.size());
  if (policy == GuardPolicy::kNone) return result;

  BccReport report = consistency_check(w, hybrid_state(w, snap), bcfg, 0);
  result.reports.push_back(report);
  if (report.consistent) return result;

  if (policy == GuardPolicy::kRevert) {
    revert_to_prediction(w, snap);
    result.reverted = true;
    return result;
  }

  atls::AtlsShape shape = alt.shape;
  for (int round = 0;; ++round) {
    try {
      shape = recover_and_narrow(w, snap, shape, round, cam, scfg, bcfg);
    } catch (const RecoveryExhausted&) {
      revert_to_prediction(w, snap);
      result.reverted = true;
      result.exhausted = true;
      return result;
    }
    ++result.recoveries;
    optimize_states(w, cam, scfg);
    ++result.optimizations;
    for (int a = 1; a < scfg.max_outer_alternations; ++a) {
      shape = update_weights(w, cam, scfg, round + 1);
      optimize_states(w, cam, scfg);
      ++result.optimizations;
    }
    result.shape = shape;
    report = consistency_check(w, hybrid_state(w, snap), bcfg, round + 1);
    result.reports.push_back(report);
    if (report.consistent) return result;
  }
}

}  // namespace dynvio
