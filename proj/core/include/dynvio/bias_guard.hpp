#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "dynvio/atls_kernel.hpp"
#include "dynvio/window.hpp"
#include "dynvio/window_solver.hpp"

namespace dynvio {

struct BccConfig {
  double tau_r = 2.0;
  int tau_a = 2;
  int max_recovery_rounds = 3;
  double denom_floor = 1e-6;

  void validate() const;
};

struct BccReport {
  std::vector<double> ratios;
  int n_a = 0;
  bool consistent = true;
  int round = 0;
};

/// Ratio test on precomputed αβγ residual norms of the optimized and hybrid
/// states, one entry per checked frame pair.
BccReport bcc_from_norms(std::span<const double> optimized, std::span<const double> hybrid, const BccConfig& cfg,
                         int round = 0);

/// Norm of the αβγ rows (un-whitened) of the IMU residual of every checked
/// pair (k, k+1), k = 0 .. size - 3. The newest pair is not checked.
std::vector<double> alpha_beta_gamma_norms(const WindowState& w);

/// Optimized poses and velocities with the biases of the snapshot.
WindowState hybrid_state(const WindowState& optimized, const StateSnapshot& before);

/// Windows shorter than three frames are trivially consistent.
BccReport consistency_check(const WindowState& x_hat, const WindowState& x_minus, const BccConfig& cfg,
                            int round = 0);

class RecoveryExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Restores the snapshot, halves the truncation range of `shape` and
/// re-derives the weights with it. Throws RecoveryExhausted when
/// round >= max_recovery_rounds.
atls::AtlsShape recover_and_narrow(WindowState& w, const StateSnapshot& snap, const atls::AtlsShape& shape,
                                   int round, const CameraModel& cam, const SolverConfig& scfg,
                                   const BccConfig& bcfg);

enum class GuardPolicy {
  kNone,     ///< optimize and accept
  kRevert,   ///< on inconsistency, keep the pre-optimization states
  kRecover,  ///< on inconsistency, revert, narrow and re-optimize
};

struct GuardResult {
  std::vector<BccReport> reports;
  int recoveries = 0;
  int optimizations = 0;
  bool reverted = false;
  bool exhausted = false;
  atls::AtlsShape shape;
};

/// Snapshot, alternate, check, and recover as dictated by the policy. When
/// the window ends up reverted, the newest frame takes the IMU-only
/// prediction from its predecessor.
GuardResult guard_loop(WindowState& w, const CameraModel& cam, const SolverConfig& scfg, const BccConfig& bcfg,
                       GuardPolicy policy);

}  // namespace dynvio
