#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "dynvio/atls_kernel.hpp"
#include "dynvio/window.hpp"

namespace dynvio {

enum class KernelMode { kPlainLs, kHuber, kAtls };

std::string to_string(KernelMode m);

struct SolverConfig {
  int n_k = 9;
  int n_o = 4;
  double parallax_threshold = 10.0;  ///< pixels
  int max_outer_alternations = 2;
  int max_inner_iterations = 10;
  KernelMode kernel_mode = KernelMode::kAtls;
  double huber_delta = 1.0;  ///< pixels
  double r_max = 10.0;       ///< pixels
  /// Lower bound on r_hat_max, pixels. Four times the default pixel noise so
  /// that noise alone rarely pushes a static feature past it.
  double r_hat_floor = 2.0;
  double trunc_floor = atls::kDefaultTruncFloor;
  double pixel_sigma = 1.0;  ///< visual residuals are divided by this
  double min_depth = 0.1;
  double max_depth = 200.0;
  double initial_damping = 1e-4;
  double relative_tolerance = 1e-6;
  double relinearization_threshold = kRelinearizationThreshold;

  void validate() const;
};

/// One reprojection term of the weighted bundle adjustment.
struct VisualResidualTerm {
  long feature_id = -1;
  int anchor_index = -1;
  int target_index = -1;
  Vec2 anchor_uv = Vec2::Zero();
  Vec2 target_uv = Vec2::Zero();
  double weight = 1.0;
};

struct WindowResetSignal {
  bool operator==(const WindowResetSignal&) const = default;
};

struct ParallaxSample {
  double parallax = 0.0;  ///< pixels
  double weight = 1.0;
};

/// Weighted mean parallax, or a reset signal when the weights sum to zero.
std::variant<double, WindowResetSignal> weighted_parallax(std::span<const ParallaxSample> tracked);

/// Strict comparison: a tie is not a keyframe.
bool select_keyframe(double theta_avg, double parallax_threshold);

/// Rotation-compensated parallax between the newest frame and frame `ref`
/// for every feature seen in both, weighted according to `mode`.
std::vector<ParallaxSample> parallax_samples(const WindowState& w, const CameraModel& cam, int ref,
                                             KernelMode mode);

/// Weight the solver applies to a feature (plain LS and Huber ignore ω).
double effective_weight(const Feature& f, KernelMode mode);

/// Re-tags every feature: seen in the newest frame -> optimized or new,
/// otherwise lost-in-window.
void categorize(WindowState& w);

/// Two-view triangulation from the first and latest in-window observation,
/// returning the anchor inverse depth or nullopt if degenerate or out of the
/// depth gate.
std::optional<double> triangulate_feature(const WindowState& w, const CameraModel& cam, const Feature& f,
                                          const SolverConfig& cfg);

/// Pixel reprojection error of every non-anchor observation for a given
/// inverse depth. Observations behind the camera yield +inf.
std::vector<double> reprojection_errors(const WindowState& w, const CameraModel& cam, const Feature& f,
                                        double inv_depth);

/// Residual magnitude of a feature in the newest frame, nullopt if it is not
/// seen there or is anchored there.
std::optional<double> current_frame_residual(const WindowState& w, const CameraModel& cam, const Feature& f);

/// Promotes new features with at least n_o in-window observations and a
/// valid triangulation into the optimized set. Returns the number promoted.
int graduate_features(WindowState& w, const CameraModel& cam, const SolverConfig& cfg);

/// Re-integrates preintegrations whose start-frame bias drifted past the
/// relinearization threshold.
void relinearize_preintegrations(WindowState& w, double threshold);

/// Features that enter the normal equations: graduated, triangulated, with
/// nonzero effective weight and at least one non-anchor observation.
bool is_optimized(const Feature& f, KernelMode mode);

std::vector<VisualResidualTerm> visual_terms(const WindowState& w, const SolverConfig& cfg);

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SolveReport {
  int iterations = 0;
  bool converged = false;
  bool hit_iteration_limit = false;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  std::vector<double> accepted_costs;
  int features_used = 0;
  int visual_terms = 0;
};

/// Total robust cost of the window (prior, IMU, visual) at its current states.
double window_cost(const WindowState& w, const CameraModel& cam, const SolverConfig& cfg);

/// Levenberg-Marquardt over all frame states and optimized inverse depths
/// with weights held fixed. Depths are eliminated by the Schur complement;
/// the first frame's pose is held fixed.
SolveReport optimize_states(WindowState& w, const CameraModel& cam, const SolverConfig& cfg);

/// Weight update with a given shape: optimized features use their
/// newest-frame residual, new features the worst in-window reprojection
/// error of a provisional triangulation, lost features are left alone.
void apply_weight_update(WindowState& w, const CameraModel& cam, const SolverConfig& cfg,
                         const atls::AtlsShape& shape);

/// Shape built from the current trusted residuals, narrowed `narrowing` times.
atls::AtlsShape current_shape(const WindowState& w, const CameraModel& cam, const SolverConfig& cfg,
                              int narrowing = 0);

/// Weight update of one alternation round. `narrowing` halves the
/// truncation range that many times. Returns the shape used.
atls::AtlsShape update_weights(WindowState& w, const CameraModel& cam, const SolverConfig& cfg,
                               int narrowing = 0);

struct AlternationReport {
  atls::AtlsShape shape;
  std::vector<SolveReport> solves;
};

/// Weight update / state optimization rounds. Baseline kernels run a single
/// optimization with weights forced to one.
AlternationReport alternate(WindowState& w, const CameraModel& cam, const SolverConfig& cfg, int narrowing = 0);

}  // namespace dynvio
