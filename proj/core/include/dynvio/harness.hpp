#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dynvio/estimator.hpp"
#include "dynvio/metrics.hpp"
#include "dynvio/scenario.hpp"

namespace dynvio {

struct TraceFlags {
  bool weights = false;
  bool bias = false;
  bool bcc = false;
};

/// Parses a comma separated subset of {weights, bias, bcc}.
TraceFlags parse_trace_flags(const std::string& csv);
std::vector<uint64_t> parse_seeds(const std::string& csv);

struct RunOptions {
  int max_features = 200;
  TraceFlags trace;
  /// Overrides applied on top of the defaults (method decides the kernel).
  std::optional<SolverConfig> solver;
  std::optional<BccConfig> bcc;
};

/// Estimator configuration used for a scenario.
EstimatorConfig estimator_config(const Scenario& s, Method method, const RunOptions& opt);

struct FrameLog {
  double stamp = 0.0;
  bool keyframe = false;
  bool reset = false;
  bool bcc_fired = false;
  int recoveries = 0;
  double ba_ms = 0.0;
  int keyframes_so_far = 0;
};

/// When a feature entered the optimized set and when its weight hit zero,
/// counted in keyframes since the start of the run (-1: never).
struct FeatureLife {
  int graduated_kf = -1;
  int zeroed_kf = -1;
};

struct WeightRow {
  double stamp;
  long feature_id;
  double weight;
};

struct BccRow {
  int window;
  int n_a;
  int round;
  double stamp;
  bool consistent;
  double max_ratio;
};

struct EstimatorRun {
  std::vector<BodyState> trajectory;
  std::vector<FrameLog> frames;
  std::map<long, FeatureLife> features;
  std::vector<WeightRow> weight_rows;
  std::vector<BccRow> bcc_rows;
  bool failed = false;
  std::string failure;
  int recovery_count = 0;
  int bcc_fires = 0;
  double mean_ba_ms = 0.0;
};

/// Replays a bundle frame by frame through the estimator. Divergence
/// (non-finite state or position beyond 10x the scenario extent) and solver
/// exceptions end the run and mark it failed.
EstimatorRun run_estimator(const Scenario& s, const SimBundle& b, Method method, const RunOptions& opt = {});

struct SeedMetrics {
  uint64_t seed = 0;
  bool failed = false;
  double ate_rmse = 0.0;
  double rte_rmse = 0.0;
  int recovery_count = 0;
  double mean_ba_ms = 0.0;
};

/// ATE / RTE of an estimated trajectory against ground truth.
SeedMetrics evaluate(const std::vector<BodyState>& est, const std::vector<BodyState>& gt);

struct RunSpec {
  std::string scenario_ref;
  Method method = Method::kAtlsBccSsr;
  std::vector<uint64_t> seeds;
  std::filesystem::path out_dir;
  RunOptions options;
};

/// Runs every seed, writes DIR/seed_N/{trajectory,weights,bias,bcc}.csv,
/// DIR/metrics.csv, DIR/scenario.json and DIR/run.json. Returns the
/// per-seed metrics. Throws on configuration or IO errors.
std::vector<SeedMetrics> run(const RunSpec& spec, std::ostream* log = nullptr);

/// Writes the scenario file and sensor CSVs for one seed.
void simulate(const std::string& scenario_ref, uint64_t seed, const std::filesystem::path& out_dir);

/// Recomputes metrics.csv of a run directory from its trajectories and
/// regenerated ground truth.
std::vector<SeedMetrics> recompute_metrics(const std::filesystem::path& dir);

struct CompareRow {
  std::string method;
  std::string dir;
  int runs = 0;
  int failures = 0;
  double ate_mean = 0.0;
  double rte_mean = 0.0;
  double ba_ms_mean = 0.0;
};

/// Aggregates run directories; refuses directories whose scenarios or seed
/// sets differ. Failed seeds are counted, not averaged.
std::vector<CompareRow> compare(const std::vector<std::filesystem::path>& dirs);

std::string format_compare_table(const std::vector<CompareRow>& rows);
std::string format_compare_csv(const std::vector<CompareRow>& rows);

}  // namespace dynvio
