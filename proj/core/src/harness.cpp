#include "dynvio/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "dynvio/scenario_io.hpp"
#include "json.hpp"

namespace dynvio {

using nlohmann::json;

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

std::string seed_dir_name(uint64_t seed) { return "seed_" + std::to_string(seed); }

std::string number_or_nan(bool failed, double v) { return failed ? "nan" : fmt(v); }

}  // namespace

TraceFlags parse_trace_flags(const std::string& csv) {
  TraceFlags t;
  for (const auto& item : split(csv, ',')) {
    if (item == "weights")
      t.weights = true;
    else if (item == "bias")
      t.bias = true;
    else if (item == "bcc")
      t.bcc = true;
    else
      throw std::invalid_argument("unknown trace flag '" + item + "' (expected weights, bias, bcc)");
  }
  return t;
}

std::vector<uint64_t> parse_seeds(const std::string& csv) {
  std::vector<uint64_t> seeds;
  for (const auto& item : split(csv, ',')) {
    size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || item.front() == '-') throw std::invalid_argument("invalid seed '" + item + "'");
    seeds.push_back(v);
  }
  if (seeds.empty()) throw std::invalid_argument("at least one seed is required");
  return seeds;
}

EstimatorConfig estimator_config(const Scenario& s, Method method, const RunOptions& opt) {
  EstimatorConfig cfg;
  cfg.method = method;
  if (opt.solver) cfg.solver = *opt.solver;
  if (opt.bcc) cfg.bcc = *opt.bcc;
  cfg.camera = s.camera;
  cfg.imu_noise = s.imu;
  cfg.max_features = opt.max_features;
  if (!opt.solver && s.pixel_sigma > 0.0) cfg.solver.pixel_sigma = s.pixel_sigma;
  return cfg;
}

EstimatorRun run_estimator(const Scenario& s, const SimBundle& b, Method method, const RunOptions& opt) {
  EstimatorRun run;
  if (b.frames.empty()) throw std::invalid_argument("bundle has no frames");
  const double limit = 10.0 * s.extent();
  Estimator est(estimator_config(s, method, opt), b.ground_truth.front());
  int keyframes = 0;
  double ba_sum = 0.0;
  int ba_count = 0;
  int window_index = 0;

  for (size_t f = 0; f < b.frames.size(); ++f) {
    FrameInput in;
    in.stamp = b.frames[f].stamp;
    in.observations = b.frames[f].observations;
    if (f > 0) in.imu = imu_between(b.imu, b.frames[f - 1].stamp, in.stamp);

    FrameResult res;
    try {
      res = est.process(in);
    } catch (const std::exception& e) {
      run.failed = true;
      run.failure = std::string("estimator error at t=") + fmt(in.stamp) + ": " + e.what();
      break;
    }
    if (!res.state.finite() || res.state.p_wb.norm() > limit) {
      run.failed = true;
      run.failure = "diverged at t=" + fmt(in.stamp);
      break;
    }
    run.trajectory.push_back(res.state);

    FrameLog log;
    log.stamp = in.stamp;
    log.keyframe = res.keyframe;
    log.reset = res.reset;
    log.recoveries = res.guard.recoveries;
    log.ba_ms = res.ba_ms;
    log.bcc_fired = !res.guard.reports.empty() && !res.guard.reports.front().consistent;
    if (res.keyframe) ++keyframes;
    log.keyframes_so_far = keyframes;
    run.frames.push_back(log);
    run.recovery_count += res.guard.recoveries;
    if (log.bcc_fired) ++run.bcc_fires;
    if (res.optimized) {
      ba_sum += res.ba_ms;
      ++ba_count;
      for (const auto& r : res.guard.reports) {
        const double max_ratio = r.ratios.empty() ? 0.0 : *std::max_element(r.ratios.begin(), r.ratios.end());
        run.bcc_rows.push_back({window_index, r.n_a, r.round, in.stamp, r.consistent, max_ratio});
      }
      ++window_index;
    }

    for (const auto& [id, feat] : est.window().features) {
      FeatureLife& life = run.features[id];
      if (feat.graduated && life.graduated_kf < 0) life.graduated_kf = keyframes;
      if (feat.weight <= 0.0 && life.zeroed_kf < 0) life.zeroed_kf = keyframes;
      if (opt.trace.weights) run.weight_rows.push_back({in.stamp, id, feat.weight});
    }
  }
  run.mean_ba_ms = ba_count > 0 ? ba_sum / ba_count : 0.0;
  return run;
}

SeedMetrics evaluate(const std::vector<BodyState>& est, const std::vector<BodyState>& gt) {
  SeedMetrics m;
  const TrajectoryPair pair = associate(est, gt);
  m.ate_rmse = ate_rmse(pair);
  m.rte_rmse = rte(pair).rmse;
  return m;
}

namespace {

void write_run_outputs(const std::filesystem::path& dir, const EstimatorRun& r, const TraceFlags& trace) {
  std::filesystem::create_directories(dir);
  write_states_csv(dir / "trajectory.csv", r.trajectory);
  if (trace.weights) {
    auto out = open_out(dir / "weights.csv");
    out << "stamp,feature_id,omega\n";
    for (const auto& w : r.weight_rows) out << fmt(w.stamp) << ',' << w.feature_id << ',' << fmt(w.weight) << '\n';
  }
  if (trace.bias) {
    auto out = open_out(dir / "bias.csv");
    out << "stamp,bax,bay,baz,bwx,bwy,bwz\n";
    for (const auto& x : r.trajectory)
      out << fmt(x.stamp) << ',' << fmt(x.b_a.x()) << ',' << fmt(x.b_a.y()) << ',' << fmt(x.b_a.z()) << ','
          << fmt(x.b_w.x()) << ',' << fmt(x.b_w.y()) << ',' << fmt(x.b_w.z()) << '\n';
  }
  if (trace.bcc) {
    auto out = open_out(dir / "bcc.csv");
    out << "window,n_a,round,stamp,consistent,max_ratio\n";
    for (const auto& b : r.bcc_rows)
      out << b.window << ',' << b.n_a << ',' << b.round << ',' << fmt(b.stamp) << ',' << (b.consistent ? 1 : 0) << ','
          << fmt(b.max_ratio) << '\n';
  }
}

void write_metrics_csv(const std::filesystem::path& path, const std::string& method, const std::string& scenario,
                       const std::vector<SeedMetrics>& rows) {
  auto out = open_out(path);
  out << "method,scenario,seed,ate_rmse,rte_rmse,recovery_count,mean_ba_ms\n";
  for (const auto& m : rows)
    out << method << ',' << scenario << ',' << m.seed << ',' << number_or_nan(m.failed, m.ate_rmse) << ','
        << number_or_nan(m.failed, m.rte_rmse) << ',' << m.recovery_count << ',' << fmt(m.mean_ba_ms) << '\n';
}

/// metrics.csv rows keyed by seed (method and scenario columns are text).
std::map<uint64_t, SeedMetrics> read_metrics_csv(const std::filesystem::path& path) {
  std::map<uint64_t, SeedMetrics> out;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto cells = split(line, ',');
    if (cells.size() != 7) throw IoError(path.string() + ": malformed row");
    SeedMetrics m;
    m.seed = std::stoull(cells[2]);
    m.failed = cells[3] == "nan";
    m.ate_rmse = m.failed ? std::numeric_limits<double>::quiet_NaN() : std::stod(cells[3]);
    m.rte_rmse = m.failed ? std::numeric_limits<double>::quiet_NaN() : std::stod(cells[4]);
    m.recovery_count = std::stoi(cells[5]);
    m.mean_ba_ms = std::stod(cells[6]);
    out[m.seed] = m;
  }
  return out;
}

}  // namespace

std::vector<SeedMetrics> run(const RunSpec& spec, std::ostream* log) {
  if (spec.seeds.empty()) throw std::invalid_argument("at least one seed is required");
  const Scenario base = resolve_scenario(spec.scenario_ref);
  std::filesystem::create_directories(spec.out_dir);
  save_scenario(base, spec.out_dir / "scenario.json");

  std::vector<SeedMetrics> rows;
  json failures = json::object();
  for (uint64_t seed : spec.seeds) {
    Scenario s = base;
    s.seed = seed;
    const SimBundle bundle = generate(s);
    const EstimatorRun r = run_estimator(s, bundle, spec.method, spec.options);
    write_run_outputs(spec.out_dir / seed_dir_name(seed), r, spec.options.trace);

    SeedMetrics m;
    if (!r.failed && r.trajectory.size() >= 2) {
      m = evaluate(r.trajectory, bundle.ground_truth);
    } else {
      m.failed = true;
      failures[std::to_string(seed)] = r.failed ? r.failure : "trajectory too short";
    }
    m.seed = seed;
    m.recovery_count = r.recovery_count;
    m.mean_ba_ms = r.mean_ba_ms;
    rows.push_back(m);
    if (log) {
      *log << to_string(spec.method) << " " << base.name << " seed " << seed << ": ";
      if (m.failed)
        *log << "FAILED (" << failures[std::to_string(seed)].get<std::string>() << ")\n";
      else
        *log << "ate " << fmt(m.ate_rmse) << " m, rte " << fmt(m.rte_rmse) << " m, recoveries " << m.recovery_count
             << ", ba " << fmt(m.mean_ba_ms) << " ms\n";
    }
  }
  write_metrics_csv(spec.out_dir / "metrics.csv", to_string(spec.method), base.name, rows);

  json info;
  info["method"] = to_string(spec.method);
  info["scenario"] = base.name;
  info["seeds"] = spec.seeds;
  info["max_features"] = spec.options.max_features;
  info["failures"] = failures;
  auto out = open_out(spec.out_dir / "run.json");
  out << info.dump(2) << "\n";
  return rows;
}

void simulate(const std::string& scenario_ref, uint64_t seed, const std::filesystem::path& out_dir) {
  Scenario s = resolve_scenario(scenario_ref);
  s.seed = seed;
  const SimBundle b = generate(s);
  write_bundle(b, out_dir);
  save_scenario(s, out_dir / "scenario.json");
}

std::vector<SeedMetrics> recompute_metrics(const std::filesystem::path& dir) {
  const json info = read_json(dir / "run.json");
  const Scenario base = load_scenario(dir / "scenario.json");
  std::map<uint64_t, SeedMetrics> previous;
  if (std::filesystem::exists(dir / "metrics.csv")) previous = read_metrics_csv(dir / "metrics.csv");
  const json failures = info.value("failures", json::object());

  std::vector<SeedMetrics> rows;
  for (uint64_t seed : info.at("seeds").get<std::vector<uint64_t>>()) {
    SeedMetrics m;
    m.seed = seed;
    if (const auto it = previous.find(seed); it != previous.end()) {
      m.recovery_count = it->second.recovery_count;
      m.mean_ba_ms = it->second.mean_ba_ms;
    }
    const auto traj_path = dir / seed_dir_name(seed) / "trajectory.csv";
    const auto est = read_states_csv(traj_path);
    if (failures.contains(std::to_string(seed)) || est.size() < 2) {
      m.failed = true;
    } else {
      Scenario s = base;
      s.seed = seed;
      const SeedMetrics e = evaluate(est, generate(s).ground_truth);
      m.ate_rmse = e.ate_rmse;
      m.rte_rmse = e.rte_rmse;
    }
    rows.push_back(m);
  }
  write_metrics_csv(dir / "metrics.csv", info.at("method").get<std::string>(), base.name, rows);
  return rows;
}

std::vector<CompareRow> compare(const std::vector<std::filesystem::path>& dirs) {
  if (dirs.size() < 2) throw std::invalid_argument("compare needs at least two run directories");
  std::vector<CompareRow> rows;
  std::optional<std::string> ref_scenario;
  std::string ref_name;
  std::set<uint64_t> ref_seeds;
  for (const auto& dir : dirs) {
    const json info = read_json(dir / "run.json");
    Scenario s = load_scenario(dir / "scenario.json");
    s.seed = 0;
    const auto seeds_vec = info.at("seeds").get<std::vector<uint64_t>>();
    const std::set<uint64_t> seeds(seeds_vec.begin(), seeds_vec.end());
    const std::string text = scenario_to_json(s);
    if (!ref_scenario) {
      ref_scenario = text;
      ref_name = s.name;
      ref_seeds = seeds;
    } else {
      if (text != *ref_scenario)
        throw std::invalid_argument("refusing to compare: " + dir.string() + " ran a different scenario ('" + s.name +
                                    "' vs '" + ref_name + "')");
      if (seeds != ref_seeds) throw std::invalid_argument("refusing to compare: " + dir.string() + " used other seeds");
    }
    const auto metrics = read_metrics_csv(dir / "metrics.csv");
    CompareRow row;
    row.method = info.at("method").get<std::string>();
    row.dir = dir.string();
    int ok = 0;
    for (const auto& [seed, m] : metrics) {
      ++row.runs;
      row.ba_ms_mean += m.mean_ba_ms;
      if (m.failed) {
        ++row.failures;
        continue;
      }
      ++ok;
      row.ate_mean += m.ate_rmse;
      row.rte_mean += m.rte_rmse;
    }
    if (ok > 0) {
      row.ate_mean /= ok;
      row.rte_mean /= ok;
    } else {
      row.ate_mean = row.rte_mean = std::numeric_limits<double>::quiet_NaN();
    }
    if (row.runs > 0) row.ba_ms_mean /= row.runs;
    rows.push_back(row);
  }
  return rows;
}

std::string format_compare_table(const std::vector<CompareRow>& rows) {
  std::ostringstream out;
  out << std::left << std::setw(14) << "method" << std::right << std::setw(12) << "ate_mean" << std::setw(12)
      << "rte_mean" << std::setw(10) << "failures" << std::setw(12) << "ba_ms" << "  dir\n";
  for (const auto& r : rows) {
    out << std::left << std::setw(14) << r.method << std::right << std::fixed << std::setprecision(4)
        << std::setw(12) << r.ate_mean << std::setw(12) << r.rte_mean << std::setw(10) << r.failures
        << std::setprecision(2) << std::setw(12) << r.ba_ms_mean << "  " << r.dir << "\n";
  }
  return out.str();
}

std::string format_compare_csv(const std::vector<CompareRow>& rows) {
  std::ostringstream out;
  out << "method,dir,runs,failures,ate_mean,rte_mean,mean_ba_ms\n";
  for (const auto& r : rows)
    out << r.method << ',' << r.dir << ',' << r.runs << ',' << r.failures << ',' << fmt(r.ate_mean) << ','
        << fmt(r.rte_mean) << ',' << fmt(r.ba_ms_mean) << '\n';
  return out.str();
}

}  // namespace dynvio
