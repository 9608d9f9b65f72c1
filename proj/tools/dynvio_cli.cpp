// dynvio: simulate scenarios, run estimator variants, score and compare runs.

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "dynvio/harness.hpp"
#include "dynvio/scenario_io.hpp"

namespace {

int run_simulate(const std::string& scenario, uint64_t seed, const std::string& out) {
  dynvio::simulate(scenario, seed, out);
  std::cout << "wrote " << out << "/{imu,frames,gt}.csv and scenario.json\n";
  return 0;
}

int run_run(const std::string& scenario, const std::string& method, const std::string& seeds,
            const std::string& out, const std::string& trace, int max_features) {
  dynvio::RunSpec spec;
  spec.scenario_ref = scenario;
  spec.method = dynvio::parse_method(method);
  spec.seeds = dynvio::parse_seeds(seeds);
  spec.out_dir = out;
  spec.options.trace = dynvio::parse_trace_flags(trace);
  spec.options.max_features = max_features;
  const auto rows = dynvio::run(spec, &std::cerr);
  int failures = 0;
  for (const auto& r : rows) failures += r.failed ? 1 : 0;
  std::cout << rows.size() - failures << "/" << rows.size() << " seeds completed; metrics in " << out
            << "/metrics.csv\n";
  return 0;
}

int run_compare(const std::vector<std::string>& dirs, const std::string& csv_path) {
  std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
  const auto rows = dynvio::compare(paths);
  std::cout << dynvio::format_compare_table(rows);
  if (csv_path.empty()) {
    std::cout << "\n" << dynvio::format_compare_csv(rows);
  } else {
    std::ofstream out(csv_path);
    if (!out) throw dynvio::IoError("cannot write " + csv_path);
    out << dynvio::format_compare_csv(rows);
  }
  return 0;
}

int run_metrics(const std::string& dir) {
  const auto rows = dynvio::recompute_metrics(dir);
  for (const auto& r : rows) {
    std::cout << "seed " << r.seed << ": ";
    if (r.failed)
      std::cout << "failed\n";
    else
      std::cout << "ate " << dynvio::fmt(r.ate_rmse) << " m, rte " << dynvio::fmt(r.rte_rmse) << " m\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dynvio: sliding-window visual-inertial estimation on synthetic dynamic scenes"};
  app.require_subcommand(1);

  std::string scenario, out, method = "atls_bcc_ssr", seeds, trace, csv_path, dir;
  uint64_t seed = 1;
  int max_features = 200;
  std::vector<std::string> dirs;

  auto* sim = app.add_subcommand("simulate", "Generate IMU, frame and ground-truth CSVs for one seed");
  sim->add_option("scenario", scenario, "Preset name or scenario JSON file")->required();
  sim->add_option("--seed", seed, "Random seed")->required();
  sim->add_option("--out", out, "Output directory")->required();

  auto* run = app.add_subcommand("run", "Run an estimator variant over a list of seeds");
  run->add_option("scenario", scenario, "Preset name or scenario JSON file")->required();
  run->add_option("--method", method, "plain_ls, huber, atls, atls_bcc or atls_bcc_ssr")->capture_default_str();
  run->add_option("--seeds", seeds, "Comma separated seeds")->required();
  run->add_option("--out", out, "Output directory")->required();
  run->add_option("--trace", trace, "Comma separated subset of weights,bias,bcc");
  run->add_option("--max-features", max_features, "Visual features admitted per frame")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  auto* cmp = app.add_subcommand("compare", "Aggregate run directories into a summary table");
  cmp->add_option("dirs", dirs, "Run directories")->required()->expected(2, -1);
  cmp->add_option("--csv", csv_path, "Write the CSV table here instead of stdout");

  auto* met = app.add_subcommand("metrics", "Recompute metrics.csv of a run directory");
  met->add_option("dir", dir, "Run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) return run_simulate(scenario, seed, out);
    if (*run) return run_run(scenario, method, seeds, out, trace, max_features);
    if (*cmp) return run_compare(dirs, csv_path);
    if (*met) return run_metrics(dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
