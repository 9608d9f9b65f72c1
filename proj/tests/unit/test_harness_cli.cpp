#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dynvio/harness.hpp"
#include "dynvio/scenario_io.hpp"

using namespace dynvio;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("dynvio_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// metrics.csv without the wall-clock column.
std::string metrics_without_timing(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string line, out;
  while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

std::string header_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

/// A short scenario file derived from a preset.
fs::path short_scenario(const fs::path& dir, const std::string& preset_name, double duration) {
  Scenario s = preset(preset_name);
  s.duration = duration;
  const fs::path p = dir / (preset_name + ".json");
  save_scenario(s, p);
  return p;
}

RunSpec spec_for(const fs::path& scenario, Method m, std::vector<uint64_t> seeds, const fs::path& out) {
  RunSpec spec;
  spec.scenario_ref = scenario.string();
  spec.method = m;
  spec.seeds = std::move(seeds);
  spec.out_dir = out;
  return spec;
}

}  // namespace

TEST_CASE("static room baseline run stays under five centimetres") {
  const auto dir = scratch("baseline");
  RunSpec spec;
  spec.scenario_ref = "static_room";
  spec.method = Method::kPlainLs;
  spec.seeds = {1};
  spec.out_dir = dir;
  const auto rows = run(spec);
  REQUIRE(rows.size() == 1);
  REQUIRE_FALSE(rows[0].failed);
  MESSAGE("static_room plain_ls seed 1 ATE " << rows[0].ate_rmse);
  CHECK(rows[0].ate_rmse < 0.05);
  CHECK(rows[0].recovery_count == 0);
  fs::remove_all(dir);
}

TEST_CASE("trace flags decide which per-seed files exist") {
  const auto dir = scratch("trace");
  const auto scen = short_scenario(dir, "dynamic_mid", 3.0);

  run(spec_for(scen, Method::kAtlsBccSsr, {4}, dir / "off"));
  CHECK(fs::exists(dir / "off" / "metrics.csv"));
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir / "off" / "seed_4")) files.push_back(e.path().filename().string());
  CHECK(files == std::vector<std::string>{"trajectory.csv"});

  RunSpec on = spec_for(scen, Method::kAtlsBccSsr, {4}, dir / "on");
  on.options.trace = parse_trace_flags("weights,bias,bcc");
  run(on);
  const fs::path seed = dir / "on" / "seed_4";
  CHECK(read_csv(seed / "weights.csv").header == std::vector<std::string>{"stamp", "feature_id", "omega"});
  CHECK(read_csv(seed / "bias.csv").header.size() == 7);
  const CsvTable bcc = read_csv(seed / "bcc.csv");
  CHECK(bcc.header == std::vector<std::string>{"window", "n_a", "round", "stamp", "consistent", "max_ratio"});
  CHECK_FALSE(bcc.rows.empty());
  CHECK(header_line(dir / "on" / "metrics.csv") ==
        "method,scenario,seed,ate_rmse,rte_rmse,recovery_count,mean_ba_ms");

  // weights never increase for a feature over the run
  const CsvTable w = read_csv(seed / "weights.csv");
  std::map<long, double> last;
  for (const auto& r : w.rows) {
    const long id = static_cast<long>(r[1]);
    CHECK(r[2] >= 0.0);
    CHECK(r[2] <= 1.0);
    if (auto it = last.find(id); it != last.end()) CHECK(r[2] <= it->second);
    last[id] = r[2];
  }
  fs::remove_all(dir);
}

TEST_CASE("runs are deterministic apart from wall-clock timing") {
  const auto dir = scratch("determinism");
  const auto scen = short_scenario(dir, "dynamic_mid", 4.0);
  for (const char* name : {"a", "b"}) {
    RunSpec spec = spec_for(scen, Method::kAtlsBccSsr, {2, 3}, dir / name);
    spec.options.trace = parse_trace_flags("weights,bias,bcc");
    run(spec);
  }
  for (const char* f : {"trajectory.csv", "weights.csv", "bias.csv", "bcc.csv"})
    for (const char* s : {"seed_2", "seed_3"}) CHECK(slurp(dir / "a" / s / f) == slurp(dir / "b" / s / f));
  CHECK(metrics_without_timing(dir / "a" / "metrics.csv") == metrics_without_timing(dir / "b" / "metrics.csv"));
  CHECK(slurp(dir / "a" / "scenario.json") == slurp(dir / "b" / "scenario.json"));
  fs::remove_all(dir);
}

TEST_CASE("a run leaves its scenario file untouched") {
  const auto dir = scratch("untouched");
  const auto scen = short_scenario(dir, "static_room", 2.0);
  const std::string before = slurp(scen);
  const auto stamp = fs::last_write_time(scen);
  run(spec_for(scen, Method::kAtls, {7}, dir / "out"));
  CHECK(slurp(scen) == before);
  CHECK(fs::last_write_time(scen) == stamp);
  fs::remove_all(dir);
}

TEST_CASE("comparing a method against itself gives identical rows") {
  const auto dir = scratch("compare_self");
  const auto scen = short_scenario(dir, "static_room", 3.0);
  run(spec_for(scen, Method::kAtls, {1, 2}, dir / "a"));
  fs::copy(dir / "a", dir / "b", fs::copy_options::recursive);
  const auto rows = compare({dir / "a", dir / "b"});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].method == "atls");
  CHECK(rows[0].runs == 2);
  CHECK(rows[0].ate_mean == rows[1].ate_mean);
  CHECK(rows[0].rte_mean == rows[1].rte_mean);
  CHECK(rows[0].ba_ms_mean == rows[1].ba_ms_mean);
  CHECK(rows[0].failures == rows[1].failures);
  const std::string table = format_compare_table(rows);
  CHECK(table.find("ate_mean") != std::string::npos);
  const std::string csv = format_compare_csv(rows);
  CHECK(csv.rfind("method,dir,runs,failures,ate_mean,rte_mean,mean_ba_ms\n", 0) == 0);
  fs::remove_all(dir);
}

TEST_CASE("compare refuses mismatched scenarios or seeds") {
  const auto dir = scratch("compare_mismatch");
  const auto room = short_scenario(dir, "static_room", 2.0);
  const auto crowd = short_scenario(dir, "dynamic_mid", 2.0);
  run(spec_for(room, Method::kPlainLs, {1}, dir / "room"));
  run(spec_for(crowd, Method::kPlainLs, {1}, dir / "crowd"));
  run(spec_for(room, Method::kPlainLs, {2}, dir / "room_seed2"));
  CHECK_THROWS_AS(compare({dir / "room", dir / "crowd"}), std::invalid_argument);
  CHECK_THROWS_AS(compare({dir / "room", dir / "room_seed2"}), std::invalid_argument);
  CHECK_THROWS_AS(compare({dir / "room"}), std::invalid_argument);
  CHECK_THROWS(compare({dir / "room", dir / "nowhere"}));
  fs::remove_all(dir);
}

TEST_CASE("failed seeds are counted, not averaged") {
  const auto dir = scratch("compare_failures");
  const auto scen = short_scenario(dir, "static_room", 2.0);
  const auto good = run(spec_for(scen, Method::kPlainLs, {1, 2}, dir / "a"));
  fs::copy(dir / "a", dir / "b", fs::copy_options::recursive);
  const double ate_seed1 = std::stod(fmt(good[0].ate_rmse));
  {
    std::ofstream out(dir / "b" / "metrics.csv");
    out << "method,scenario,seed,ate_rmse,rte_rmse,recovery_count,mean_ba_ms\n";
    out << "plain_ls,static_room,1," << fmt(ate_seed1) << ",0.01,0,1.0\n";
    out << "plain_ls,static_room,2,nan,nan,0,3.0\n";
  }
  const auto rows = compare({dir / "a", dir / "b"});
  CHECK(rows[1].runs == 2);
  CHECK(rows[1].failures == 1);
  CHECK(rows[1].ate_mean == doctest::Approx(ate_seed1).epsilon(1e-9));
  CHECK(rows[1].ba_ms_mean == doctest::Approx(2.0));
  CHECK(rows[0].failures == 0);
  fs::remove_all(dir);
}

TEST_CASE("metrics recomputation reproduces the run's scores") {
  const auto dir = scratch("recompute");
  const auto scen = short_scenario(dir, "dynamic_mid", 3.0);
  const auto rows = run(spec_for(scen, Method::kAtls, {5, 6}, dir / "run"));
  const auto again = recompute_metrics(dir / "run");
  REQUIRE(again.size() == rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    CHECK(again[i].seed == rows[i].seed);
    CHECK(again[i].ate_rmse == doctest::Approx(rows[i].ate_rmse).epsilon(1e-6));
    CHECK(again[i].rte_rmse == doctest::Approx(rows[i].rte_rmse).epsilon(1e-6));
    CHECK(again[i].recovery_count == rows[i].recovery_count);
    CHECK(again[i].mean_ba_ms == doctest::Approx(rows[i].mean_ba_ms).epsilon(1e-8));
  }
  fs::remove_all(dir);
}

TEST_CASE("simulate writes sensor streams and the scenario") {
  const auto dir = scratch("simulate");
  const auto scen = short_scenario(dir, "lateral_abrupt", 1.0);
  simulate(scen.string(), 11, dir / "sim");
  for (const char* f : {"imu.csv", "frames.csv", "gt.csv", "scenario.json"}) CHECK(fs::exists(dir / "sim" / f));
  const Scenario s = load_scenario(dir / "sim" / "scenario.json");
  CHECK(s.seed == 11);
  CHECK(s.duration == 1.0);
  const SimBundle b = read_bundle(dir / "sim");
  CHECK(b.ground_truth.size() == 21);
  CHECK_THROWS(simulate("not_a_preset", 1, dir / "bad"));
  fs::remove_all(dir);
}

TEST_CASE("argument parsing") {
  CHECK(parse_seeds("1,2,3") == std::vector<uint64_t>{1, 2, 3});
  CHECK(parse_seeds("42") == std::vector<uint64_t>{42});
  CHECK_THROWS_AS(parse_seeds(""), std::invalid_argument);
  CHECK_THROWS_AS(parse_seeds("1,x"), std::invalid_argument);
  CHECK_THROWS_AS(parse_seeds("-3"), std::invalid_argument);
  CHECK_THROWS_AS(parse_seeds("1.5"), std::invalid_argument);

  const TraceFlags all = parse_trace_flags("weights,bias,bcc");
  CHECK(all.weights);
  CHECK(all.bias);
  CHECK(all.bcc);
  const TraceFlags none = parse_trace_flags("");
  CHECK_FALSE((none.weights || none.bias || none.bcc));
  const TraceFlags one = parse_trace_flags("bcc");
  CHECK(one.bcc);
  CHECK_FALSE(one.weights);
  CHECK_THROWS_AS(parse_trace_flags("weights,ratios"), std::invalid_argument);

  for (const char* m : {"plain_ls", "huber", "atls", "atls_bcc", "atls_bcc_ssr"}) CHECK(to_string(parse_method(m)) == m);
  CHECK_THROWS_AS(parse_method("ransac"), std::invalid_argument);

  RunSpec spec;
  spec.scenario_ref = "static_room";
  spec.out_dir = scratch("noseeds");
  CHECK_THROWS_AS(run(spec), std::invalid_argument);
  fs::remove_all(spec.out_dir);
}
