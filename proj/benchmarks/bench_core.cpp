#include <benchmark/benchmark.h>

#include "dynvio/atls_kernel.hpp"
#include "dynvio/harness.hpp"
#include "dynvio/imu_preint.hpp"
#include "dynvio/scenario.hpp"

namespace {

using namespace dynvio;

void BM_WeightUpdate(benchmark::State& state) {
  const atls::AtlsShape shape = atls::build_shape(10.0, 2.5);
  double r = 0.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(atls::weight_update(shape, r));
    r = r > 12.0 ? 0.0 : r + 0.01;
  }
}
BENCHMARK(BM_WeightUpdate);

void BM_Integrate(benchmark::State& state) {
  std::vector<ImuSample> samples;
  for (int i = 0; i <= state.range(0); ++i) {
    const double t = i / 200.0;
    samples.push_back({t, Vec3(0.1 * std::sin(t), 0.2, 9.81), Vec3(0.01, 0.3 * std::cos(t), 0.02)});
  }
  const ImuNoiseParams noise;
  for (auto _ : state) benchmark::DoNotOptimize(integrate(samples, Vec3::Zero(), Vec3::Zero(), noise));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Integrate)->Arg(10)->Arg(200);

// Full run over a short scenario; per-frame time follows from items/s.
void BM_EstimatorRun(benchmark::State& state) {
  Scenario s = preset("occlusion_high");
  s.duration = 4.0;
  const SimBundle b = generate(s);
  RunOptions opt;
  opt.max_features = static_cast<int>(state.range(0));
  const Method method = state.range(1) == 0 ? Method::kPlainLs : Method::kAtls;
  for (auto _ : state) benchmark::DoNotOptimize(run_estimator(s, b, method, opt));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(b.frames.size()));
  state.SetLabel(to_string(method));
}
BENCHMARK(BM_EstimatorRun)
    ->ArgsProduct({{100, 200, 400}, {0, 1}})
    ->Unit(benchmark::kMillisecond)
    ->Iterations(1);

}  // namespace

BENCHMARK_MAIN();
