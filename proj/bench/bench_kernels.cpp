// Parallel kernels against their serial references, plus the parallel trial
// loop of the agent simulation.

#include "sonoloc/agent.hpp"
#include "sonoloc/metrics.hpp"
#include "sonoloc/metrics_kernels.hpp"
#include "sonoloc/mlp.hpp"
#include "sonoloc/session.hpp"

#include <benchmark/benchmark.h>
#include <omp.h>

using namespace sonoloc;

namespace {

const ShapePool& bench_pool() {
  static const ShapePool pool = generate_pool(15, 7);
  return pool;
}

void BM_RasterizeSerial(benchmark::State& state) {
  const auto& ring = bench_pool().shapes.front().shape.vertices();
  RasterMask m(sheet_grid(150.0, 150.0 / static_cast<double>(state.range(0))));
  for (auto _ : state) {
    kernels::rasterize_serial(ring, m);
    benchmark::DoNotOptimize(m.bits.data());
  }
}

void BM_RasterizeParallel(benchmark::State& state) {
  const auto& ring = bench_pool().shapes.front().shape.vertices();
  RasterMask m(sheet_grid(150.0, 150.0 / static_cast<double>(state.range(0))));
  for (auto _ : state) {
    kernels::rasterize_parallel(ring, m);
    benchmark::DoNotOptimize(m.bits.data());
  }
}

std::pair<RasterMask, RasterMask> overlap_inputs(int side) {
  const GridSpec g = sheet_grid(150.0, 150.0 / side);
  return {rasterize(bench_pool().shapes[0].shape, g), rasterize(bench_pool().shapes[1].shape, g)};
}

void BM_OverlapSerial(benchmark::State& state) {
  const auto [a, b] = overlap_inputs(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(kernels::overlap_serial(a.bits, b.bits));
}

void BM_OverlapParallel(benchmark::State& state) {
  const auto [a, b] = overlap_inputs(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(kernels::overlap_parallel(a.bits, b.bits));
}

VoxelMask dilation_input(int n) {
  const double v = 0.5;
  return voxel_ball({n, n, n}, v, Point3::Constant(n * v / 2), n * v / 4);
}

void BM_DilateSerial(benchmark::State& state) {
  const VoxelMask m = dilation_input(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(kernels::dilate_serial(m, 4).bits.data());
}

void BM_DilateParallel(benchmark::State& state) {
  const VoxelMask m = dilation_input(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(kernels::dilate_parallel(m, 4).bits.data());
}

std::vector<Point2> probe_points(std::size_t n) {
  Rng rng(3);
  std::vector<Point2> pts(n);
  for (auto& p : pts) p = Point2(rng.uniform(0, 150), rng.uniform(0, 150));
  return pts;
}

void BM_SignedDistanceSerial(benchmark::State& state) {
  const auto pts = probe_points(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state)
    benchmark::DoNotOptimize(kernels::signed_distances_serial(bench_pool().shapes[0].shape, pts).data());
}

void BM_SignedDistanceParallel(benchmark::State& state) {
  const auto pts = probe_points(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state)
    benchmark::DoNotOptimize(kernels::signed_distances_parallel(bench_pool().shapes[0].shape, pts).data());
}

// Agent trials: threads = 1 is the serial baseline.
void BM_AgentTrials(benchmark::State& state) {
  AgentConfig cfg;
  cfg.noise_mm = 0.5;
  const int saved = omp_get_max_threads();
  omp_set_num_threads(static_cast<int>(state.range(0)));
  for (auto _ : state)
    benchmark::DoNotOptimize(simulate_session(bench_pool(), {}, cfg, 32, 11, "bench").trials.size());
  omp_set_num_threads(saved);
}

}  // namespace

BENCHMARK(BM_RasterizeSerial)->Arg(300)->Arg(1200)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_RasterizeParallel)->Arg(300)->Arg(1200)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_OverlapSerial)->Arg(300)->Arg(2400)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_OverlapParallel)->Arg(300)->Arg(2400)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_DilateSerial)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DilateParallel)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SignedDistanceSerial)->Arg(10000)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_SignedDistanceParallel)->Arg(10000)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_AgentTrials)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
