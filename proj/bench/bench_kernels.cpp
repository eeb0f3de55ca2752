// Serial reference kernels against their OpenMP counterparts on a synthetic
// 64 x 2048 scan. Thread count for the parallel variants comes from the
// benchmark argument.
#include <benchmark/benchmark.h>
#include <omp.h>

#include "lidar_reflect/calibration.hpp"
#include "lidar_reflect/geometry.hpp"
#include "lidar_reflect/reference.hpp"
#include "lidar_reflect/synth.hpp"

using namespace lidar_reflect;

namespace {

struct Fixture {
  SceneSpec spec;
  SensorModel sensor;
  RawScan scan;
  NormalField normals;
  std::vector<float> reflectivity;

  Fixture() {
    spec = read_scene_spec(LIDAR_REFLECT_CONFIG_DIR "/scene_boxes_2048.json");
    spec.noise_sigma = 0.05;
    sensor = spec.sensor;
    sensor.origin.setZero();
    scan = generate_scene(spec).labeled.scan;
    normals = compute_normals_image_grid(scan, sensor);
    reflectivity = calibrate_scan(scan, normals, spec.eta_params, PipelineConfig{}).reflectivity;
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void set_threads(benchmark::State& state) { omp_set_num_threads(static_cast<int>(state.range(0))); }

void BM_project_reference(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(reference::spherical_project(f.scan, f.sensor, f.reflectivity));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.scan.size()));
}

void BM_project_parallel(benchmark::State& state) {
  const auto& f = fixture();
  set_threads(state);
  for (auto _ : state) benchmark::DoNotOptimize(spherical_project(f.scan, f.sensor, f.reflectivity));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.scan.size()));
}

void BM_normals_reference(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(reference::compute_normals_image_grid(f.scan, f.sensor));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.scan.size()));
}

void BM_normals_parallel(benchmark::State& state) {
  const auto& f = fixture();
  set_threads(state);
  for (auto _ : state) benchmark::DoNotOptimize(compute_normals_image_grid(f.scan, f.sensor));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.scan.size()));
}

void BM_calibrate_reference(benchmark::State& state) {
  const auto& f = fixture();
  const PipelineConfig config;
  for (auto _ : state) benchmark::DoNotOptimize(reference::calibrate_scan(f.scan, f.normals, f.spec.eta_params, config));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.scan.size()));
}

void BM_calibrate_parallel(benchmark::State& state) {
  const auto& f = fixture();
  const PipelineConfig config;
  set_threads(state);
  for (auto _ : state) benchmark::DoNotOptimize(calibrate_scan(f.scan, f.normals, f.spec.eta_params, config));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.scan.size()));
}

void BM_synth_parallel(benchmark::State& state) {
  const auto& f = fixture();
  set_threads(state);
  for (auto _ : state) benchmark::DoNotOptimize(generate_scene(f.spec));
}

void thread_args(benchmark::internal::Benchmark* b) {
  const int hw = omp_get_num_procs();
  for (int t = 1; t <= std::max(hw, 1); t *= 2) b->Arg(t);
  if (hw > 1 && (hw & (hw - 1)) != 0) b->Arg(hw);
}

}  // namespace

BENCHMARK(BM_project_reference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_project_parallel)->Apply(thread_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_normals_reference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_normals_parallel)->Apply(thread_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_calibrate_reference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_calibrate_parallel)->Apply(thread_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_synth_parallel)->Apply(thread_args)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
