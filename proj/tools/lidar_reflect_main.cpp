#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>

#include "lidar_reflect/commands.hpp"
#include "lidar_reflect/error.hpp"
#include "lidar_reflect/geometry.hpp"

namespace fs = std::filesystem;
using namespace lidar_reflect;

namespace {

// CLI11 cannot bind std::optional<fs::path> directly.
struct OptPath {
  std::string value;
  std::optional<fs::path> get() const { return value.empty() ? std::nullopt : std::optional<fs::path>(value); }
};

}  // namespace

int main(int argc, char** argv) {
  cli::init_logging();
  CLI::App app{"LiDAR intensity to reflectivity calibration toolkit"};
  app.require_subcommand(1);

  int workers = 0;
  auto add_workers = [&](CLI::App* sub) {
    sub->add_option("--workers", workers, "Worker threads (0: hardware parallelism)")->check(CLI::NonNegativeNumber);
  };

  // estimate-eta
  cli::EstimateEtaOptions est;
  OptPath est_pipeline;
  auto* estimate = app.add_subcommand("estimate-eta", "Estimate the near-range factor table from labeled scans");
  estimate->add_option("--scans", est.scans, "Directory of *.bin scans")->required();
  estimate->add_option("--labels", est.labels, "Directory of *.label files")->required();
  estimate->add_option("--sensor-config", est.sensor_config)->required();
  estimate->add_option("--pipeline-config", est_pipeline.value);
  estimate->add_option("--out", est.out)->required();
  add_workers(estimate);

  // calibrate
  cli::CalibrateOptions cal;
  OptPath cal_pipeline;
  auto* calibrate = app.add_subcommand("calibrate", "Convert intensity to reflectivity");
  calibrate->add_option("--scans", cal.scans, "Directory of *.bin scans")->required();
  calibrate->add_option("--eta", cal.eta, "eta table (*.csv) or parameters (*.json)")->required();
  calibrate->add_option("--sensor-config", cal.sensor_config)->required();
  calibrate->add_option("--pipeline-config", cal_pipeline.value);
  calibrate->add_option("--out", cal.out)->required();
  add_workers(calibrate);

  // project
  cli::ProjectOptions proj;
  OptPath proj_refl;
  std::string layout = "rxyzi";
  auto* project = app.add_subcommand("project", "Spherical projection to PNGs and a channel tensor");
  project->add_option("--scans,--scan", proj.scan, "Scan file (*.bin)")->required();
  project->add_option("--reflectivity", proj_refl.value, "Calibrated scan aligned with --scan");
  project->add_option("--sensor-config", proj.sensor_config)->required();
  project->add_option("--layout", layout)->check(CLI::IsMember({"rxyzi", "rxyzn", "rxyzirn"}));
  project->add_option("--out", proj.out)->required();

  // cross-fit
  cli::CrossFitOptionsCli cfit;
  OptPath cfit_pipeline, cfit_target_sensor;
  auto* cross_fit = app.add_subcommand("cross-fit", "Fit a cross-sensor intensity map");
  cross_fit->add_option("--scans", cfit.scans, "Source scans")->required();
  cross_fit->add_option("--labels", cfit.labels, "Source labels")->required();
  cross_fit->add_option("--target-scans", cfit.target_scans)->required();
  cross_fit->add_option("--target-labels", cfit.target_labels)->required();
  cross_fit->add_option("--sensor-config", cfit.sensor_config)->required();
  cross_fit->add_option("--target-sensor-config", cfit_target_sensor.value);
  cross_fit->add_option("--pipeline-config", cfit_pipeline.value);
  cross_fit->add_option("--source-name", cfit.source_name);
  cross_fit->add_option("--target-name", cfit.target_name);
  cross_fit->add_option("--out", cfit.out)->required();
  add_workers(cross_fit);

  // cross-apply
  cli::CrossApplyOptions capply;
  auto* cross_apply = app.add_subcommand("cross-apply", "Map scans into the target sensor's intensity domain");
  cross_apply->add_option("--scans", capply.scans)->required();
  cross_apply->add_option("--map", capply.map)->required();
  cross_apply->add_option("--out", capply.out)->required();
  add_workers(cross_apply);

  // bench
  cli::BenchOptions bench_opt;
  OptPath bench_scan, bench_scene, bench_sensor, bench_pipeline, bench_eta, bench_out;
  int bench_workers = 1;
  auto* bench = app.add_subcommand("bench", "Per-stage latency of the single-scan pipeline");
  bench->add_option("--scans,--scan", bench_scan.value, "Scan file (*.bin)");
  bench->add_option("--scene", bench_scene.value, "Scene spec to synthesize the scan from");
  bench->add_option("--sensor-config", bench_sensor.value);
  bench->add_option("--pipeline-config", bench_pipeline.value);
  bench->add_option("--eta", bench_eta.value);
  bench->add_option("--iterations", bench_opt.iterations)->check(CLI::PositiveNumber);
  bench->add_option("--workers", bench_workers)->check(CLI::PositiveNumber);
  bench->add_option("--out", bench_out.value);

  // synth
  cli::SynthOptions syn;
  std::optional<std::uint64_t> synth_seed;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled dataset with ground truth");
  synth->add_option("--scene", syn.scene)->required();
  synth->add_option("--count", syn.count)->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed);
  synth->add_option("--out", syn.out)->required();
  add_workers(synth);

  CLI11_PARSE(app, argc, argv);

  try {
    cli::CommandResult result;
    if (*estimate) {
      est.pipeline_config = est_pipeline.get();
      est.workers = workers;
      result = cli::cmd_estimate_eta(est);
    } else if (*calibrate) {
      cal.pipeline_config = cal_pipeline.get();
      cal.workers = workers;
      result = cli::cmd_calibrate(cal);
    } else if (*project) {
      proj.reflectivity = proj_refl.get();
      proj.layout = parse_layout(layout);
      result = cli::cmd_project(proj);
    } else if (*cross_fit) {
      cfit.pipeline_config = cfit_pipeline.get();
      cfit.target_sensor_config = cfit_target_sensor.get();
      cfit.workers = workers;
      result = cli::cmd_cross_fit(cfit);
    } else if (*cross_apply) {
      capply.workers = workers;
      result = cli::cmd_cross_apply(capply);
    } else if (*bench) {
      bench_opt.scan = bench_scan.get();
      bench_opt.scene = bench_scene.get();
      bench_opt.sensor_config = bench_sensor.get();
      bench_opt.pipeline_config = bench_pipeline.get();
      bench_opt.eta = bench_eta.get();
      bench_opt.out = bench_out.get();
      bench_opt.workers = bench_workers;
      result = cli::cmd_bench(bench_opt);
    } else if (*synth) {
      syn.seed = synth_seed;
      syn.workers = workers;
      result = cli::cmd_synth(syn);
    }
    return result.exit_code;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
