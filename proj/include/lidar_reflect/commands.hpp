#pragma once

// Batch commands behind the `lidar_reflect` executable. Each command writes
// `manifest.json` into its output directory exactly once and returns the
// process exit code: 0 when no file failed, 1 otherwise. Errors that stop a
// command outright (bad configuration, unreadable inputs it cannot skip) are
// thrown as Error after the manifest is written.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lidar_reflect/calibration.hpp"
#include "lidar_reflect/geometry.hpp"

namespace lidar_reflect::cli {

namespace fs = std::filesystem;

// Reads LIDAR_REFLECT_LOG (trace, debug, info, warn, error, critical, off).
void init_logging();

struct FileFailure {
  std::string file;
  std::string error;
};

struct CommandResult {
  int exit_code = 0;
  std::size_t processed = 0;
  std::vector<FileFailure> failures;
  std::vector<std::string> warnings;
  std::map<std::string, double> timings_ms;
};

struct EstimateEtaOptions {
  fs::path scans;
  fs::path labels;
  fs::path sensor_config;
  std::optional<fs::path> pipeline_config;
  fs::path out;
  int workers = 0;  // 0: hardware parallelism
};
// Writes eta_table.csv, class_stats.csv and, when the fit converges,
// eta_params.json.
CommandResult cmd_estimate_eta(const EstimateEtaOptions& options);

struct CalibrateOptions {
  fs::path scans;
  fs::path eta;  // *.csv table or *.json parameters
  fs::path sensor_config;
  std::optional<fs::path> pipeline_config;
  fs::path out;
  int workers = 0;
};
// One reflectivity scan per input under the same file name. Points dropped by
// validation or without a valid normal carry reflectivity 0. A per-file
// summary goes to calibration_report.csv.
CommandResult cmd_calibrate(const CalibrateOptions& options);

// Loads an eta model from a table (*.csv) or parameter file (*.json).
EtaModel read_eta_model(const fs::path& path);
void write_eta_params(const EtaFit& fit, const fs::path& path);

struct ProjectOptions {
  fs::path scan;
  std::optional<fs::path> reflectivity;
  fs::path sensor_config;
  Layout layout = Layout::rxyzi;
  fs::path out;
};
// <stem>_<channel>.png per layout channel, <stem>_scales.txt, <stem>.f32 and
// <stem>.meta.
CommandResult cmd_project(const ProjectOptions& options);

struct CrossFitOptionsCli {
  fs::path scans;
  fs::path labels;
  fs::path target_scans;
  fs::path target_labels;
  fs::path sensor_config;
  std::optional<fs::path> target_sensor_config;
  std::optional<fs::path> pipeline_config;
  std::string source_name = "source";
  std::string target_name = "target";
  fs::path out;
  int workers = 0;
};
// Writes cross_map.csv.
CommandResult cmd_cross_fit(const CrossFitOptionsCli& options);

struct CrossApplyOptions {
  fs::path scans;
  fs::path map;
  fs::path out;
  int workers = 0;
};
CommandResult cmd_cross_apply(const CrossApplyOptions& options);

struct BenchOptions {
  std::optional<fs::path> scan;
  std::optional<fs::path> scene;
  std::optional<fs::path> sensor_config;  // required with `scan`
  std::optional<fs::path> pipeline_config;
  std::optional<fs::path> eta;
  int iterations = 50;
  int workers = 1;
  std::optional<fs::path> out;
};

struct StageTiming {
  double median_ms = 0.0;
  double p95_ms = 0.0;
};

struct BenchReport {
  std::size_t point_count = 0;
  int iterations = 0;
  int workers = 1;
  // validate, normals, calibrate, project, calibrate_path (validate + normals
  // + calibrate) and total (all four stages).
  std::map<std::string, StageTiming> stages;
};
// Three untimed warmup runs precede the timed iterations.
BenchReport run_bench(const BenchOptions& options);
// run_bench plus bench_report.json and the manifest when `out` is set.
CommandResult cmd_bench(const BenchOptions& options, BenchReport* report = nullptr);

struct SynthOptions {
  fs::path scene;
  std::size_t count = 1;
  std::optional<std::uint64_t> seed;  // overrides the scene's seed
  fs::path out;
  int workers = 0;
};
// scans/NNNNNN.bin, labels/NNNNNN.label and truth/NNNNNN.truth; scan k uses
// seed + k.
CommandResult cmd_synth(const SynthOptions& options);

}  // namespace lidar_reflect::cli
