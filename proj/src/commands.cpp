#include "lidar_reflect/commands.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <json.hpp>
#include <sstream>

#include "binary_io.hpp"
#include "lidar_reflect/crosssensor.hpp"
#include "lidar_reflect/error.hpp"
#include "lidar_reflect/image_export.hpp"
#include "lidar_reflect/ingest.hpp"
#include "lidar_reflect/parallel.hpp"
#include "lidar_reflect/stats.hpp"
#include "lidar_reflect/synth.hpp"

namespace lidar_reflect::cli {

namespace {

using json = nlohmann::ordered_json;

class Stopwatch {
 public:
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

int resolve_workers(int workers) { return workers > 0 ? workers : parallel::hardware_threads(); }

std::string path_or_null(const std::optional<fs::path>& p) { return p ? p->string() : std::string(); }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(ErrorCode::FileUnwritable, "cannot create directory " + dir.string());
}

void ensure_distinct(const fs::path& in, const fs::path& out) {
  std::error_code ec;
  if (fs::exists(out) && fs::equivalent(in, out, ec))
    throw Error(ErrorCode::InvalidValue, "output directory must differ from the input directory");
}

PipelineConfig load_pipeline(const std::optional<fs::path>& path) {
  if (!path) return PipelineConfig{};
  return read_pipeline_config(*path);
}

// Runs `body`, then writes the manifest once, whether or not `body` threw.
template <class Body>
CommandResult run_command(const std::string& name, const fs::path& out, json header, Body&& body) {
  ensure_dir(out);
  CommandResult result;
  json manifest;
  manifest["command"] = name;
  for (auto& [key, value] : header.items()) manifest[key] = value;
  manifest["output_dir"] = out.string();

  auto finish = [&](const std::string* error) {
    result.exit_code = (result.failures.empty() && !error) ? 0 : 1;
    json timings = json::object();
    for (const auto& [stage, ms] : result.timings_ms) timings[stage] = std::max(ms, 0.0);
    manifest["timings_ms"] = timings;
    manifest["files_processed"] = result.processed;
    manifest["files_failed"] = result.failures.size();
    json failures = json::array();
    for (const auto& f : result.failures) failures.push_back({{"file", f.file}, {"error", f.error}});
    manifest["failures"] = failures;
    manifest["warnings"] = result.warnings;
    if (error) manifest["error"] = *error;
    manifest["exit_code"] = result.exit_code;
    detail::write_text(out / "manifest.json", manifest.dump(2) + "\n");
  };

  try {
    body(result);
  } catch (const std::exception& e) {
    const std::string message = e.what();
    finish(&message);
    throw;
  }
  finish(nullptr);
  return result;
}

Error with_file(const std::exception& e, const fs::path& file) {
  if (const auto* err = dynamic_cast<const Error*>(&e))
    return Error(err->code(), file.string() + ": " + err->detail());
  return Error(ErrorCode::FileUnreadable, file.string() + ": " + e.what());
}

// Runs fn(i) for every file with per-file error capture. Results merge in
// file order, so the outcome does not depend on scheduling.
template <class Fn>
std::vector<std::optional<std::string>> for_each_file(const std::vector<fs::path>& files, Fn&& fn) {
  std::vector<std::optional<std::string>> errors(files.size());
  const auto n = static_cast<std::int64_t>(files.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  return errors;
}

void isolate_failures(const std::vector<fs::path>& files, const std::vector<std::optional<std::string>>& errors,
                      CommandResult& result) {
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (errors[i]) {
      spdlog::error("{}: {}", files[i].string(), *errors[i]);
      result.failures.push_back({files[i].string(), *errors[i]});
    } else {
      ++result.processed;
    }
  }
}

// Loads every scan with its label file in parallel; the first failing file
// (in file order) aborts with its path in the message.
std::vector<LabeledScan> load_labeled_dir(const fs::path& scans_dir, const fs::path& labels_dir,
                                          const SensorModel& sensor) {
  const auto files = list_files(scans_dir, ".bin");
  if (files.empty()) throw Error(ErrorCode::InsufficientData, "no *.bin scans in " + scans_dir.string());
  std::vector<LabeledScan> scans(files.size());
  std::vector<std::optional<Error>> errors(files.size());
  const auto n = static_cast<std::int64_t>(files.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < n; ++i) {
    const fs::path label = labels_dir / (files[i].stem().string() + ".label");
    try {
      scans[i] = validate_labeled(read_labeled_scan(files[i], label), sensor);
    } catch (const std::exception& e) {
      errors[i] = with_file(e, files[i]);
    }
  }
  for (auto& e : errors)
    if (e) throw *e;
  return scans;
}

double percentile_of(std::vector<double> values, double level) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  return stats::quantile_sorted(values, level);
}

}  // namespace

void init_logging() {
  const char* env = std::getenv("LIDAR_REFLECT_LOG");
  if (!env || !*env) {
    spdlog::set_level(spdlog::level::info);
    return;
  }
  const auto level = spdlog::level::from_str(env);
  // from_str maps unknown names to off; only accept that for "off" itself.
  if (level == spdlog::level::off && std::string_view(env) != "off") {
    spdlog::set_level(spdlog::level::info);
    spdlog::warn("unknown LIDAR_REFLECT_LOG level '{}', using info", env);
    return;
  }
  spdlog::set_level(level);
}

EtaModel read_eta_model(const fs::path& path) {
  if (path.extension() != ".json") return read_eta_table(path);
  const auto text = detail::read_text(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedTable, path.string() + ": " + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::MalformedTable, path.string() + ": expected a JSON object");
  static const std::vector<std::string> allowed{"a", "d", "r_d", "D", "S", "objective", "grid_objective",
                                                "iterations"};
  for (const auto& [key, value] : doc.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw Error(ErrorCode::InvalidValue, path.string() + ": unknown field '" + key + "'");
  auto number = [&](const char* key) {
    if (!doc.contains(key)) throw Error(ErrorCode::MissingField, path.string() + ": missing '" + key + "'");
    if (!doc[key].is_number()) throw Error(ErrorCode::InvalidValue, path.string() + ": '" + key + "' must be a number");
    return doc[key].get<double>();
  };
  EtaParams params;
  if (doc.contains("a")) {
    params = EtaParams::from_lumped(number("a"), number("d"));
  } else {
    params.r_d = number("r_d");
    params.d = number("d");
    params.D = number("D");
    params.S = number("S");
  }
  params.check();
  return params;
}

void write_eta_params(const EtaFit& fit, const fs::path& path) {
  const auto p = fit.params();
  json doc{{"a", fit.a},       {"d", fit.d},
           {"r_d", p.r_d},     {"D", p.D},
           {"S", p.S},         {"objective", fit.objective},
           {"grid_objective", fit.grid_objective}, {"iterations", fit.iterations}};
  detail::write_text(path, doc.dump(2) + "\n");
}

CommandResult cmd_estimate_eta(const EstimateEtaOptions& options) {
  const int workers = resolve_workers(options.workers);
  json header{{"config_paths", {{"sensor", options.sensor_config.string()},
                                {"pipeline", path_or_null(options.pipeline_config)}}},
              {"inputs", {{"scans", (options.scans / "*.bin").string()},
                          {"labels", (options.labels / "*.label").string()}}},
              {"seed", nullptr},
              {"workers", workers}};
  return run_command("estimate-eta", options.out, header, [&](CommandResult& result) {
    parallel::ScopedThreads threads(workers);
    Stopwatch total;
    const auto sensor = read_sensor_config(options.sensor_config);
    const auto config = load_pipeline(options.pipeline_config);

    Stopwatch sw;
    const auto scans = load_labeled_dir(options.scans, options.labels, sensor);
    result.timings_ms["load_validate"] = sw.ms();
    result.processed = scans.size();

    sw = Stopwatch();
    std::vector<NormalField> normals(scans.size());
    const auto n = static_cast<std::int64_t>(scans.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (std::int64_t i = 0; i < n; ++i) normals[i] = compute_normals(scans[i].scan, sensor, config);
    result.timings_ms["normals"] = sw.ms();

    sw = Stopwatch();
    std::vector<ClassSample> samples;
    for (std::size_t i = 0; i < scans.size(); ++i) {
      const auto s = far_range_samples(scans[i], normals[i], config);
      samples.insert(samples.end(), s.begin(), s.end());
    }
    result.timings_ms["far_range_samples"] = sw.ms();

    sw = Stopwatch();
    const auto centroids = class_centroids(samples);
    result.timings_ms["centroids"] = sw.ms();

    sw = Stopwatch();
    const auto table = estimate_eta(scans, normals, centroids, config);
    result.timings_ms["estimate_eta"] = sw.ms();

    write_eta_table(table, options.out / "eta_table.csv");
    write_class_stats(centroids, options.out / "class_stats.csv");

    sw = Stopwatch();
    const auto params_path = options.out / "eta_params.json";
    try {
      write_eta_params(fit_eta_lumped(table), params_path);
    } catch (const Error& e) {
      // A stale parameter file from an earlier run would be misleading.
      std::error_code ec;
      fs::remove(params_path, ec);
      result.warnings.push_back(std::string("parametric fit skipped: ") + e.what());
      spdlog::warn("parametric fit skipped: {}", e.what());
    }
    result.timings_ms["fit"] = sw.ms();
    result.timings_ms["total"] = total.ms();
    spdlog::info("estimated eta from {} scans ({} classes)", scans.size(), centroids.classes.size());
  });
}

CommandResult cmd_calibrate(const CalibrateOptions& options) {
  const int workers = resolve_workers(options.workers);
  json header{{"config_paths", {{"sensor", options.sensor_config.string()},
                                {"pipeline", path_or_null(options.pipeline_config)},
                                {"eta", options.eta.string()}}},
              {"inputs", {{"scans", (options.scans / "*.bin").string()}}},
              {"seed", nullptr},
              {"workers", workers}};
  ensure_distinct(options.scans, options.out);
  return run_command("calibrate", options.out, header, [&](CommandResult& result) {
    parallel::ScopedThreads threads(workers);
    Stopwatch total;
    const auto sensor = read_sensor_config(options.sensor_config);
    const auto config = load_pipeline(options.pipeline_config);
    const auto eta = read_eta_model(options.eta);
    if (const auto* table = std::get_if<EtaTable>(&eta)) table->check();
    const auto files = list_files(options.scans, ".bin");
    if (files.empty()) {
      result.warnings.push_back("no *.bin scans in " + options.scans.string());
      spdlog::warn("no *.bin scans in {}", options.scans.string());
    }

    struct Row {
      std::size_t points = 0;
      std::size_t valid = 0;
      double percentile = 0.0;
    };
    std::vector<Row> rows(files.size());
    const auto errors = for_each_file(files, [&](std::size_t i) {
      const auto raw = read_scan(files[i]);
      const auto keep = valid_point_indices(raw, sensor);
      const auto subset = select_points(raw, keep);
      const auto normals = compute_normals(subset, sensor, config);
      const auto calibrated = calibrate_scan(subset, normals, eta, config);

      ReflectivityScan full;
      full.scan = raw;
      full.reflectivity.assign(raw.size(), 0.0f);
      full.valid.assign(raw.size(), 0);
      std::vector<double> values;
      for (std::size_t j = 0; j < keep.size(); ++j) {
        if (!calibrated.valid[j]) continue;
        full.reflectivity[keep[j]] = calibrated.reflectivity[j];
        full.valid[keep[j]] = 1;
        values.push_back(calibrated.reflectivity[j]);
      }
      write_scan(full, options.out / files[i].filename());
      rows[i] = {raw.size(), values.size(), percentile_of(std::move(values), config.reflectivity_percentile)};
    });
    isolate_failures(files, errors, result);

    std::ostringstream report;
    report << "# reflectivity_percentile=" << format_double(config.reflectivity_percentile) << '\n';
    report << "file,point_count,valid_count,reflectivity_at_percentile\n";
    for (std::size_t i = 0; i < files.size(); ++i) {
      if (errors[i]) continue;
      report << files[i].filename().string() << ',' << rows[i].points << ',' << rows[i].valid << ','
             << format_double(rows[i].percentile) << '\n';
    }
    detail::write_text(options.out / "calibration_report.csv", report.str());
    result.timings_ms["total"] = total.ms();
    spdlog::info("calibrated {} of {} scans", result.processed, files.size());
  });
}

CommandResult cmd_project(const ProjectOptions& options) {
  json header{{"config_paths", {{"sensor", options.sensor_config.string()}}},
              {"inputs", {{"scan", options.scan.string()}, {"reflectivity", path_or_null(options.reflectivity)}}},
              {"layout", std::string(to_string(options.layout))},
              {"seed", nullptr},
              {"workers", parallel::max_threads()}};
  return run_command("project", options.out, header, [&](CommandResult& result) {
    Stopwatch total;
    const auto sensor = read_sensor_config(options.sensor_config);
    const auto raw = read_scan(options.scan);
    std::optional<RawScan> refl_raw;
    if (options.reflectivity) {
      refl_raw = read_scan(*options.reflectivity);
      if (refl_raw->size() != raw.size())
        throw Error(ErrorCode::LengthMismatch,
                    options.reflectivity->string() + ": point count differs from " + options.scan.string());
    }
    const auto keep = valid_point_indices(raw, sensor);
    const auto scan = select_points(raw, keep);
    std::vector<float> reflectivity;
    if (refl_raw) {
      reflectivity.reserve(keep.size());
      for (const auto k : keep) reflectivity.push_back(refl_raw->intensity[k]);
    }

    Stopwatch sw;
    const auto image = refl_raw ? spherical_project(scan, sensor, std::span<const float>(reflectivity))
                                : spherical_project(scan, sensor);
    result.timings_ms["project"] = sw.ms();
    // Fails with MissingChannel before anything is written.
    const auto tensor = assemble_channels(image, options.layout);
    const std::string stem = options.scan.stem().string();
    write_channel_pngs(image, tensor.channels, options.out, stem);
    write_tensor(tensor, options.out / (stem + ".f32"), options.out / (stem + ".meta"));
    result.processed = 1;
    result.timings_ms["total"] = total.ms();
  });
}

CommandResult cmd_cross_fit(const CrossFitOptionsCli& options) {
  const int workers = resolve_workers(options.workers);
  json header{{"config_paths", {{"sensor", options.sensor_config.string()},
                                {"target_sensor", path_or_null(options.target_sensor_config)},
                                {"pipeline", path_or_null(options.pipeline_config)}}},
              {"inputs", {{"scans", (options.scans / "*.bin").string()},
                          {"labels", (options.labels / "*.label").string()},
                          {"target_scans", (options.target_scans / "*.bin").string()},
                          {"target_labels", (options.target_labels / "*.label").string()}}},
              {"seed", nullptr},
              {"workers", workers}};
  return run_command("cross-fit", options.out, header, [&](CommandResult& result) {
    parallel::ScopedThreads threads(workers);
    Stopwatch total;
    const auto sensor = read_sensor_config(options.sensor_config);
    const auto target_sensor =
        options.target_sensor_config ? read_sensor_config(*options.target_sensor_config) : sensor;
    const auto config = load_pipeline(options.pipeline_config);
    const auto source = load_labeled_dir(options.scans, options.labels, sensor);
    const auto target = load_labeled_dir(options.target_scans, options.target_labels, target_sensor);
    result.processed = source.size() + target.size();
    Stopwatch sw;
    CrossFitOptions fit_options;
    fit_options.source_name = options.source_name;
    fit_options.target_name = options.target_name;
    const auto map = fit_cross_map(source, target, config, fit_options);
    result.timings_ms["fit"] = sw.ms();
    write_cross_map(map, options.out / "cross_map.csv");
    result.timings_ms["total"] = total.ms();
  });
}

CommandResult cmd_cross_apply(const CrossApplyOptions& options) {
  const int workers = resolve_workers(options.workers);
  json header{{"config_paths", {{"map", options.map.string()}}},
              {"inputs", {{"scans", (options.scans / "*.bin").string()}}},
              {"seed", nullptr},
              {"workers", workers}};
  ensure_distinct(options.scans, options.out);
  return run_command("cross-apply", options.out, header, [&](CommandResult& result) {
    parallel::ScopedThreads threads(workers);
    Stopwatch total;
    const auto map = read_cross_map(options.map);
    const auto files = list_files(options.scans, ".bin");
    if (files.empty()) result.warnings.push_back("no *.bin scans in " + options.scans.string());
    const auto errors = for_each_file(files, [&](std::size_t i) {
      write_scan(apply_cross_map(read_scan(files[i]), map), options.out / files[i].filename());
    });
    isolate_failures(files, errors, result);
    result.timings_ms["total"] = total.ms();
  });
}

BenchReport run_bench(const BenchOptions& options) {
  if (options.iterations < 1) throw Error(ErrorCode::InvalidValue, "iterations must be at least 1");
  if (options.scan.has_value() == options.scene.has_value())
    throw Error(ErrorCode::InvalidValue, "bench needs exactly one of a scan file or a scene spec");
  const auto config = load_pipeline(options.pipeline_config);

  RawScan raw;
  SensorModel sensor;
  EtaModel eta = EtaTable{};
  if (options.scan) {
    if (!options.sensor_config) throw Error(ErrorCode::MissingField, "bench on a scan file needs a sensor config");
    sensor = read_sensor_config(*options.sensor_config);
    raw = read_scan(*options.scan);
  } else {
    const auto spec = read_scene_spec(*options.scene);
    raw = generate_scene(spec).labeled.scan;
    sensor = spec.sensor;
    // Synthetic points are emitted in the sensor frame.
    sensor.origin = Eigen::Vector3d::Zero();
    eta = spec.eta_params;
  }
  if (options.eta) eta = read_eta_model(*options.eta);

  parallel::ScopedThreads threads(options.workers);
  const char* names[] = {"validate", "normals", "calibrate", "project", "calibrate_path", "total"};
  std::map<std::string, std::vector<double>> samples;
  const int warmup = 3;
  for (int it = 0; it < warmup + options.iterations; ++it) {
    Stopwatch sw;
    const auto scan = validate_scan(raw, sensor);
    const double t_validate = sw.ms();
    const auto normals = compute_normals(scan, sensor, config);
    const double t_normals = sw.ms();
    const auto calibrated = calibrate_scan(scan, normals, eta, config);
    const double t_calibrate = sw.ms();
    const auto image = spherical_project(scan, sensor, std::span<const float>(calibrated.reflectivity));
    const double t_project = sw.ms();
    if (image.pixel_count() == 0) throw Error(ErrorCode::InvalidValue, "empty projection");
    if (it < warmup) continue;
    samples["validate"].push_back(t_validate);
    samples["normals"].push_back(t_normals - t_validate);
    samples["calibrate"].push_back(t_calibrate - t_normals);
    samples["project"].push_back(t_project - t_calibrate);
    samples["calibrate_path"].push_back(t_calibrate);
    samples["total"].push_back(t_project);
  }

  BenchReport report;
  report.point_count = raw.size();
  report.iterations = options.iterations;
  report.workers = options.workers;
  for (const char* name : names) {
    auto& v = samples[name];
    std::sort(v.begin(), v.end());
    report.stages[name] = {stats::quantile_sorted(v, 0.5), stats::quantile_sorted(v, 0.95)};
  }
  return report;
}

CommandResult cmd_bench(const BenchOptions& options, BenchReport* report_out) {
  auto report = run_bench(options);
  for (const auto& [name, t] : report.stages)
    spdlog::info("{:>15}: median {:8.3f} ms  p95 {:8.3f} ms", name, t.median_ms, t.p95_ms);
  if (report_out) *report_out = report;
  CommandResult result;
  for (const auto& [name, t] : report.stages) result.timings_ms[name + "_median"] = t.median_ms;
  if (!options.out) return result;

  json header{{"config_paths", {{"sensor", path_or_null(options.sensor_config)},
                                {"pipeline", path_or_null(options.pipeline_config)},
                                {"eta", path_or_null(options.eta)}}},
              {"inputs", {{"scan", path_or_null(options.scan)}, {"scene", path_or_null(options.scene)}}},
              {"seed", nullptr},
              {"workers", options.workers},
              {"iterations", options.iterations}};
  return run_command("bench", *options.out, header, [&](CommandResult& r) {
    json doc{{"point_count", report.point_count}, {"iterations", report.iterations}, {"workers", report.workers}};
    json stages = json::object();
    for (const auto& [name, t] : report.stages) {
      stages[name] = {{"median_ms", t.median_ms}, {"p95_ms", t.p95_ms}};
      r.timings_ms[name + "_median"] = t.median_ms;
    }
    doc["stages"] = stages;
    detail::write_text(*options.out / "bench_report.json", doc.dump(2) + "\n");
    r.processed = 1;
  });
}

CommandResult cmd_synth(const SynthOptions& options) {
  const int workers = resolve_workers(options.workers);
  const auto spec = read_scene_spec(options.scene);
  const std::uint64_t seed = options.seed.value_or(spec.seed);
  json header{{"config_paths", {{"scene", options.scene.string()}}},
              {"inputs", json::object()},
              {"count", options.count},
              {"seed", seed},
              {"workers", workers}};
  return run_command("synth", options.out, header, [&](CommandResult& result) {
    parallel::ScopedThreads threads(workers);
    Stopwatch total;
    for (const char* sub : {"scans", "labels", "truth"}) ensure_dir(options.out / sub);
    std::vector<fs::path> names(options.count);
    for (std::size_t k = 0; k < options.count; ++k) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%06zu", k);
      names[k] = buf;
    }
    const auto errors = for_each_file(names, [&](std::size_t k) {
      SceneSpec scene = spec;
      scene.seed = seed + k;
      const auto generated = generate_scene(scene);
      const std::string stem = names[k].string();
      write_scan(generated.labeled.scan, options.out / "scans" / (stem + ".bin"));
      write_labels(generated.labeled.labels, options.out / "labels" / (stem + ".label"));
      write_ground_truth(generated.truth, options.out / "truth" / (stem + ".truth"));
    });
    isolate_failures(names, errors, result);
    result.timings_ms["total"] = total.ms();
  });
}

}  // namespace lidar_reflect::cli
