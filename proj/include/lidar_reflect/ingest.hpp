#pragma once

#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "lidar_reflect/calibration.hpp"
#include "lidar_reflect/core.hpp"
#include "lidar_reflect/pipeline_config.hpp"

namespace lidar_reflect {

namespace fs = std::filesystem;

// Scan files (*.bin): little-endian float32 quadruplets x, y, z, intensity.
RawScan read_scan(const fs::path& path);
void write_scan(const RawScan& scan, const fs::path& path);
// The intensity slot carries the calibrated reflectivity.
void write_scan(const ReflectivityScan& scan, const fs::path& path);

// Label files (*.label): little-endian uint32 per point, class in the low 16
// bits, instance id in the high 16 bits (discarded).
std::vector<ClassId> read_labels(const fs::path& path);
void write_labels(std::span<const ClassId> labels, const fs::path& path);

// Reads both files and checks lengths; LengthMismatch names the label file.
LabeledScan read_labeled_scan(const fs::path& scan_path, const fs::path& label_path);

// Sensor and pipeline configuration are JSON objects with exactly the
// fields of the corresponding type.
SensorModel parse_sensor_config(std::string_view text);
SensorModel read_sensor_config(const fs::path& path);
PipelineConfig parse_pipeline_config(std::string_view text);
PipelineConfig read_pipeline_config(const fs::path& path);

// Header `bin_center_m,eta,sample_count`, preceded by a
// `# near_range_threshold_m=<value>` comment line.
void write_eta_table(const EtaTable& table, const fs::path& path);
EtaTable read_eta_table(const fs::path& path);

// Header `class_id,count,centroid,mean,variance`.
void write_class_stats(const ClassReflectivity& stats, const fs::path& path);
ClassReflectivity read_class_stats(const fs::path& path);

// Shortest round-trip decimal representation.
std::string format_double(double value);

// Sorted list of regular files under `dir` with the given extension.
std::vector<fs::path> list_files(const fs::path& dir, std::string_view extension);

}  // namespace lidar_reflect
