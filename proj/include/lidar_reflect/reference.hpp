#pragma once

// Straightforward single-threaded versions of the hot kernels. They define
// the expected output of the parallel kernels in tests and serve as the
// baseline in the benchmark.

#include <optional>
#include <span>

#include "lidar_reflect/calibration.hpp"
#include "lidar_reflect/core.hpp"
#include "lidar_reflect/geometry.hpp"

namespace lidar_reflect::reference {

RangeImage spherical_project(const RawScan& scan, const SensorModel& sensor,
                             std::optional<std::span<const float>> reflectivity = std::nullopt);

NormalField compute_normals_image_grid(const RawScan& scan, const SensorModel& sensor);

ReflectivityScan calibrate_scan(const RawScan& scan, const NormalField& normals, const EtaModel& eta,
                                const PipelineConfig& config);

}  // namespace lidar_reflect::reference
