#pragma once

#include <cstddef>
#include <string_view>

namespace lidar_reflect {

enum class NormalMethod { image_grid, knn_pca };

std::string_view to_string(NormalMethod method);

struct PipelineConfig {
  // Beyond this range the near-range factor is taken as 1 (meters).
  double near_range_threshold = 12.0;
  // Cosine floor: sample filter for estimation and clamp for calibration.
  double cos_floor = 0.1;
  double eta_bin_width = 0.25;
  std::size_t min_bin_samples = 100;
  NormalMethod normal_method = NormalMethod::image_grid;
  std::size_t knn_k = 16;
  double reflectivity_percentile = 0.99;

  // Throws Error(InvalidValue) when an invariant is violated.
  void check() const;
};

}  // namespace lidar_reflect
