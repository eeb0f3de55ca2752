#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lidar_reflect/core.hpp"
#include "lidar_reflect/pipeline_config.hpp"

namespace lidar_reflect {

inline constexpr std::size_t kDefaultQuantiles = 33;

// Per-range-bin quantile correspondence between two sensors' intensities.
// Quantile levels are uniform on [0, 1].
struct CrossSensorMap {
  std::vector<double> range_bin_edges;  // bin_count() + 1 ascending edges
  std::vector<std::vector<double>> source_quantiles;
  std::vector<std::vector<double>> target_quantiles;
  std::string source_name = "source";
  std::string target_name = "target";

  std::size_t bin_count() const noexcept { return source_quantiles.size(); }
  std::size_t quantile_count() const noexcept { return source_quantiles.empty() ? 0 : source_quantiles[0].size(); }
  // Ranges outside the edges clamp to the first/last bin.
  std::size_t bin_for(double range) const;
  // Piecewise-linear from source to target quantiles. Beyond the end knots
  // the intensity is scaled by that knot's target/source ratio.
  double map(double intensity, double range) const;
  // Throws Error(MalformedTable) on shape or monotonicity violations.
  void check() const;
};

struct CrossFitOptions {
  std::size_t quantiles = kDefaultQuantiles;
  std::string source_name = "source";
  std::string target_name = "target";
};

// Bins of width 4 * eta_bin_width from 0 to the largest range both datasets
// reach. Bins short of min_bin_samples on either side copy the nearest
// populated bin. Throws InsufficientData when no bin is populated on both sides.
CrossSensorMap fit_cross_map(std::span<const LabeledScan> source, std::span<const LabeledScan> target,
                             const PipelineConfig& config, const CrossFitOptions& options = {});

// Geometry is copied bit for bit; only intensities change.
RawScan apply_cross_map(const RawScan& scan, const CrossSensorMap& map);

// Tabular text, one row per (bin, quantile level):
// `bin,range_lo_m,range_hi_m,level,source,target`, names in `#` comment lines.
void write_cross_map(const CrossSensorMap& map, const std::filesystem::path& path);
CrossSensorMap read_cross_map(const std::filesystem::path& path);

}  // namespace lidar_reflect
