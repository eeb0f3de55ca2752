#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace lidar_reflect::stats {

// Median of the values (mean of the middle pair for even counts). Reorders
// the input. Empty input yields NaN.
double median_inplace(std::span<double> values);

struct RobustSummary {
  double median = 0.0;
  double mad = 0.0;
  double mean = 0.0;
  double variance = 0.0;  // population
  std::size_t retained = 0;
};

// Median plus mean/variance over samples within 3 raw median absolute
// deviations of the median.
RobustSummary robust_summary(std::vector<double> values);

// Empirical quantile with linear interpolation between order statistics
// (numpy's default). `sorted` must be ascending and non-empty.
double quantile_sorted(std::span<const double> sorted, double level);

}  // namespace lidar_reflect::stats
