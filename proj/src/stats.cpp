#include "lidar_reflect/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lidar_reflect::stats {

double median_inplace(std::span<double> values) {
  const auto n = values.size();
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(values.begin(), mid, values.end());
  const double upper = *mid;
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), mid);
  return 0.5 * (lower + upper);
}

RobustSummary robust_summary(std::vector<double> values) {
  RobustSummary out;
  if (values.empty()) return out;

  std::vector<double> work = values;
  out.median = median_inplace(work);
  for (std::size_t i = 0; i < values.size(); ++i) work[i] = std::abs(values[i] - out.median);
  out.mad = median_inplace(work);

  const double limit = 3.0 * out.mad;
  // Two passes (mean, then centered squares) keep the variance exact for
  // constant inputs.
  double sum = 0.0;
  std::size_t kept = 0;
  for (const double v : values) {
    if (std::abs(v - out.median) <= limit) {
      sum += v;
      ++kept;
    }
  }
  out.retained = kept;
  out.mean = sum / static_cast<double>(kept);
  double sq = 0.0;
  for (const double v : values) {
    if (std::abs(v - out.median) <= limit) {
      const double dv = v - out.mean;
      sq += dv * dv;
    }
  }
  out.variance = sq / static_cast<double>(kept);
  return out;
}

double quantile_sorted(std::span<const double> sorted, double level) {
  const auto n = sorted.size();
  if (n == 1) return sorted[0];
  const double pos = std::clamp(level, 0.0, 1.0) * static_cast<double>(n - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, n - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace lidar_reflect::stats
