#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace lidar_reflect {

// Semantic class identifier. 0 means unlabeled and is skipped by all statistics.
using ClassId = std::uint16_t;
inline constexpr ClassId kIgnoreClass = 0;

struct SensorModel {
  std::string name;
  int rows = 64;
  int cols = 2048;
  double fov_up = 0.0;    // radians
  double fov_down = 0.0;  // radians, negative below the horizon
  double max_range = 120.0;
  double intensity_max = 65535.0;
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();

  // Throws Error(InvalidValue) when an invariant is violated.
  void check() const;
};

// One LiDAR revolution as structure-of-arrays. Range is never stored; it is
// always the Euclidean norm of (x, y, z).
struct RawScan {
  std::vector<float> x;
  std::vector<float> y;
  std::vector<float> z;
  std::vector<float> intensity;

  std::size_t size() const noexcept { return x.size(); }
  bool empty() const noexcept { return x.empty(); }

  double range(std::size_t i) const noexcept {
    const double px = x[i], py = y[i], pz = z[i];
    return std::sqrt(px * px + py * py + pz * pz);
  }
  Eigen::Vector3d point(std::size_t i) const noexcept { return {x[i], y[i], z[i]}; }

  void reserve(std::size_t n);
  void push_back(float px, float py, float pz, float value);
  void pop_back();

  // Throws Error(LengthMismatch) unless all four arrays have equal length.
  void check() const;

  bool operator==(const RawScan&) const = default;
};

struct LabeledScan {
  RawScan scan;
  std::vector<ClassId> labels;

  // Throws Error(LengthMismatch) when labels and points disagree.
  void check() const;
};

struct ReflectivityScan {
  RawScan scan;
  std::vector<float> reflectivity;
  std::vector<std::uint8_t> valid;
};

struct NormalField {
  std::vector<Eigen::Vector3f> normals;
  std::vector<double> cos_incidence;
  std::vector<std::uint8_t> valid;

  std::size_t size() const noexcept { return normals.size(); }
  static NormalField invalid(std::size_t n);
};

// Indices of points that survive validation, in input order.
std::vector<std::size_t> valid_point_indices(const RawScan& scan, const SensorModel& sensor);

// Drops points with non-finite coordinates, zero range or range beyond
// sensor.max_range. Survivors keep their relative order and exact bits.
RawScan validate_scan(const RawScan& scan, const SensorModel& sensor);

RawScan select_points(const RawScan& scan, std::span<const std::size_t> indices);

// Validation that keeps labels aligned with the surviving points.
LabeledScan validate_labeled(const LabeledScan& scan, const SensorModel& sensor);

}  // namespace lidar_reflect
