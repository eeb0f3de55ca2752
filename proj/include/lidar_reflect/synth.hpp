#pragma once

#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "lidar_reflect/calibration.hpp"
#include "lidar_reflect/core.hpp"

namespace lidar_reflect {

struct Material {
  ClassId class_id = 1;
  double rho = 0.5;  // (0, 1]
};

// Infinite plane through `point` with unit `normal`.
struct Plane {
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  std::size_t material = 0;
};

struct Box {
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  Eigen::Vector3d max = Eigen::Vector3d::Ones();
  std::size_t material = 0;
};

using Surface = std::variant<Plane, Box>;

struct SceneSpec {
  std::vector<Material> materials;
  std::vector<Surface> surfaces;
  double emission_power = 1000.0;
  EtaParams eta_params;
  double noise_sigma = 0.0;  // relative, multiplicative
  SensorModel sensor;
  std::uint64_t seed = 0;
  // Returns hitting a surface beyond this incidence angle are dropped.
  double max_incidence = std::numbers::pi / 2.0;
  // Per-seed uniform horizontal offset of the sensor, +- this many meters.
  double origin_jitter = 0.0;

  void check() const;
};

struct GroundTruth {
  std::vector<double> true_rho;
  std::vector<double> true_cos_incidence;
  std::vector<double> true_eta;
  std::vector<double> true_range;

  std::size_t size() const noexcept { return true_range.size(); }
};

struct SyntheticScan {
  LabeledScan labeled;
  GroundTruth truth;
};

// I = eta(R) * I_e * rho * cos(alpha) / R^2 * (1 + eps), eps ~ N(0, sigma^2)
// truncated at +-3 sigma. The generator is only consumed when sigma > 0.
double forward_intensity(double rho, double range, double cos_alpha, const EtaParams& eta, double emission_power,
                         double noise_sigma, std::mt19937_64& rng);

// Casts one ray per (row, col) pixel center of spec.sensor. Points are
// emitted in the sensor frame. Throws EmptyScene when nothing is hit.
SyntheticScan generate_scene(const SceneSpec& spec);

SceneSpec parse_scene_spec(std::string_view text);
SceneSpec read_scene_spec(const std::filesystem::path& path);

// Ground-truth files (*.truth): little-endian float64 records
// (rho, cos_incidence, eta, range) per point.
void write_ground_truth(const GroundTruth& truth, const std::filesystem::path& path);
GroundTruth read_ground_truth(const std::filesystem::path& path);

// Direction of the ray through pixel (row, col) of the sensor grid.
Eigen::Vector3d pixel_direction(const SensorModel& sensor, int row, int col);

}  // namespace lidar_reflect
