#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "lidar_reflect/core.hpp"
#include "lidar_reflect/pipeline_config.hpp"

namespace lidar_reflect {

enum class Channel : std::uint8_t { range, x, y, z, intensity, reflectivity };
std::string_view to_string(Channel channel);

enum class Layout { rxyzi, rxyzn, rxyzirn };
std::string_view to_string(Layout layout);
Layout parse_layout(std::string_view name);  // throws InvalidValue
std::vector<Channel> layout_channels(Layout layout);

// H x W spherical projection, channels interleaved per pixel (HWC).
class RangeImage {
 public:
  RangeImage(int rows, int cols, std::vector<Channel> channels);

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(rows_) * cols_; }
  const std::vector<Channel>& channels() const noexcept { return channels_; }
  bool has(Channel channel) const noexcept;
  // Throws Error(MissingChannel).
  std::size_t channel_index(Channel channel) const;

  std::size_t pixel(int row, int col) const noexcept { return static_cast<std::size_t>(row) * cols_ + col; }
  float at(std::size_t pixel, std::size_t channel) const noexcept { return data_[pixel * channels_.size() + channel]; }
  float& at(std::size_t pixel, std::size_t channel) noexcept { return data_[pixel * channels_.size() + channel]; }

  std::span<const float> data() const noexcept { return data_; }
  std::vector<std::uint8_t>& valid() noexcept { return valid_; }
  const std::vector<std::uint8_t>& valid() const noexcept { return valid_; }
  std::vector<std::int32_t>& point_index() noexcept { return point_index_; }
  const std::vector<std::int32_t>& point_index() const noexcept { return point_index_; }

 private:
  int rows_;
  int cols_;
  std::vector<Channel> channels_;
  std::vector<float> data_;
  std::vector<std::uint8_t> valid_;
  std::vector<std::int32_t> point_index_;
};

// Pixel a point falls into, or nullopt when its pitch is outside the field
// of view (or it sits at the origin).
struct PixelCoord {
  int row = 0;
  int col = 0;
};
std::optional<PixelCoord> project_point(double x, double y, double z, const SensorModel& sensor);

// Nearest point wins each pixel; range ties go to the lower point index.
// `reflectivity`, when given, adds a reflectivity channel aligned with the scan.
RangeImage spherical_project(const RawScan& scan, const SensorModel& sensor,
                             std::optional<std::span<const float>> reflectivity = std::nullopt);

// Projection plus the per-point bookkeeping normal estimation reuses.
struct ScanProjection {
  RangeImage image;
  std::vector<std::int64_t> pixel_of;  // -1 when outside the field of view
  std::vector<double> range_of;
};
ScanProjection project_scan(const RawScan& scan, const SensorModel& sensor,
                            std::optional<std::span<const float>> reflectivity = std::nullopt);

struct ChannelTensor {
  int rows = 0;
  int cols = 0;
  std::vector<Channel> channels;
  std::vector<float> data;  // rows x cols x channels, row-major
};

// Throws Error(MissingChannel) when the image lacks a channel the layout needs.
ChannelTensor assemble_channels(const RangeImage& image, Layout layout);

// |n . normalize(origin - point)| clamped to [0, 1]. Throws DegeneratePoint
// when point == origin.
double angle_of_incidence(const Eigen::Vector3d& point, const Eigen::Vector3d& normal,
                          const Eigen::Vector3d& origin);

NormalField compute_normals(const RawScan& scan, const SensorModel& sensor, const PipelineConfig& config);
NormalField compute_normals_image_grid(const RawScan& scan, const SensorModel& sensor);
NormalField compute_normals_knn(const RawScan& scan, const SensorModel& sensor, std::size_t k);

// Relative range jump beyond which an image neighbor is treated as a
// different surface.
inline constexpr double kDepthJumpRatio = 0.1;

// k-NN neighbors farther than max(kKnnMinRadius, kKnnRadiusRatio * range)
// from the query are not used for the plane fit.
inline constexpr double kKnnMinRadius = 0.5;
inline constexpr double kKnnRadiusRatio = 0.2;

}  // namespace lidar_reflect
