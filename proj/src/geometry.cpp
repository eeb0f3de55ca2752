#include "lidar_reflect/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "lidar_reflect/error.hpp"

namespace lidar_reflect {

std::string_view to_string(Channel channel) {
  switch (channel) {
    case Channel::range: return "range";
    case Channel::x: return "x";
    case Channel::y: return "y";
    case Channel::z: return "z";
    case Channel::intensity: return "intensity";
    case Channel::reflectivity: return "reflectivity";
  }
  return "unknown";
}

std::string_view to_string(Layout layout) {
  switch (layout) {
    case Layout::rxyzi: return "rxyzi";
    case Layout::rxyzn: return "rxyzn";
    case Layout::rxyzirn: return "rxyzirn";
  }
  return "unknown";
}

Layout parse_layout(std::string_view name) {
  if (name == "rxyzi") return Layout::rxyzi;
  if (name == "rxyzn") return Layout::rxyzn;
  if (name == "rxyzirn") return Layout::rxyzirn;
  throw Error(ErrorCode::InvalidValue, "unknown layout '" + std::string(name) + "'");
}

std::vector<Channel> layout_channels(Layout layout) {
  using enum Channel;
  switch (layout) {
    case Layout::rxyzi: return {range, x, y, z, intensity};
    case Layout::rxyzn: return {range, x, y, z, reflectivity};
    case Layout::rxyzirn: return {range, x, y, z, intensity, reflectivity};
  }
  return {};
}

RangeImage::RangeImage(int rows, int cols, std::vector<Channel> channels)
    : rows_(rows),
      cols_(cols),
      channels_(std::move(channels)),
      data_(static_cast<std::size_t>(rows) * cols * channels_.size(), 0.0f),
      valid_(static_cast<std::size_t>(rows) * cols, 0),
      point_index_(static_cast<std::size_t>(rows) * cols, -1) {}

bool RangeImage::has(Channel channel) const noexcept {
  return std::find(channels_.begin(), channels_.end(), channel) != channels_.end();
}

std::size_t RangeImage::channel_index(Channel channel) const {
  const auto it = std::find(channels_.begin(), channels_.end(), channel);
  if (it == channels_.end())
    throw Error(ErrorCode::MissingChannel, "range image has no '" + std::string(to_string(channel)) + "' channel");
  return static_cast<std::size_t>(it - channels_.begin());
}

std::optional<PixelCoord> project_point(double x, double y, double z, const SensorModel& sensor) {
  const double r = std::sqrt(x * x + y * y + z * z);
  if (!(r > 0.0) || !std::isfinite(r)) return std::nullopt;
  const double yaw = std::atan2(y, x);
  const double pitch = std::asin(std::clamp(z / r, -1.0, 1.0));
  if (!(pitch >= sensor.fov_down && pitch <= sensor.fov_up)) return std::nullopt;

  const double u = std::floor((0.5 - yaw / (2.0 * std::numbers::pi)) * sensor.cols);
  int col = static_cast<int>(u) % sensor.cols;
  if (col < 0) col += sensor.cols;
  const double v = std::floor((1.0 - (pitch - sensor.fov_down) / (sensor.fov_up - sensor.fov_down)) * sensor.rows);
  const int row = std::clamp(static_cast<int>(v), 0, sensor.rows - 1);
  return PixelCoord{row, col};
}

RangeImage spherical_project(const RawScan& scan, const SensorModel& sensor,
                             std::optional<std::span<const float>> reflectivity) {
  return project_scan(scan, sensor, reflectivity).image;
}

ScanProjection project_scan(const RawScan& scan, const SensorModel& sensor,
                            std::optional<std::span<const float>> reflectivity) {
  scan.check();
  if (reflectivity && reflectivity->size() != scan.size())
    throw Error(ErrorCode::LengthMismatch, "reflectivity length differs from point count");

  std::vector<Channel> channels{Channel::range, Channel::x, Channel::y, Channel::z, Channel::intensity};
  if (reflectivity) channels.push_back(Channel::reflectivity);
  RangeImage image(sensor.rows, sensor.cols, std::move(channels));

  const auto n = static_cast<std::int64_t>(scan.size());
  std::vector<std::int64_t> pixel_of(scan.size(), -1);
  std::vector<double> range_of(scan.size(), 0.0);

#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const double x = scan.x[i], y = scan.y[i], z = scan.z[i];
    if (const auto px = project_point(x, y, z, sensor)) {
      pixel_of[i] = static_cast<std::int64_t>(image.pixel(px->row, px->col));
      range_of[i] = std::sqrt(x * x + y * y + z * z);
    }
  }

  // Winner selection is a cheap serial pass; strict comparison keeps the
  // lower index on ties.
  auto& winner = image.point_index();
  for (std::int64_t i = 0; i < n; ++i) {
    const auto p = pixel_of[i];
    if (p < 0) continue;
    const auto w = winner[p];
    if (w < 0 || range_of[i] < range_of[w]) winner[p] = static_cast<std::int32_t>(i);
  }

  const auto pixels = static_cast<std::int64_t>(image.pixel_count());
  const bool with_reflectivity = reflectivity.has_value();
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < pixels; ++p) {
    const auto w = winner[p];
    if (w < 0) continue;
    image.valid()[p] = 1;
    image.at(p, 0) = static_cast<float>(range_of[w]);
    image.at(p, 1) = scan.x[w];
    image.at(p, 2) = scan.y[w];
    image.at(p, 3) = scan.z[w];
    image.at(p, 4) = scan.intensity[w];
    if (with_reflectivity) image.at(p, 5) = (*reflectivity)[w];
  }
  return {std::move(image), std::move(pixel_of), std::move(range_of)};
}

ChannelTensor assemble_channels(const RangeImage& image, Layout layout) {
  ChannelTensor tensor;
  tensor.rows = image.rows();
  tensor.cols = image.cols();
  tensor.channels = layout_channels(layout);
  std::vector<std::size_t> source;
  source.reserve(tensor.channels.size());
  for (const auto ch : tensor.channels) source.push_back(image.channel_index(ch));

  const std::size_t c_out = tensor.channels.size();
  tensor.data.assign(image.pixel_count() * c_out, 0.0f);
  for (std::size_t p = 0; p < image.pixel_count(); ++p) {
    if (!image.valid()[p]) continue;
    for (std::size_t c = 0; c < c_out; ++c) tensor.data[p * c_out + c] = image.at(p, source[c]);
  }
  return tensor;
}

double angle_of_incidence(const Eigen::Vector3d& point, const Eigen::Vector3d& normal,
                          const Eigen::Vector3d& origin) {
  const Eigen::Vector3d to_sensor = origin - point;
  const double len = to_sensor.norm();
  if (!(len > 0.0)) throw Error(ErrorCode::DegeneratePoint, "point coincides with the beam origin");
  return std::clamp(std::abs(normal.dot(to_sensor) / len), 0.0, 1.0);
}

NormalField compute_normals(const RawScan& scan, const SensorModel& sensor, const PipelineConfig& config) {
  switch (config.normal_method) {
    case NormalMethod::image_grid: return compute_normals_image_grid(scan, sensor);
    case NormalMethod::knn_pca: return compute_normals_knn(scan, sensor, config.knn_k);
  }
  return NormalField::invalid(scan.size());
}

}  // namespace lidar_reflect
