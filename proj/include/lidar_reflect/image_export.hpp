#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lidar_reflect/geometry.hpp"

namespace lidar_reflect {

struct ChannelScale {
  Channel channel = Channel::range;
  double min = 0.0;
  double max = 0.0;
};

// Writes one 16-bit grayscale PNG per listed channel (`<stem>_<channel>.png`).
// Valid pixels map [min, max] linearly onto [0, 65535]; invalid pixels are 0.
// The per-channel min/max land in `<stem>_scales.txt`. Returns the scales.
std::vector<ChannelScale> write_channel_pngs(const RangeImage& image, std::span<const Channel> channels,
                                             const std::filesystem::path& dir, const std::string& stem);

void write_png16(const std::filesystem::path& path, int rows, int cols, const std::vector<std::uint16_t>& pixels);
std::vector<std::uint16_t> read_png16(const std::filesystem::path& path, int& rows, int& cols);

// Flat little-endian float32 tensor (rows x cols x channels, row-major) plus
// a `key=value` text sidecar with rows, cols, channels, channel_names and
// scale_factors.
void write_tensor(const ChannelTensor& tensor, const std::filesystem::path& f32_path,
                  const std::filesystem::path& meta_path);
ChannelTensor read_tensor(const std::filesystem::path& f32_path, const std::filesystem::path& meta_path);

}  // namespace lidar_reflect
