#include "lidar_reflect/image_export.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <memory>
#include <sstream>

#include "binary_io.hpp"
#include "lidar_reflect/error.hpp"
#include "lidar_reflect/ingest.hpp"

namespace lidar_reflect {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

Channel parse_channel(std::string_view name) {
  for (const auto c : {Channel::range, Channel::x, Channel::y, Channel::z, Channel::intensity, Channel::reflectivity})
    if (to_string(c) == name) return c;
  throw Error(ErrorCode::MalformedTable, "unknown channel name '" + std::string(name) + "'");
}

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string cell;
  while (std::getline(in, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

void write_png16(const std::filesystem::path& path, int rows, int cols, const std::vector<std::uint16_t>& pixels) {
  FilePtr file(std::fopen(path.string().c_str(), "wb"));
  if (!file) throw Error(ErrorCode::FileUnwritable, "cannot open " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::FileUnwritable, "libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::FileUnwritable, "libpng failed writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(cols), static_cast<png_uint_32>(rows), 16, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  // PNG stores 16-bit samples big-endian.
  std::vector<png_byte> row(static_cast<std::size_t>(cols) * 2);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const auto v = pixels[static_cast<std::size_t>(r) * cols + c];
      row[2 * c] = static_cast<png_byte>(v >> 8);
      row[2 * c + 1] = static_cast<png_byte>(v & 0xFF);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::vector<std::uint16_t> read_png16(const std::filesystem::path& path, int& rows, int& cols) {
  FilePtr file(std::fopen(path.string().c_str(), "rb"));
  if (!file) throw Error(ErrorCode::FileUnreadable, "cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::FileUnreadable, "libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::FileUnreadable, "libpng failed reading " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  if (png_get_bit_depth(png, info) != 16 || png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::FileUnreadable, path.string() + " is not a 16-bit grayscale PNG");
  }
  cols = static_cast<int>(png_get_image_width(png, info));
  rows = static_cast<int>(png_get_image_height(png, info));
  std::vector<std::uint16_t> pixels(static_cast<std::size_t>(rows) * cols);
  std::vector<png_byte> row(static_cast<std::size_t>(cols) * 2);
  for (int r = 0; r < rows; ++r) {
    png_read_row(png, row.data(), nullptr);
    for (int c = 0; c < cols; ++c)
      pixels[static_cast<std::size_t>(r) * cols + c] = static_cast<std::uint16_t>((row[2 * c] << 8) | row[2 * c + 1]);
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return pixels;
}

std::vector<ChannelScale> write_channel_pngs(const RangeImage& image, std::span<const Channel> channels,
                                             const std::filesystem::path& dir, const std::string& stem) {
  std::vector<ChannelScale> scales;
  std::ostringstream sidecar;
  sidecar << "channel,min,max\n";
  for (const Channel channel : channels) {
    const std::size_t ch = image.channel_index(channel);
    ChannelScale scale{channel, std::numeric_limits<double>::infinity(),
                       -std::numeric_limits<double>::infinity()};
    for (std::size_t p = 0; p < image.pixel_count(); ++p) {
      if (!image.valid()[p]) continue;
      scale.min = std::min(scale.min, static_cast<double>(image.at(p, ch)));
      scale.max = std::max(scale.max, static_cast<double>(image.at(p, ch)));
    }
    if (scale.min > scale.max) scale.min = scale.max = 0.0;
    const double span = scale.max - scale.min;
    std::vector<std::uint16_t> pixels(image.pixel_count(), 0);
    for (std::size_t p = 0; p < image.pixel_count(); ++p) {
      if (!image.valid()[p] || !(span > 0.0)) continue;
      const double t = (image.at(p, ch) - scale.min) / span;
      pixels[p] = static_cast<std::uint16_t>(std::lround(std::clamp(t, 0.0, 1.0) * 65535.0));
    }
    const std::string name(to_string(scale.channel));
    write_png16(dir / (stem + "_" + name + ".png"), image.rows(), image.cols(), pixels);
    sidecar << name << ',' << format_double(scale.min) << ',' << format_double(scale.max) << '\n';
    scales.push_back(scale);
  }
  detail::write_text(dir / (stem + "_scales.txt"), sidecar.str());
  return scales;
}

void write_tensor(const ChannelTensor& tensor, const std::filesystem::path& f32_path,
                  const std::filesystem::path& meta_path) {
  std::vector<char> buf;
  buf.reserve(tensor.data.size() * 4);
  for (const float v : tensor.data) detail::put(buf, v);
  detail::write_bytes(f32_path, buf);

  std::ostringstream meta;
  meta << "rows=" << tensor.rows << '\n' << "cols=" << tensor.cols << '\n';
  meta << "channels=" << tensor.channels.size() << '\n' << "channel_names=";
  for (std::size_t c = 0; c < tensor.channels.size(); ++c) meta << (c ? "," : "") << to_string(tensor.channels[c]);
  meta << '\n' << "scale_factors=";
  for (std::size_t c = 0; c < tensor.channels.size(); ++c) meta << (c ? "," : "") << 1;
  meta << '\n';
  for (const auto layout : {Layout::rxyzi, Layout::rxyzn, Layout::rxyzirn})
    if (layout_channels(layout) == tensor.channels) meta << "layout=" << to_string(layout) << '\n';
  meta << "dtype=float32-le\norder=row-major,rows,cols,channels\n";
  detail::write_text(meta_path, meta.str());
}

ChannelTensor read_tensor(const std::filesystem::path& f32_path, const std::filesystem::path& meta_path) {
  std::map<std::string, std::string> meta;
  std::stringstream in(detail::read_text(meta_path));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  for (const char* key : {"rows", "cols", "channels", "channel_names"})
    if (!meta.contains(key)) throw Error(ErrorCode::MalformedTable, meta_path.string() + ": missing " + key);

  ChannelTensor tensor;
  try {
    tensor.rows = std::stoi(meta["rows"]);
    tensor.cols = std::stoi(meta["cols"]);
  } catch (const std::exception&) {
    throw Error(ErrorCode::MalformedTable, meta_path.string() + ": bad rows/cols");
  }
  for (const auto& name : split_csv(meta["channel_names"])) tensor.channels.push_back(parse_channel(name));
  const auto bytes = detail::read_bytes(f32_path);
  const auto expected = static_cast<std::size_t>(tensor.rows) * tensor.cols * tensor.channels.size();
  if (bytes.size() != expected * 4)
    throw Error(ErrorCode::MalformedTable, f32_path.string() + ": size does not match its sidecar");
  tensor.data.resize(expected);
  for (std::size_t i = 0; i < expected; ++i) tensor.data[i] = detail::get<float>(bytes.data() + i * 4);
  return tensor;
}

}  // namespace lidar_reflect
