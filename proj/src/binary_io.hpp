#pragma once

// Little-endian byte buffers and whole-file I/O shared by the readers and
// writers in this library.

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

namespace lidar_reflect::detail {

template <typename T>
T to_little(T value) {
  if constexpr (std::endian::native == std::endian::little) {
    return value;
  } else {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
}

template <typename T>
void put(std::vector<char>& buf, T value) {
  const T le = to_little(value);
  const auto* p = reinterpret_cast<const char*>(&le);
  buf.insert(buf.end(), p, p + sizeof(T));
}

template <typename T>
T get(const char* p) {
  T value;
  std::memcpy(&value, p, sizeof(T));
  return to_little(value);
}

// Throw Error(FileUnreadable) / Error(FileUnwritable).
std::vector<char> read_bytes(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, const std::vector<char>& bytes);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace lidar_reflect::detail
