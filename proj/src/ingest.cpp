#include "lidar_reflect/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "binary_io.hpp"
#include "lidar_reflect/error.hpp"

namespace lidar_reflect {

namespace {

using nlohmann::json;

using detail::get;
using detail::put;
using detail::read_bytes;
using detail::read_text;
using detail::write_bytes;

void write_points(const RawScan& scan, std::span<const float> channel4, const fs::path& path) {
  scan.check();
  std::vector<char> buf;
  buf.reserve(scan.size() * 16);
  for (std::size_t i = 0; i < scan.size(); ++i) {
    put(buf, scan.x[i]);
    put(buf, scan.y[i]);
    put(buf, scan.z[i]);
    put(buf, channel4[i]);
  }
  write_bytes(path, buf);
}

json parse_json(std::string_view text, std::string_view what) {
  try {
    auto doc = json::parse(text.begin(), text.end());
    if (!doc.is_object()) throw Error(ErrorCode::InvalidValue, std::string(what) + ": expected a JSON object");
    return doc;
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidValue, std::string(what) + ": " + e.what());
  }
}

void reject_unknown(const json& doc, const std::set<std::string>& allowed, std::string_view what) {
  for (const auto& [key, _] : doc.items()) {
    if (!allowed.contains(key))
      throw Error(ErrorCode::InvalidValue, std::string(what) + ": unknown field '" + key + "'");
  }
}

template <typename T>
T field(const json& doc, const std::string& key, std::string_view what) {
  if (!doc.contains(key)) throw Error(ErrorCode::MissingField, std::string(what) + ": missing '" + key + "'");
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidValue, std::string(what) + ": bad '" + key + "': " + e.what());
  }
}

template <typename T>
T field_or(const json& doc, const std::string& key, T fallback, std::string_view what) {
  return doc.contains(key) ? field<T>(doc, key, what) : fallback;
}

double parse_number(std::string_view cell, std::string_view what) {
  // from_chars rejects leading whitespace and '+'; trim the former.
  while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
  while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r')) cell.remove_suffix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty())
    throw Error(ErrorCode::MalformedTable, std::string(what) + ": non-numeric cell '" + std::string(cell) + "'");
  return value;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return cells;
}

std::string_view trim_eol(std::string_view line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.remove_suffix(1);
  return line;
}

}  // namespace

namespace detail {

std::vector<char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileUnreadable, "cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::streamoff>(in.tellg());
  if (size < 0) throw Error(ErrorCode::FileUnreadable, "cannot size " + path.string());
  in.seekg(0, std::ios::beg);
  std::vector<char> bytes(static_cast<std::size_t>(size));
  if (size > 0 && !in.read(bytes.data(), size))
    throw Error(ErrorCode::FileUnreadable, "short read from " + path.string());
  return bytes;
}

std::string read_text(const fs::path& path) {
  const auto bytes = read_bytes(path);
  return {bytes.begin(), bytes.end()};
}

void write_bytes(const fs::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::FileUnwritable, "cannot open " + path.string() + " for writing");
  if (!bytes.empty()) out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::FileUnwritable, "write failed for " + path.string());
}

void write_text(const fs::path& path, const std::string& text) { write_bytes(path, {text.begin(), text.end()}); }

}  // namespace detail

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return {buf, ptr};
}

RawScan read_scan(const fs::path& path) {
  const auto bytes = read_bytes(path);
  if (bytes.size() % 16 != 0)
    throw Error(ErrorCode::MalformedScan,
                path.string() + ": size " + std::to_string(bytes.size()) + " is not a multiple of 16");
  const std::size_t n = bytes.size() / 16;
  RawScan scan;
  scan.x.resize(n);
  scan.y.resize(n);
  scan.z.resize(n);
  scan.intensity.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const char* p = bytes.data() + i * 16;
    scan.x[i] = get<float>(p);
    scan.y[i] = get<float>(p + 4);
    scan.z[i] = get<float>(p + 8);
    scan.intensity[i] = get<float>(p + 12);
  }
  return scan;
}

void write_scan(const RawScan& scan, const fs::path& path) { write_points(scan, scan.intensity, path); }

void write_scan(const ReflectivityScan& scan, const fs::path& path) {
  if (scan.reflectivity.size() != scan.scan.size())
    throw Error(ErrorCode::LengthMismatch, "reflectivity length differs from point count");
  write_points(scan.scan, scan.reflectivity, path);
}

std::vector<ClassId> read_labels(const fs::path& path) {
  const auto bytes = read_bytes(path);
  if (bytes.size() % 4 != 0)
    throw Error(ErrorCode::MalformedLabels,
                path.string() + ": size " + std::to_string(bytes.size()) + " is not a multiple of 4");
  std::vector<ClassId> labels(bytes.size() / 4);
  for (std::size_t i = 0; i < labels.size(); ++i)
    labels[i] = static_cast<ClassId>(get<std::uint32_t>(bytes.data() + i * 4) & 0xFFFFu);
  return labels;
}

void write_labels(std::span<const ClassId> labels, const fs::path& path) {
  std::vector<char> buf;
  buf.reserve(labels.size() * 4);
  for (const auto label : labels) put(buf, static_cast<std::uint32_t>(label));
  write_bytes(path, buf);
}

LabeledScan read_labeled_scan(const fs::path& scan_path, const fs::path& label_path) {
  LabeledScan out;
  out.scan = read_scan(scan_path);
  out.labels = read_labels(label_path);
  if (out.labels.size() != out.scan.size())
    throw Error(ErrorCode::LengthMismatch, label_path.string() + ": " + std::to_string(out.labels.size()) +
                                               " labels for " + std::to_string(out.scan.size()) + " points in " +
                                               scan_path.string());
  return out;
}

SensorModel parse_sensor_config(std::string_view text) {
  constexpr std::string_view what = "sensor config";
  const auto doc = parse_json(text, what);
  reject_unknown(doc, {"name", "rows", "cols", "fov_up", "fov_down", "max_range", "intensity_max", "origin"}, what);
  SensorModel s;
  s.name = field<std::string>(doc, "name", what);
  s.rows = field<int>(doc, "rows", what);
  s.cols = field<int>(doc, "cols", what);
  s.fov_up = field<double>(doc, "fov_up", what);
  s.fov_down = field<double>(doc, "fov_down", what);
  s.max_range = field<double>(doc, "max_range", what);
  s.intensity_max = field<double>(doc, "intensity_max", what);
  if (doc.contains("origin")) {
    const auto o = field<std::vector<double>>(doc, "origin", what);
    if (o.size() != 3) throw Error(ErrorCode::InvalidValue, "sensor config: origin must have 3 components");
    s.origin = {o[0], o[1], o[2]};
  }
  s.check();
  return s;
}

SensorModel read_sensor_config(const fs::path& path) {
  try {
    return parse_sensor_config(read_text(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::FileUnreadable) throw;
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::string_view to_string(NormalMethod method) {
  return method == NormalMethod::image_grid ? "image_grid" : "knn_pca";
}

void PipelineConfig::check() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidValue, msg); };
  if (!(near_range_threshold > 0.0)) fail("near_range_threshold must be positive");
  if (!(cos_floor > 0.0 && cos_floor < 1.0)) fail("cos_floor must lie in (0, 1)");
  if (!(eta_bin_width > 0.0)) fail("eta_bin_width must be positive");
  if (!(reflectivity_percentile > 0.0 && reflectivity_percentile <= 1.0))
    fail("reflectivity_percentile must lie in (0, 1]");
  if (knn_k < 3) fail("knn_k must be at least 3");
}

PipelineConfig parse_pipeline_config(std::string_view text) {
  constexpr std::string_view what = "pipeline config";
  const auto doc = parse_json(text, what);
  reject_unknown(doc,
                 {"near_range_threshold", "cos_floor", "eta_bin_width", "min_bin_samples", "normal_method", "knn_k",
                  "reflectivity_percentile"},
                 what);
  PipelineConfig c;
  c.near_range_threshold = field_or(doc, "near_range_threshold", c.near_range_threshold, what);
  c.cos_floor = field_or(doc, "cos_floor", c.cos_floor, what);
  c.eta_bin_width = field_or(doc, "eta_bin_width", c.eta_bin_width, what);
  c.reflectivity_percentile = field_or(doc, "reflectivity_percentile", c.reflectivity_percentile, what);
  const auto min_bin = field_or<long long>(doc, "min_bin_samples", static_cast<long long>(c.min_bin_samples), what);
  const auto knn = field_or<long long>(doc, "knn_k", static_cast<long long>(c.knn_k), what);
  if (min_bin < 0 || knn < 0) throw Error(ErrorCode::InvalidValue, "pipeline config: counts must be non-negative");
  c.min_bin_samples = static_cast<std::size_t>(min_bin);
  c.knn_k = static_cast<std::size_t>(knn);
  const auto method = field_or<std::string>(doc, "normal_method", "image_grid", what);
  if (method == "image_grid") {
    c.normal_method = NormalMethod::image_grid;
  } else if (method == "knn_pca") {
    c.normal_method = NormalMethod::knn_pca;
  } else {
    throw Error(ErrorCode::InvalidValue, "pipeline config: unknown normal_method '" + method + "'");
  }
  c.check();
  return c;
}

PipelineConfig read_pipeline_config(const fs::path& path) {
  try {
    return parse_pipeline_config(read_text(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::FileUnreadable) throw;
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void write_eta_table(const EtaTable& table, const fs::path& path) {
  std::ostringstream out;
  out << "# near_range_threshold_m=" << format_double(table.near_range_threshold) << '\n';
  out << "bin_center_m,eta,sample_count\n";
  for (std::size_t i = 0; i < table.size(); ++i)
    out << format_double(table.bin_centers[i]) << ',' << format_double(table.eta[i]) << ','
        << table.sample_counts[i] << '\n';
  detail::write_text(path, out.str());
}

EtaTable read_eta_table(const fs::path& path) {
  const auto text = read_text(path);
  const std::string what = path.string();
  EtaTable table;
  std::istringstream in(text);
  std::string raw;
  bool header_seen = false;
  bool threshold_seen = false;
  while (std::getline(in, raw)) {
    const auto line = trim_eol(raw);
    if (line.empty()) continue;
    if (line.front() == '#') {
      constexpr std::string_view key = "# near_range_threshold_m=";
      if (line.starts_with(key)) {
        table.near_range_threshold = parse_number(line.substr(key.size()), what);
        threshold_seen = true;
      }
      continue;
    }
    if (!header_seen) {
      if (line != "bin_center_m,eta,sample_count")
        throw Error(ErrorCode::MalformedTable, what + ": unexpected header '" + std::string(line) + "'");
      header_seen = true;
      continue;
    }
    const auto cells = split(line, ',');
    if (cells.size() != 3) throw Error(ErrorCode::MalformedTable, what + ": expected 3 columns");
    table.bin_centers.push_back(parse_number(cells[0], what));
    table.eta.push_back(parse_number(cells[1], what));
    const double count = parse_number(cells[2], what);
    if (count < 0 || count != std::floor(count))
      throw Error(ErrorCode::MalformedTable, what + ": sample_count must be a non-negative integer");
    table.sample_counts.push_back(static_cast<std::uint64_t>(count));
  }
  if (!header_seen) throw Error(ErrorCode::MalformedTable, what + ": missing header");
  if (!threshold_seen && !table.empty()) {
    // Tables written elsewhere may omit the comment; assume contiguous bins.
    const double half = table.size() > 1 ? 0.5 * (table.bin_centers[1] - table.bin_centers[0]) : 0.0;
    table.near_range_threshold = table.bin_centers.back() + half;
  }
  table.check();
  return table;
}

void write_class_stats(const ClassReflectivity& stats, const fs::path& path) {
  std::ostringstream out;
  out << "class_id,count,centroid,mean,variance\n";
  for (const auto& [id, s] : stats.classes)
    out << id << ',' << s.count << ',' << format_double(s.centroid) << ',' << format_double(s.mean) << ','
        << format_double(s.variance) << '\n';
  detail::write_text(path, out.str());
}

ClassReflectivity read_class_stats(const fs::path& path) {
  const auto text = read_text(path);
  const std::string what = path.string();
  ClassReflectivity stats;
  std::istringstream in(text);
  std::string raw;
  bool header_seen = false;
  while (std::getline(in, raw)) {
    const auto line = trim_eol(raw);
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      if (line != "class_id,count,centroid,mean,variance")
        throw Error(ErrorCode::MalformedTable, what + ": unexpected header '" + std::string(line) + "'");
      header_seen = true;
      continue;
    }
    const auto cells = split(line, ',');
    if (cells.size() != 5) throw Error(ErrorCode::MalformedTable, what + ": expected 5 columns");
    ClassStats s;
    const double id = parse_number(cells[0], what);
    if (id < 0 || id > 0xFFFF || id != std::floor(id)) throw Error(ErrorCode::MalformedTable, what + ": bad class_id");
    s.class_id = static_cast<ClassId>(id);
    s.count = static_cast<std::size_t>(parse_number(cells[1], what));
    s.centroid = parse_number(cells[2], what);
    s.mean = parse_number(cells[3], what);
    s.variance = parse_number(cells[4], what);
    stats.classes[s.class_id] = s;
  }
  if (!header_seen) throw Error(ErrorCode::MalformedTable, what + ": missing header");
  return stats;
}

std::vector<fs::path> list_files(const fs::path& dir, std::string_view extension) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error(ErrorCode::FileUnreadable, dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == extension) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace lidar_reflect
