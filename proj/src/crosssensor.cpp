#include "lidar_reflect/crosssensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "binary_io.hpp"
#include "lidar_reflect/error.hpp"
#include "lidar_reflect/ingest.hpp"
#include "lidar_reflect/stats.hpp"

namespace lidar_reflect {

namespace {

bool usable(const LabeledScan& scan, std::size_t i) {
  return scan.labels[i] != kIgnoreClass && std::isfinite(scan.scan.x[i]) && std::isfinite(scan.scan.y[i]) &&
         std::isfinite(scan.scan.z[i]) && std::isfinite(scan.scan.intensity[i]) && scan.scan.range(i) > 0.0;
}

double max_range(std::span<const LabeledScan> scans) {
  double out = 0.0;
  for (const auto& s : scans)
    for (std::size_t i = 0; i < s.scan.size(); ++i)
      if (usable(s, i)) out = std::max(out, s.scan.range(i));
  return out;
}

std::vector<std::vector<double>> bin_intensities(std::span<const LabeledScan> scans, double width,
                                                 std::size_t nbins, double limit) {
  std::vector<std::vector<double>> bins(nbins);
  for (const auto& s : scans) {
    for (std::size_t i = 0; i < s.scan.size(); ++i) {
      if (!usable(s, i)) continue;
      const double r = s.scan.range(i);
      if (r > limit) continue;
      const auto b = std::min(static_cast<std::size_t>(r / width), nbins - 1);
      bins[b].push_back(s.scan.intensity[i]);
    }
  }
  return bins;
}

std::vector<double> quantiles(std::vector<double>& values, std::size_t q) {
  std::sort(values.begin(), values.end());
  std::vector<double> out(q);
  for (std::size_t j = 0; j < q; ++j)
    out[j] = stats::quantile_sorted(values, q == 1 ? 0.5 : static_cast<double>(j) / static_cast<double>(q - 1));
  return out;
}

}  // namespace

std::size_t CrossSensorMap::bin_for(double range) const {
  const auto n = bin_count();
  if (n <= 1 || !(range >= range_bin_edges[1])) return 0;
  const auto it = std::upper_bound(range_bin_edges.begin(), range_bin_edges.end(), range);
  const auto b = static_cast<std::size_t>(it - range_bin_edges.begin()) - 1;
  return std::min(b, n - 1);
}

double CrossSensorMap::map(double intensity, double range) const {
  if (bin_count() == 0) return intensity;
  const auto& src = source_quantiles[bin_for(range)];
  const auto& tgt = target_quantiles[bin_for(range)];
  if (std::isnan(intensity)) return intensity;
  // Outside the fitted knots, scale by the ratio at the nearest end knot.
  const auto extrapolate = [&](double s, double t) { return s > 0.0 ? intensity * (t / s) : t + (intensity - s); };
  if (intensity <= src.front()) return extrapolate(src.front(), tgt.front());
  if (intensity >= src.back()) return extrapolate(src.back(), tgt.back());
  // src[j] <= intensity < src[j + 1], so the segment is never degenerate.
  const auto j = static_cast<std::size_t>(std::upper_bound(src.begin(), src.end(), intensity) - src.begin()) - 1;
  const double t = (intensity - src[j]) / (src[j + 1] - src[j]);
  return tgt[j] + t * (tgt[j + 1] - tgt[j]);
}

void CrossSensorMap::check() const {
  const auto n = bin_count();
  if (target_quantiles.size() != n || range_bin_edges.size() != n + 1)
    throw Error(ErrorCode::MalformedTable, "cross-sensor map shape mismatch");
  for (std::size_t b = 0; b < n; ++b) {
    if (source_quantiles[b].size() != quantile_count() || target_quantiles[b].size() != quantile_count() ||
        quantile_count() == 0)
      throw Error(ErrorCode::MalformedTable, "cross-sensor map quantile counts differ");
    if (!std::is_sorted(source_quantiles[b].begin(), source_quantiles[b].end()) ||
        !std::is_sorted(target_quantiles[b].begin(), target_quantiles[b].end()))
      throw Error(ErrorCode::MalformedTable, "cross-sensor quantiles must be non-decreasing");
    if (!(range_bin_edges[b + 1] > range_bin_edges[b]))
      throw Error(ErrorCode::MalformedTable, "cross-sensor bin edges must increase");
  }
}

CrossSensorMap fit_cross_map(std::span<const LabeledScan> source, std::span<const LabeledScan> target,
                             const PipelineConfig& config, const CrossFitOptions& options) {
  config.check();
  if (source.empty() || target.empty())
    throw Error(ErrorCode::InsufficientData, "cross-sensor fit needs scans on both sides");
  if (options.quantiles < 2) throw Error(ErrorCode::InvalidValue, "at least 2 quantiles are required");
  for (const auto& s : source) s.check();
  for (const auto& s : target) s.check();

  const double shared = std::min(max_range(source), max_range(target));
  if (!(shared > 0.0)) throw Error(ErrorCode::InsufficientData, "no labeled points with positive range");
  const double width = 4.0 * config.eta_bin_width;
  const auto nbins = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(shared / width)));

  auto src_bins = bin_intensities(source, width, nbins, shared);
  auto tgt_bins = bin_intensities(target, width, nbins, shared);

  CrossSensorMap map;
  map.source_name = options.source_name;
  map.target_name = options.target_name;
  map.range_bin_edges.resize(nbins + 1);
  for (std::size_t b = 0; b <= nbins; ++b) map.range_bin_edges[b] = static_cast<double>(b) * width;
  map.source_quantiles.resize(nbins);
  map.target_quantiles.resize(nbins);

  const auto need = std::max<std::size_t>(config.min_bin_samples, 1);
  std::vector<std::size_t> populated;
  for (std::size_t b = 0; b < nbins; ++b) {
    if (src_bins[b].size() < need || tgt_bins[b].size() < need) continue;
    map.source_quantiles[b] = quantiles(src_bins[b], options.quantiles);
    map.target_quantiles[b] = quantiles(tgt_bins[b], options.quantiles);
    populated.push_back(b);
  }
  if (populated.empty())
    throw Error(ErrorCode::InsufficientData, "no range bin has " + std::to_string(need) + " samples on both sides");

  for (std::size_t b = 0; b < nbins; ++b) {
    if (!map.source_quantiles[b].empty()) continue;
    // Nearest populated bin; the lower one wins ties.
    const auto hi = std::lower_bound(populated.begin(), populated.end(), b);
    std::size_t pick;
    if (hi == populated.end()) {
      pick = populated.back();
    } else if (hi == populated.begin()) {
      pick = *hi;
    } else {
      const auto lo = *(hi - 1);
      pick = (b - lo) <= (*hi - b) ? lo : *hi;
    }
    map.source_quantiles[b] = map.source_quantiles[pick];
    map.target_quantiles[b] = map.target_quantiles[pick];
  }
  map.check();
  return map;
}

RawScan apply_cross_map(const RawScan& scan, const CrossSensorMap& map) {
  scan.check();
  RawScan out = scan;
  const auto n = static_cast<std::int64_t>(scan.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const double r = scan.range(i);
    if (!std::isfinite(r)) continue;
    out.intensity[i] = static_cast<float>(map.map(scan.intensity[i], r));
  }
  return out;
}

void write_cross_map(const CrossSensorMap& map, const std::filesystem::path& path) {
  map.check();
  std::ostringstream out;
  out << "# source_name=" << map.source_name << '\n';
  out << "# target_name=" << map.target_name << '\n';
  out << "bin,range_lo_m,range_hi_m,level,source,target\n";
  const auto q = map.quantile_count();
  for (std::size_t b = 0; b < map.bin_count(); ++b) {
    for (std::size_t j = 0; j < q; ++j) {
      const double level = q == 1 ? 0.5 : static_cast<double>(j) / static_cast<double>(q - 1);
      out << b << ',' << format_double(map.range_bin_edges[b]) << ',' << format_double(map.range_bin_edges[b + 1])
          << ',' << format_double(level) << ',' << format_double(map.source_quantiles[b][j]) << ','
          << format_double(map.target_quantiles[b][j]) << '\n';
    }
  }
  detail::write_text(path, out.str());
}

CrossSensorMap read_cross_map(const std::filesystem::path& path) {
  const auto text = detail::read_text(path);
  const std::string what = path.string();
  CrossSensorMap map;
  std::istringstream in(text);
  std::string line;
  bool header_seen = false;
  auto number = [&](const std::string& cell) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(cell, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != cell.size())
      throw Error(ErrorCode::MalformedTable, what + ": non-numeric cell '" + cell + "'");
    return v;
  };
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.starts_with("# source_name=")) {
      map.source_name = line.substr(14);
      continue;
    }
    if (line.starts_with("# target_name=")) {
      map.target_name = line.substr(14);
      continue;
    }
    if (line.front() == '#') continue;
    if (!header_seen) {
      if (line != "bin,range_lo_m,range_hi_m,level,source,target")
        throw Error(ErrorCode::MalformedTable, what + ": unexpected header '" + line + "'");
      header_seen = true;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw Error(ErrorCode::MalformedTable, what + ": expected 6 columns");
    const double bin_d = number(cells[0]);
    if (bin_d < 0 || bin_d != std::floor(bin_d)) throw Error(ErrorCode::MalformedTable, what + ": bad bin index");
    const auto bin = static_cast<std::size_t>(bin_d);
    if (bin > map.source_quantiles.size())
      throw Error(ErrorCode::MalformedTable, what + ": bins must appear in order");
    if (bin == map.source_quantiles.size()) {
      map.source_quantiles.emplace_back();
      map.target_quantiles.emplace_back();
      if (map.range_bin_edges.empty()) map.range_bin_edges.push_back(number(cells[1]));
      map.range_bin_edges.push_back(number(cells[2]));
    }
    map.source_quantiles[bin].push_back(number(cells[4]));
    map.target_quantiles[bin].push_back(number(cells[5]));
  }
  if (!header_seen) throw Error(ErrorCode::MalformedTable, what + ": missing header");
  if (map.bin_count() == 0) throw Error(ErrorCode::MalformedTable, what + ": map has no bins");
  map.check();
  return map;
}

}  // namespace lidar_reflect
