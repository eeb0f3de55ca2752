#include "lidar_reflect/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lidar_reflect/error.hpp"
#include "lidar_reflect/stats.hpp"

namespace lidar_reflect {

namespace {

constexpr double kMinEta = 1e-6;
constexpr double kVarianceFloor = 1e-6;

void require_aligned(const RawScan& scan, const NormalField& normals) {
  if (normals.size() != scan.size() || normals.cos_incidence.size() != scan.size() ||
      normals.valid.size() != scan.size())
    throw Error(ErrorCode::LengthMismatch, "normal field length " + std::to_string(normals.size()) +
                                               " != point count " + std::to_string(scan.size()));
}

ClassReflectivity summarize(std::map<ClassId, std::vector<double>>& per_class, bool require_positive_centroid) {
  ClassReflectivity out;
  for (auto& [id, values] : per_class) {
    if (values.empty()) continue;
    const auto s = stats::robust_summary(std::move(values));
    if (require_positive_centroid && !(s.median > 0.0)) continue;
    out.classes[id] = ClassStats{id, s.retained, s.median, s.mean, s.variance};
  }
  return out;
}

std::size_t eta_bin_count(const PipelineConfig& config) {
  const double bins = std::ceil(config.near_range_threshold / config.eta_bin_width - 1e-9);
  return std::max<std::size_t>(1, static_cast<std::size_t>(bins));
}

template <typename Values>
double nll_impl(const Values& values, std::span<const ClassId> labels, const ClassReflectivity& stats) {
  if (values.size() != labels.size())
    throw Error(ErrorCode::LengthMismatch, "value and label arrays differ in length");
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const ClassId c = labels[i];
    if (c == kIgnoreClass) continue;
    const ClassStats* s = stats.find(c);
    if (s == nullptr) throw Error(ErrorCode::UnknownClass, "class " + std::to_string(c) + " has no statistics");
    const double var = std::max(s->variance, kVarianceFloor);
    const double residual = static_cast<double>(values[i]) - s->mean;
    total += 0.5 * (std::log(var) + residual * residual / var);
  }
  return total;
}

}  // namespace

EtaParams EtaParams::from_lumped(double a, double d) {
  // D = S = 1 makes a = 2 r_d^2.
  return EtaParams{std::sqrt(a / 2.0), d, 1.0, 1.0};
}

void EtaParams::check() const {
  if (!(r_d > 0.0 && d > 0.0 && D > 0.0 && S > 0.0))
    throw Error(ErrorCode::InvalidValue, "eta parameters must be strictly positive");
}

void EtaTable::check() const {
  const auto n = bin_centers.size();
  if (eta.size() != n || sample_counts.size() != n)
    throw Error(ErrorCode::MalformedTable, "eta table columns differ in length");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(bin_centers[i]) || (i > 0 && !(bin_centers[i] > bin_centers[i - 1])))
      throw Error(ErrorCode::MalformedTable, "bin centers must be finite and strictly increasing");
    if (!(eta[i] > 0.0 && eta[i] <= 1.05))
      throw Error(ErrorCode::MalformedTable, "eta must lie in (0, 1.05], got " + std::to_string(eta[i]));
    if (bin_centers[i] >= near_range_threshold && eta[i] != 1.0)
      throw Error(ErrorCode::MalformedTable, "eta must be 1 at or beyond the near-range threshold");
  }
}

const ClassStats* ClassReflectivity::find(ClassId id) const {
  const auto it = classes.find(id);
  return it == classes.end() ? nullptr : &it->second;
}

std::vector<ClassSample> far_range_samples(const LabeledScan& scan, const NormalField& normals,
                                           const PipelineConfig& config) {
  scan.check();
  require_aligned(scan.scan, normals);
  std::vector<ClassSample> out;
  for (std::size_t i = 0; i < scan.scan.size(); ++i) {
    if (!normals.valid[i] || scan.labels[i] == kIgnoreClass) continue;
    const double cos_a = normals.cos_incidence[i];
    if (!(cos_a >= config.cos_floor)) continue;
    const double r = scan.scan.range(i);
    if (!(r > config.near_range_threshold)) continue;
    out.push_back({scan.labels[i], static_cast<double>(scan.scan.intensity[i]) * r * r / cos_a});
  }
  return out;
}

ClassReflectivity class_centroids(std::span<const ClassSample> samples) {
  if (samples.empty()) throw Error(ErrorCode::NoSamples, "no far-range samples to cluster");
  std::map<ClassId, std::vector<double>> per_class;
  for (const auto& s : samples) per_class[s.class_id].push_back(s.value);
  auto out = summarize(per_class, true);
  if (out.empty()) throw Error(ErrorCode::NoSamples, "no class has a positive reflectivity centroid");
  return out;
}

EtaTable estimate_eta(std::span<const LabeledScan> scans, std::span<const NormalField> normals,
                      const ClassReflectivity& centroids, const PipelineConfig& config) {
  config.check();
  if (scans.size() != normals.size())
    throw Error(ErrorCode::LengthMismatch, "one normal field is required per scan");
  for (std::size_t s = 0; s < scans.size(); ++s) {
    scans[s].check();
    require_aligned(scans[s].scan, normals[s]);
  }

  const std::size_t nbins = eta_bin_count(config);
  const std::size_t far_slot = nbins;

  // Per-scan extraction in parallel; merged in scan order afterwards.
  std::vector<std::vector<std::pair<std::uint32_t, double>>> per_scan(scans.size());
  const auto scan_count = static_cast<std::int64_t>(scans.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t s = 0; s < scan_count; ++s) {
    const auto& scan = scans[s];
    const auto& field = normals[s];
    auto& out = per_scan[s];
    for (std::size_t i = 0; i < scan.scan.size(); ++i) {
      if (!field.valid[i] || scan.labels[i] == kIgnoreClass) continue;
      const ClassStats* c = centroids.find(scan.labels[i]);
      if (c == nullptr || !(c->centroid > 0.0)) continue;
      const double cos_a = field.cos_incidence[i];
      if (!(cos_a >= config.cos_floor)) continue;
      const double r = scan.scan.range(i);
      if (!(r > 0.0)) continue;
      const double sample = static_cast<double>(scan.scan.intensity[i]) * r * r / (c->centroid * cos_a);
      const auto bin = r >= config.near_range_threshold
                           ? far_slot
                           : std::min(static_cast<std::size_t>(r / config.eta_bin_width), nbins - 1);
      out.emplace_back(static_cast<std::uint32_t>(bin), sample);
    }
  }

  std::vector<std::vector<double>> bins(nbins + 1);
  for (const auto& samples : per_scan)
    for (const auto& [bin, value] : samples) bins[bin].push_back(value);

  EtaTable table;
  table.near_range_threshold = config.near_range_threshold;
  table.bin_centers.resize(nbins);
  table.eta.assign(nbins, 0.0);
  table.sample_counts.resize(nbins);
  std::vector<std::uint8_t> populated(nbins, 0);
  double max_bin = 0.0;
  for (std::size_t b = 0; b < nbins; ++b) {
    table.bin_centers[b] = (static_cast<double>(b) + 0.5) * config.eta_bin_width;
    table.sample_counts[b] = bins[b].size();
    if (bins[b].size() >= config.min_bin_samples && !bins[b].empty() &&
        table.bin_centers[b] < config.near_range_threshold) {
      table.eta[b] = stats::median_inplace(bins[b]);
      populated[b] = 1;
      max_bin = std::max(max_bin, table.eta[b]);
    }
  }
  const bool has_plateau = bins[far_slot].size() >= config.min_bin_samples && !bins[far_slot].empty();
  const bool any_bin = std::find(populated.begin(), populated.end(), 1) != populated.end();
  if (!has_plateau && !any_bin)
    throw Error(ErrorCode::InsufficientData,
                "no range bin reached " + std::to_string(config.min_bin_samples) + " samples");

  const double plateau = has_plateau ? stats::median_inplace(bins[far_slot]) : max_bin;
  if (!(plateau > 0.0)) throw Error(ErrorCode::InsufficientData, "far-range plateau is not positive");

  // Anchors: normalized populated bins plus eta = 1 at the threshold.
  std::vector<std::pair<double, double>> anchors;
  for (std::size_t b = 0; b < nbins; ++b) {
    if (!populated[b]) continue;
    table.eta[b] = std::clamp(table.eta[b] / plateau, kMinEta, 1.0);
    anchors.emplace_back(table.bin_centers[b], table.eta[b]);
  }
  anchors.emplace_back(config.near_range_threshold, 1.0);

  for (std::size_t b = 0; b < nbins; ++b) {
    const double center = table.bin_centers[b];
    if (center >= config.near_range_threshold) {
      table.eta[b] = 1.0;
      continue;
    }
    if (populated[b]) continue;
    const auto hi = std::upper_bound(anchors.begin(), anchors.end(), center,
                                     [](double v, const auto& a) { return v < a.first; });
    if (hi == anchors.begin()) {
      table.eta[b] = hi->second;
    } else {
      const auto lo = hi - 1;
      const double t = (center - lo->first) / (hi->first - lo->first);
      table.eta[b] = std::clamp(lo->second + t * (hi->second - lo->second), kMinEta, 1.0);
    }
  }
  table.check();
  return table;
}

double eta_at(const EtaTable& table, double range) {
  if (!(range > 0.0)) throw Error(ErrorCode::NonPositiveRange, "eta requested at range " + std::to_string(range));
  if (range >= table.near_range_threshold || table.empty()) return 1.0;
  const auto& c = table.bin_centers;
  if (range <= c.front()) return table.eta.front();
  if (range >= c.back()) return table.eta.back();
  const auto hi = static_cast<std::size_t>(std::upper_bound(c.begin(), c.end(), range) - c.begin());
  const auto lo = hi - 1;
  const double t = (range - c[lo]) / (c[hi] - c[lo]);
  return table.eta[lo] + t * (table.eta[hi] - table.eta[lo]);
}

double eta_at(const EtaParams& params, double range) {
  if (!(range > 0.0)) throw Error(ErrorCode::NonPositiveRange, "eta requested at range " + std::to_string(range));
  const double s = range + params.d;
  return 1.0 - std::exp(-params.lumped_a() * s * s);
}

double eta_at(const EtaModel& model, double range) {
  return std::visit([range](const auto& m) { return eta_at(m, range); }, model);
}

ReflectivityScan calibrate_scan(const RawScan& scan, const NormalField& normals, const EtaModel& eta,
                                const PipelineConfig& config) {
  scan.check();
  require_aligned(scan, normals);
  ReflectivityScan out;
  out.scan = scan;
  out.reflectivity.assign(scan.size(), 0.0f);
  out.valid.assign(scan.size(), 0);
  const double floor = config.cos_floor;

  std::visit(
      [&](const auto& model) {
        const auto n = static_cast<std::int64_t>(scan.size());
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) {
          if (!normals.valid[i]) continue;
          const double r = scan.range(i);
          if (!(r > 0.0)) continue;
          const double value =
              static_cast<double>(scan.intensity[i]) * r * r / (std::max(normals.cos_incidence[i], floor) * eta_at(model, r));
          if (!std::isfinite(value)) continue;
          out.reflectivity[i] = static_cast<float>(value);
          out.valid[i] = 1;
        }
      },
      eta);
  return out;
}

ClassReflectivity class_gaussians(std::span<const ReflectivityScan> scans,
                                  std::span<const std::vector<ClassId>> labels) {
  if (scans.size() != labels.size()) throw Error(ErrorCode::LengthMismatch, "one label array is required per scan");
  std::map<ClassId, std::vector<double>> per_class;
  for (std::size_t s = 0; s < scans.size(); ++s) {
    const auto& scan = scans[s];
    if (labels[s].size() != scan.reflectivity.size() || scan.valid.size() != scan.reflectivity.size())
      throw Error(ErrorCode::LengthMismatch, "labels do not align with calibrated scan " + std::to_string(s));
    for (std::size_t i = 0; i < scan.reflectivity.size(); ++i) {
      if (!scan.valid[i] || labels[s][i] == kIgnoreClass) continue;
      per_class[labels[s][i]].push_back(scan.reflectivity[i]);
    }
  }
  auto out = summarize(per_class, false);
  if (out.empty()) throw Error(ErrorCode::NoSamples, "no valid labeled calibrated points");
  return out;
}

double gaussian_nll(std::span<const double> values, std::span<const ClassId> labels,
                    const ClassReflectivity& stats) {
  return nll_impl(values, labels, stats);
}

double gaussian_nll(std::span<const float> values, std::span<const ClassId> labels,
                    const ClassReflectivity& stats) {
  return nll_impl(values, labels, stats);
}

}  // namespace lidar_reflect
