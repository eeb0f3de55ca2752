#include "lidar_reflect/core.hpp"

#include <cmath>
#include <string>

#include "lidar_reflect/error.hpp"

namespace lidar_reflect {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::FileUnreadable: return "FileUnreadable";
    case ErrorCode::FileUnwritable: return "FileUnwritable";
    case ErrorCode::MalformedScan: return "MalformedScan";
    case ErrorCode::MalformedLabels: return "MalformedLabels";
    case ErrorCode::MalformedTable: return "MalformedTable";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::MissingField: return "MissingField";
    case ErrorCode::InvalidValue: return "InvalidValue";
    case ErrorCode::DegeneratePoint: return "DegeneratePoint";
    case ErrorCode::MissingChannel: return "MissingChannel";
    case ErrorCode::NoSamples: return "NoSamples";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::FitDiverged: return "FitDiverged";
    case ErrorCode::NonPositiveRange: return "NonPositiveRange";
    case ErrorCode::UnknownClass: return "UnknownClass";
    case ErrorCode::EmptyScene: return "EmptyScene";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), detail_(what) {}

void SensorModel::check() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidValue, msg); };
  if (!(fov_up > fov_down)) fail("sensor fov_up must exceed fov_down");
  if (rows < 2) fail("sensor rows must be >= 2");
  if (cols < 4) fail("sensor cols must be >= 4");
  if (!(max_range > 0.0)) fail("sensor max_range must be positive");
  if (!(intensity_max > 0.0)) fail("sensor intensity_max must be positive");
  if (!origin.allFinite()) fail("sensor origin must be finite");
}

void RawScan::reserve(std::size_t n) {
  x.reserve(n);
  y.reserve(n);
  z.reserve(n);
  intensity.reserve(n);
}

void RawScan::push_back(float px, float py, float pz, float value) {
  x.push_back(px);
  y.push_back(py);
  z.push_back(pz);
  intensity.push_back(value);
}

void RawScan::pop_back() {
  x.pop_back();
  y.pop_back();
  z.pop_back();
  intensity.pop_back();
}

void RawScan::check() const {
  const auto n = x.size();
  if (y.size() != n || z.size() != n || intensity.size() != n)
    throw Error(ErrorCode::LengthMismatch, "scan coordinate and intensity arrays differ in length");
}

void LabeledScan::check() const {
  scan.check();
  if (labels.size() != scan.size())
    throw Error(ErrorCode::LengthMismatch, "label count " + std::to_string(labels.size()) +
                                               " != point count " + std::to_string(scan.size()));
}

NormalField NormalField::invalid(std::size_t n) {
  NormalField field;
  field.normals.assign(n, Eigen::Vector3f::Zero());
  field.cos_incidence.assign(n, 0.0);
  field.valid.assign(n, 0);
  return field;
}

std::vector<std::size_t> valid_point_indices(const RawScan& scan, const SensorModel& sensor) {
  scan.check();
  std::vector<std::size_t> kept;
  kept.reserve(scan.size());
  for (std::size_t i = 0; i < scan.size(); ++i) {
    if (!std::isfinite(scan.x[i]) || !std::isfinite(scan.y[i]) || !std::isfinite(scan.z[i])) continue;
    const double r = scan.range(i);
    if (r == 0.0 || r > sensor.max_range) continue;
    kept.push_back(i);
  }
  return kept;
}

RawScan select_points(const RawScan& scan, std::span<const std::size_t> indices) {
  RawScan out;
  out.reserve(indices.size());
  for (const auto i : indices) out.push_back(scan.x[i], scan.y[i], scan.z[i], scan.intensity[i]);
  return out;
}

RawScan validate_scan(const RawScan& scan, const SensorModel& sensor) {
  const auto kept = valid_point_indices(scan, sensor);
  return select_points(scan, kept);
}

LabeledScan validate_labeled(const LabeledScan& scan, const SensorModel& sensor) {
  scan.check();
  const auto kept = valid_point_indices(scan.scan, sensor);
  LabeledScan out;
  out.scan = select_points(scan.scan, kept);
  out.labels.reserve(kept.size());
  for (const auto i : kept) out.labels.push_back(scan.labels[i]);
  return out;
}

}  // namespace lidar_reflect
