#include "lidar_reflect/reference.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Geometry>

#include "lidar_reflect/error.hpp"

namespace lidar_reflect::reference {

namespace {

double norm3(float x, float y, float z) {
  const double dx = x, dy = y, dz = z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace

RangeImage spherical_project(const RawScan& scan, const SensorModel& sensor,
                             std::optional<std::span<const float>> reflectivity) {
  scan.check();
  if (reflectivity && reflectivity->size() != scan.size())
    throw Error(ErrorCode::LengthMismatch, "reflectivity length differs from point count");
  std::vector<Channel> channels{Channel::range, Channel::x, Channel::y, Channel::z, Channel::intensity};
  if (reflectivity) channels.push_back(Channel::reflectivity);
  RangeImage image(sensor.rows, sensor.cols, std::move(channels));

  std::vector<double> best(image.pixel_count(), 0.0);
  for (std::size_t i = 0; i < scan.size(); ++i) {
    const auto px = project_point(scan.x[i], scan.y[i], scan.z[i], sensor);
    if (!px) continue;
    const auto p = image.pixel(px->row, px->col);
    const double r = norm3(scan.x[i], scan.y[i], scan.z[i]);
    if (image.valid()[p] && !(r < best[p])) continue;
    best[p] = r;
    image.valid()[p] = 1;
    image.point_index()[p] = static_cast<std::int32_t>(i);
    image.at(p, 0) = static_cast<float>(r);
    image.at(p, 1) = scan.x[i];
    image.at(p, 2) = scan.y[i];
    image.at(p, 3) = scan.z[i];
    image.at(p, 4) = scan.intensity[i];
    if (reflectivity) image.at(p, 5) = (*reflectivity)[i];
  }
  return image;
}

NormalField compute_normals_image_grid(const RawScan& scan, const SensorModel& sensor) {
  const RangeImage image = reference::spherical_project(scan, sensor, std::nullopt);
  const int rows = image.rows();
  const int cols = image.cols();

  auto range_at = [&](std::size_t p) { return norm3(scan.x[image.point_index()[p]], scan.y[image.point_index()[p]],
                                                    scan.z[image.point_index()[p]]); };
  auto xyz = [&](std::size_t p) -> Eigen::Vector3d { return {image.at(p, 1), image.at(p, 2), image.at(p, 3)}; };

  std::vector<Eigen::Vector3f> pixel_normal(image.pixel_count());
  std::vector<bool> pixel_ok(image.pixel_count(), false);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const auto p = image.pixel(r, c);
      if (!image.valid()[p]) continue;
      const double rc = range_at(p);
      auto neighbor = [&](int rr, int cc) -> bool {
        if (rr < 0 || rr >= rows) return false;
        const auto q = image.pixel(rr, cc);
        return image.valid()[q] && std::abs(range_at(q) - rc) <= kDepthJumpRatio * rc;
      };
      auto diff = [&](int r0, int c0, int r1, int c1, Eigen::Vector3d& t) {
        const bool a = neighbor(r0, c0), b = neighbor(r1, c1);
        if (a && b) t = xyz(image.pixel(r1, c1)) - xyz(image.pixel(r0, c0));
        else if (b) t = xyz(image.pixel(r1, c1)) - xyz(p);
        else if (a) t = xyz(p) - xyz(image.pixel(r0, c0));
        return a || b;
      };
      Eigen::Vector3d th, tv;
      if (!diff(r, (c + cols - 1) % cols, r, (c + 1) % cols, th)) continue;
      if (!diff(r - 1, c, r + 1, c, tv)) continue;
      const Eigen::Vector3d n = th.cross(tv);
      const double scale = th.norm() * tv.norm();
      if (!(scale > 0.0) || !(n.norm() > 1e-9 * scale)) continue;
      pixel_normal[p] = (n / n.norm()).cast<float>();
      pixel_ok[p] = true;
    }
  }

  NormalField field = NormalField::invalid(scan.size());
  for (std::size_t i = 0; i < scan.size(); ++i) {
    const auto px = project_point(scan.x[i], scan.y[i], scan.z[i], sensor);
    if (!px) continue;
    const auto p = image.pixel(px->row, px->col);
    if (!pixel_ok[p]) continue;
    const double ri = norm3(scan.x[i], scan.y[i], scan.z[i]);
    const double rw = range_at(p);
    if (static_cast<std::size_t>(image.point_index()[p]) != i && std::abs(ri - rw) > kDepthJumpRatio * rw) continue;
    Eigen::Vector3d n = pixel_normal[p].cast<double>().normalized();
    const Eigen::Vector3d to_sensor = sensor.origin - scan.point(i);
    if (!(to_sensor.norm() > 0.0)) continue;
    double cosine = n.dot(to_sensor) / to_sensor.norm();
    if (cosine < 0.0) {
      n = -n;
      cosine = -cosine;
    }
    field.normals[i] = n.cast<float>();
    field.cos_incidence[i] = std::min(cosine, 1.0);
    field.valid[i] = 1;
  }
  return field;
}

ReflectivityScan calibrate_scan(const RawScan& scan, const NormalField& normals, const EtaModel& eta,
                                const PipelineConfig& config) {
  scan.check();
  if (normals.size() != scan.size())
    throw Error(ErrorCode::LengthMismatch, "normal field does not align with the scan");
  ReflectivityScan out;
  out.scan = scan;
  out.reflectivity.assign(scan.size(), 0.0f);
  out.valid.assign(scan.size(), 0);
  for (std::size_t i = 0; i < scan.size(); ++i) {
    if (!normals.valid[i]) continue;
    const double r = scan.range(i);
    if (!(r > 0.0)) continue;
    const double cosine = std::max(normals.cos_incidence[i], config.cos_floor);
    const double value = static_cast<double>(scan.intensity[i]) * r * r / (cosine * eta_at(eta, r));
    if (!std::isfinite(value)) continue;
    out.reflectivity[i] = static_cast<float>(value);
    out.valid[i] = 1;
  }
  return out;
}

}  // namespace lidar_reflect::reference
