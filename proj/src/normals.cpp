#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Eigenvalues>

#include "lidar_reflect/geometry.hpp"
#include "lidar_reflect/kdtree.hpp"

namespace lidar_reflect {

namespace {

bool same_surface(double neighbor_range, double center_range) {
  return std::abs(neighbor_range - center_range) <= kDepthJumpRatio * center_range;
}

// Flips `n` toward the sensor and returns the incidence cosine.
double orient_and_cosine(Eigen::Vector3d& n, const Eigen::Vector3d& point, const Eigen::Vector3d& origin) {
  const Eigen::Vector3d to_sensor = origin - point;
  const double len = to_sensor.norm();
  if (!(len > 0.0)) return 0.0;
  double c = n.dot(to_sensor) / len;
  if (c < 0.0) {
    n = -n;
    c = -c;
  }
  return std::min(c, 1.0);
}

}  // namespace

NormalField compute_normals_image_grid(const RawScan& scan, const SensorModel& sensor) {
  const auto projection = project_scan(scan, sensor);
  const RangeImage& image = projection.image;
  const int rows = image.rows();
  const int cols = image.cols();
  const auto pixels = static_cast<std::int64_t>(image.pixel_count());

  std::vector<Eigen::Vector3f> pixel_normal(image.pixel_count(), Eigen::Vector3f::Zero());
  std::vector<std::uint8_t> pixel_ok(image.pixel_count(), 0);

  auto xyz = [&](std::size_t p) -> Eigen::Vector3d { return {image.at(p, 1), image.at(p, 2), image.at(p, 3)}; };

#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < pixels; ++p) {
    if (!image.valid()[p]) continue;
    const int r = static_cast<int>(p / cols);
    const int c = static_cast<int>(p % cols);
    const double rc = projection.range_of[image.point_index()[p]];
    auto usable = [&](int rr, int cc) -> bool {
      if (rr < 0 || rr >= rows) return false;
      const auto q = image.pixel(rr, cc);
      return image.valid()[q] && same_surface(projection.range_of[image.point_index()[q]], rc);
    };
    // Central difference where both sides belong to the same surface,
    // one-sided otherwise.
    auto tangent = [&](int r0, int c0, int r1, int c1, Eigen::Vector3d& t) -> bool {
      const bool has0 = usable(r0, c0);
      const bool has1 = usable(r1, c1);
      const Eigen::Vector3d center = xyz(static_cast<std::size_t>(p));
      if (has0 && has1) {
        t = xyz(image.pixel(r1, c1)) - xyz(image.pixel(r0, c0));
      } else if (has1) {
        t = xyz(image.pixel(r1, c1)) - center;
      } else if (has0) {
        t = center - xyz(image.pixel(r0, c0));
      } else {
        return false;
      }
      return true;
    };
    const int left = (c + cols - 1) % cols;
    const int right = (c + 1) % cols;
    Eigen::Vector3d th, tv;
    if (!tangent(r, left, r, right, th) || !tangent(r - 1, c, r + 1, c, tv)) continue;
    Eigen::Vector3d n = th.cross(tv);
    const double scale = th.norm() * tv.norm();
    const double len = n.norm();
    if (!(len > 1e-9 * scale) || !(scale > 0.0)) continue;
    pixel_normal[p] = (n / len).cast<float>();
    pixel_ok[p] = 1;
  }

  NormalField field = NormalField::invalid(scan.size());
  const auto n = static_cast<std::int64_t>(scan.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto p = projection.pixel_of[i];
    if (p < 0 || !pixel_ok[p]) continue;
    const auto w = image.point_index()[p];
    if (w != i && !same_surface(projection.range_of[i], projection.range_of[w])) continue;
    Eigen::Vector3d normal = pixel_normal[p].cast<double>().normalized();
    const double c = orient_and_cosine(normal, scan.point(i), sensor.origin);
    field.normals[i] = normal.cast<float>();
    field.cos_incidence[i] = c;
    field.valid[i] = 1;
  }
  return field;
}

NormalField compute_normals_knn(const RawScan& scan, const SensorModel& sensor, std::size_t k) {
  std::vector<Eigen::Vector3d> points(scan.size());
  for (std::size_t i = 0; i < scan.size(); ++i) points[i] = scan.point(i);
  const KdTree tree(points);

  NormalField field = NormalField::invalid(scan.size());
  const auto n = static_cast<std::int64_t>(scan.size());
#pragma omp parallel
  {
    std::vector<std::uint32_t> idx;
    std::vector<double> d2;
#pragma omp for schedule(dynamic, 256)
    for (std::int64_t i = 0; i < n; ++i) {
      const Eigen::Vector3d& q = points[i];
      // Point spacing grows linearly with range, so the neighborhood gate does too.
      const double gate = std::max(kKnnMinRadius, kKnnRadiusRatio * (q - sensor.origin).norm());
      tree.knn(q, k, idx, d2);
      Eigen::Vector3d mean = Eigen::Vector3d::Zero();
      std::size_t used = 0;
      for (std::size_t j = 0; j < idx.size() && d2[j] <= gate * gate; ++j, ++used) mean += points[idx[j]];
      if (used < 3) continue;
      mean /= static_cast<double>(used);
      Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
      for (std::size_t j = 0; j < used; ++j) {
        const Eigen::Vector3d dv = points[idx[j]] - mean;
        cov += dv * dv.transpose();
      }
      const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
      const auto& ev = solver.eigenvalues();
      // Collinear or coincident neighborhoods have no defined plane.
      if (!(ev[2] > 0.0) || !(ev[1] > 1e-10 * ev[2])) continue;
      Eigen::Vector3d normal = solver.eigenvectors().col(0).normalized();
      const double c = orient_and_cosine(normal, q, sensor.origin);
      field.normals[i] = normal.cast<float>();
      field.cos_incidence[i] = c;
      field.valid[i] = 1;
    }
  }
  return field;
}

}  // namespace lidar_reflect
