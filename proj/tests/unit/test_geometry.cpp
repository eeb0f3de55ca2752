#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "lidar_reflect/error.hpp"
#include "lidar_reflect/geometry.hpp"
#include "lidar_reflect/kdtree.hpp"
#include "lidar_reflect/synth.hpp"
#include "test_support.hpp"

using namespace lidar_reflect;

namespace {

double angle_deg(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  return std::acos(std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

}  // namespace

TEST_SUITE("geometry") {
  TEST_CASE("angle_of_incidence examples") {
    const Eigen::Vector3d p(5, 0, 0), o = Eigen::Vector3d::Zero();
    CHECK(angle_of_incidence(p, {-1, 0, 0}, o) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(angle_of_incidence(p, {0, 0, 1}, o) == doctest::Approx(0.0));
    const double h = std::sqrt(2.0) / 2.0;
    CHECK(angle_of_incidence(p, {-h, 0, h}, o) == doctest::Approx(0.70710678118654752).epsilon(1e-12));
    // Back-facing normals give the same cosine.
    CHECK(angle_of_incidence(p, {1, 0, 0}, o) == doctest::Approx(1.0));
    CHECK_THROWS_AS(angle_of_incidence(o, {1, 0, 0}, o), Error);
  }

  TEST_CASE("single point along +x lands in the center column") {
    const auto sensor = test::make_sensor(64, 2048);
    RawScan scan;
    // Center of row 32.
    const double pitch = sensor.fov_down + (1.0 - 32.5 / 64.0) * (sensor.fov_up - sensor.fov_down);
    scan.push_back(static_cast<float>(10 * std::cos(pitch)), 0.0f, static_cast<float>(10 * std::sin(pitch)), 5.0f);
    const auto image = spherical_project(scan, sensor);
    const auto p = image.pixel(32, 1024);
    CHECK(image.valid()[p] == 1);
    CHECK(image.point_index()[p] == 0);
    CHECK(std::count(image.valid().begin(), image.valid().end(), 1) == 1);
    CHECK(image.at(p, image.channel_index(Channel::intensity)) == 5.0f);
  }

  TEST_CASE("column convention follows yaw") {
    const auto sensor = test::make_sensor(16, 8, 0.3, -0.3);
    // yaw +90 deg (+y) -> u = floor(0.25 * 8) = 2; yaw -90 deg -> 6
    CHECK(project_point(0, 5, 0, sensor)->col == 2);
    CHECK(project_point(0, -5, 0, sensor)->col == 6);
    // top of the field of view is row 0
    CHECK(project_point(5, 0, 5 * std::tan(0.29), sensor)->row == 0);
    CHECK(project_point(5, 0, -5 * std::tan(0.29), sensor)->row == 15);
    CHECK_FALSE(project_point(5, 0, 5, sensor).has_value());
    CHECK_FALSE(project_point(0, 0, 0, sensor).has_value());
  }

  TEST_CASE("nearer point wins a shared pixel") {
    const auto sensor = test::make_sensor(64, 2048);
    RawScan scan;
    scan.push_back(9, 0, 0, 1);
    scan.push_back(5, 0, 0, 2);
    const auto image = spherical_project(scan, sensor);
    const auto p = image.pixel(project_point(5, 0, 0, sensor)->row, project_point(5, 0, 0, sensor)->col);
    CHECK(image.at(p, 0) == 5.0f);
    CHECK(image.point_index()[p] == 1);
  }

  TEST_CASE("range ties go to the lower index") {
    const auto sensor = test::make_sensor(64, 2048);
    RawScan scan;
    scan.push_back(7, 0, 0, 1);
    scan.push_back(7, 0, 0, 2);
    scan.push_back(7, 0, 0, 3);
    const auto image = spherical_project(scan, sensor);
    CHECK(std::find(image.point_index().begin(), image.point_index().end(), 0) != image.point_index().end());
    CHECK(std::count(image.valid().begin(), image.valid().end(), 1) == 1);
  }

  TEST_CASE("random projection satisfies the range invariant") {
    std::mt19937_64 rng(65536);
    const auto sensor = test::make_sensor(64, 2048);
    const auto scan = test::random_scan(rng, 65536);
    std::vector<float> refl(scan.size());
    std::iota(refl.begin(), refl.end(), 0.0f);
    const auto image = spherical_project(scan, sensor, std::span<const float>(refl));
    std::size_t valid = 0;
    for (std::size_t p = 0; p < image.pixel_count(); ++p) {
      if (!image.valid()[p]) {
        CHECK(image.point_index()[p] == -1);
        for (std::size_t c = 0; c < 6; ++c) CHECK(image.at(p, c) == 0.0f);
        continue;
      }
      ++valid;
      const double x = image.at(p, 1), y = image.at(p, 2), z = image.at(p, 3);
      const double norm = std::sqrt(x * x + y * y + z * z);
      CHECK(std::abs(image.at(p, 0) - norm) <= 1e-5 * norm);
      const auto i = static_cast<std::size_t>(image.point_index()[p]);
      CHECK(image.at(p, 1) == scan.x[i]);
      CHECK(image.at(p, 4) == scan.intensity[i]);
      CHECK(image.at(p, 5) == refl[i]);
    }
    CHECK(valid > 30000);
  }

  TEST_CASE("projection is stable under point permutation") {
    std::mt19937_64 rng(5);
    const auto sensor = test::make_sensor(32, 256);
    const auto scan = test::random_scan(rng, 20000);
    std::vector<std::size_t> perm(scan.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto shuffled = select_points(scan, perm);
    const auto a = spherical_project(scan, sensor);
    const auto b = spherical_project(shuffled, sensor);
    CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin(), b.data().end()));
    CHECK(a.valid() == b.valid());
  }

  TEST_CASE("assemble_channels layouts") {
    std::mt19937_64 rng(2);
    const auto sensor = test::make_sensor(16, 64);
    const auto scan = test::random_scan(rng, 3000);
    const auto plain = spherical_project(scan, sensor);
    const auto t5 = assemble_channels(plain, Layout::rxyzi);
    CHECK(t5.channels.size() == 5);
    CHECK(t5.data.size() == plain.pixel_count() * 5);
    CHECK_THROWS_AS(assemble_channels(plain, Layout::rxyzirn), Error);
    try {
      assemble_channels(plain, Layout::rxyzn);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MissingChannel);
    }

    std::vector<float> refl(scan.size());
    for (auto& v : refl) v = std::uniform_real_distribution<float>(0, 1)(rng);
    const auto full = spherical_project(scan, sensor, std::span<const float>(refl));
    const auto tn = assemble_channels(full, Layout::rxyzn);
    const auto t6 = assemble_channels(full, Layout::rxyzirn);
    CHECK(tn.channels.size() == 5);
    CHECK(t6.channels.size() == 6);
    const auto rc = full.channel_index(Channel::reflectivity);
    const auto ic = full.channel_index(Channel::intensity);
    for (std::size_t p = 0; p < full.pixel_count(); ++p) {
      CHECK(tn.data[p * 5 + 4] == full.at(p, rc));
      CHECK(t6.data[p * 6 + 4] == full.at(p, ic));
      CHECK(t6.data[p * 6 + 5] == full.at(p, rc));
      CHECK(t5.data[p * 5 + 0] == plain.at(p, 0));
    }
    CHECK(layout_channels(Layout::rxyzirn) ==
          std::vector<Channel>{Channel::range, Channel::x, Channel::y, Channel::z, Channel::intensity,
                               Channel::reflectivity});
    CHECK(parse_layout("rxyzn") == Layout::rxyzn);
    CHECK_THROWS_AS(parse_layout("xyz"), Error);
  }

  TEST_CASE("ground plane normals point up") {
    auto spec = test::ground_scene(64, 2048);
    const auto gen = generate_scene(spec);
    const auto& scan = gen.labeled.scan;
    const auto sensor = test::frame_sensor(spec);
    for (const auto method : {NormalMethod::image_grid, NormalMethod::knn_pca}) {
      CAPTURE(to_string(method));
      PipelineConfig config;
      config.normal_method = method;
      const auto field = compute_normals(scan, sensor, config);
      std::size_t checked = 0, valid = 0;
      double worst = 0.0;
      for (std::size_t i = 0; i < scan.size(); ++i) {
        if (!field.valid[i]) continue;
        ++valid;
        const auto px = project_point(scan.x[i], scan.y[i], scan.z[i], sensor);
        // Away from the image border rows.
        if (px->row <= 0 || px->row >= sensor.rows - 1) continue;
        worst = std::max(worst, angle_deg(field.normals[i].cast<double>(), {0, 0, 1}));
        CHECK(std::abs(field.cos_incidence[i] - gen.truth.true_cos_incidence[i]) < 0.035);
        ++checked;
      }
      CHECK(valid > scan.size() * 3 / 4);
      CHECK(checked > 0);
      CHECK(worst < 2.0);
    }
  }

  TEST_CASE("face-on wall gives cosine one") {
    auto sensor = test::make_sensor(64, 512, 0.3, -0.3);
    SceneSpec spec;
    spec.sensor = sensor;
    spec.materials = {{1, 0.5}};
    Plane wall;
    wall.point = {10, 0, 0};
    wall.normal = {-1, 0, 0};
    spec.surfaces = {wall};
    spec.eta_params = EtaParams::from_lumped(0.02, 1.5);
    auto scan = generate_scene(spec).labeled.scan;
    scan.push_back(10, 0, 0, 1);
    const auto field = compute_normals_image_grid(scan, sensor);
    const auto last = scan.size() - 1;
    REQUIRE(field.valid[last]);
    CHECK(field.cos_incidence[last] == doctest::Approx(1.0).epsilon(1e-6));
    const auto knn = compute_normals_knn(scan, sensor, 16);
    REQUIRE(knn.valid[last]);
    CHECK(knn.cos_incidence[last] == doctest::Approx(1.0).epsilon(1e-6));
  }

  TEST_CASE("isolated points have no normal") {
    const auto sensor = test::make_sensor();
    RawScan scan;
    scan.push_back(10, 0, 0, 1);
    scan.push_back(0, 30, -2, 1);
    const auto grid = compute_normals_image_grid(scan, sensor);
    const auto knn = compute_normals_knn(scan, sensor, 16);
    for (std::size_t i = 0; i < scan.size(); ++i) {
      CHECK_FALSE(grid.valid[i]);
      CHECK_FALSE(knn.valid[i]);
    }
    const auto empty = compute_normals_image_grid(RawScan{}, sensor);
    CHECK(empty.size() == 0);
  }

  TEST_CASE("normals face the sensor with unit length") {
    const auto spec = test::box_scene(0.0, 3);
    const auto scan = generate_scene(spec).labeled.scan;
    const auto sensor = test::frame_sensor(spec);
    for (const auto method : {NormalMethod::image_grid, NormalMethod::knn_pca}) {
      PipelineConfig config;
      config.normal_method = method;
      const auto field = compute_normals(scan, sensor, config);
      std::size_t bad = 0, valid = 0;
      for (std::size_t i = 0; i < scan.size(); ++i) {
        if (!field.valid[i]) continue;
        ++valid;
        const Eigen::Vector3d n = field.normals[i].cast<double>();
        if (std::abs(n.norm() - 1.0) > 1e-6) ++bad;
        if (n.dot(sensor.origin - scan.point(i)) < 0.0) ++bad;
        if (!(field.cos_incidence[i] >= 0.0 && field.cos_incidence[i] <= 1.0)) ++bad;
      }
      CHECK(bad == 0);
      CHECK(valid > scan.size() / 2);
    }
  }

  TEST_CASE("kd-tree matches brute force") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-10, 10);
    std::vector<Eigen::Vector3d> pts(3000);
    for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
    // Exact duplicates exercise the index tie-break.
    for (int i = 0; i < 50; ++i) pts[i + 100] = pts[i];
    const KdTree tree(pts);
    std::vector<std::uint32_t> idx;
    std::vector<double> d2;
    for (int q = 0; q < 200; ++q) {
      const Eigen::Vector3d query = q < 50 ? pts[q] : Eigen::Vector3d(u(rng), u(rng), u(rng));
      tree.knn(query, 12, idx, d2);
      std::vector<std::pair<double, std::uint32_t>> all;
      for (std::uint32_t i = 0; i < pts.size(); ++i) all.emplace_back((pts[i] - query).squaredNorm(), i);
      std::sort(all.begin(), all.end());
      REQUIRE(idx.size() == 12);
      for (std::size_t j = 0; j < 12; ++j) {
        CHECK(idx[j] == all[j].second);
        CHECK(d2[j] == all[j].first);
      }
    }
    tree.knn(pts[0], 5000, idx, d2);
    CHECK(idx.size() == pts.size());
  }
}
