#include <doctest.h>

#include <omp.h>

#include <algorithm>
#include <random>

#include "lidar_reflect/calibration.hpp"
#include "lidar_reflect/geometry.hpp"
#include "lidar_reflect/reference.hpp"
#include "lidar_reflect/synth.hpp"
#include "test_support.hpp"

using namespace lidar_reflect;

namespace {

struct ThreadGuard {
  int saved = omp_get_max_threads();
  explicit ThreadGuard(int n) { omp_set_num_threads(n); }
  ~ThreadGuard() { omp_set_num_threads(saved); }
};

void check_same(const RangeImage& a, const RangeImage& b) {
  REQUIRE(a.rows() == b.rows());
  REQUIRE(a.cols() == b.cols());
  CHECK(a.channels() == b.channels());
  CHECK(a.valid() == b.valid());
  CHECK(a.point_index() == b.point_index());
  const auto da = a.data(), db = b.data();
  CHECK(std::equal(da.begin(), da.end(), db.begin(), db.end(),
                   [](float x, float y) { return std::memcmp(&x, &y, sizeof x) == 0; }));
}

void check_same(const NormalField& a, const NormalField& b) {
  REQUIRE(a.normals.size() == b.normals.size());
  CHECK(a.valid == b.valid);
  CHECK(test::same_bits(a.cos_incidence, b.cos_incidence));
  for (std::size_t i = 0; i < a.normals.size(); ++i)
    if (a.valid[i]) CHECK(a.normals[i] == b.normals[i]);
}

}  // namespace

TEST_SUITE("reference") {
  TEST_CASE("projection matches the serial kernel") {
    std::mt19937_64 rng(31);
    const auto sensor = test::make_sensor(32, 256);
    auto scan = test::random_scan(rng, 40000);
    // Duplicates exercise the lower-index tie rule.
    for (std::size_t i = 0; i < 500; ++i) scan.push_back(scan.x[i], scan.y[i], scan.z[i], scan.intensity[i] + 1.0f);
    std::vector<float> refl(scan.size());
    for (std::size_t i = 0; i < refl.size(); ++i) refl[i] = static_cast<float>(i);
    const auto expected = reference::spherical_project(scan, sensor, std::span<const float>(refl));
    for (int threads : {1, 2, 4}) {
      CAPTURE(threads);
      ThreadGuard g(threads);
      check_same(spherical_project(scan, sensor, std::span<const float>(refl)), expected);
    }
  }

  TEST_CASE("image-grid normals match the serial kernel") {
    const auto spec = test::box_scene(0.05, 17);
    const auto gen = generate_scene(spec);
    const auto sensor = test::frame_sensor(spec);
    const auto expected = reference::compute_normals_image_grid(gen.labeled.scan, sensor);
    for (int threads : {1, 3}) {
      CAPTURE(threads);
      ThreadGuard g(threads);
      check_same(compute_normals_image_grid(gen.labeled.scan, sensor), expected);
    }
  }

  TEST_CASE("calibration matches the serial kernel") {
    const auto spec = test::box_scene(0.05, 18);
    const auto gen = generate_scene(spec);
    const auto sensor = test::frame_sensor(spec);
    const PipelineConfig config;
    const auto normals = compute_normals(gen.labeled.scan, sensor, config);
    EtaTable table;
    for (double c = 0.125; c < 12.0; c += 0.25) {
      table.bin_centers.push_back(c);
      table.eta.push_back(eta_at(spec.eta_params, c));
      table.sample_counts.push_back(1);
    }
    for (const EtaModel& model : {EtaModel{spec.eta_params}, EtaModel{table}}) {
      const auto expected = reference::calibrate_scan(gen.labeled.scan, normals, model, config);
      for (int threads : {1, 4}) {
        ThreadGuard g(threads);
        const auto got = calibrate_scan(gen.labeled.scan, normals, model, config);
        CHECK(test::same_bits(got.reflectivity, expected.reflectivity));
        CHECK(got.valid == expected.valid);
      }
    }
  }
}
