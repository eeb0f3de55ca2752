#include <doctest.h>

#include <cmath>
#include <random>

#include "lidar_reflect/calibration.hpp"
#include "lidar_reflect/error.hpp"
#include "lidar_reflect/geometry.hpp"
#include "lidar_reflect/synth.hpp"
#include "test_support.hpp"

using namespace lidar_reflect;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidValue;
}

double model(double a, double d, double r) { return 1.0 - std::exp(-a * (r + d) * (r + d)); }

LabeledScan single_point(float x, float intensity, ClassId label) {
  LabeledScan ls;
  ls.scan.push_back(x, 0, 0, intensity);
  ls.labels = {label};
  return ls;
}

NormalField one_normal(double cosine, bool valid = true) {
  NormalField f = NormalField::invalid(1);
  f.normals[0] = Eigen::Vector3f(-1, 0, 0);
  f.cos_incidence[0] = cosine;
  f.valid[0] = valid ? 1 : 0;
  return f;
}

EtaTable table_from_model(double a, double d, double width = 0.25, double rn = 12.0) {
  EtaTable t;
  t.near_range_threshold = rn;
  for (double c = width / 2; c < rn; c += width) {
    t.bin_centers.push_back(c);
    t.eta.push_back(model(a, d, c));
    t.sample_counts.push_back(1000);
  }
  return t;
}

struct Dataset {
  std::vector<LabeledScan> scans;
  std::vector<NormalField> normals;
  std::vector<GroundTruth> truth;
};

Dataset make_dataset(const SceneSpec& base, int count, const PipelineConfig& config) {
  Dataset d;
  const auto sensor = test::frame_sensor(base);
  for (int k = 0; k < count; ++k) {
    SceneSpec spec = base;
    spec.seed = base.seed + k;
    auto gen = generate_scene(spec);
    d.normals.push_back(compute_normals(gen.labeled.scan, sensor, config));
    d.scans.push_back(std::move(gen.labeled));
    d.truth.push_back(std::move(gen.truth));
  }
  return d;
}

ClassReflectivity centroids_of(const Dataset& d, const PipelineConfig& config) {
  std::vector<ClassSample> samples;
  for (std::size_t i = 0; i < d.scans.size(); ++i) {
    const auto s = far_range_samples(d.scans[i], d.normals[i], config);
    samples.insert(samples.end(), s.begin(), s.end());
  }
  return class_centroids(samples);
}

}  // namespace

TEST_SUITE("calibration") {
  TEST_CASE("far_range_samples substitutes I R^2 / cos") {
    const PipelineConfig config;
    const auto out = far_range_samples(single_point(20, 2.0f, 3), one_normal(0.5), config);
    REQUIRE(out.size() == 1);
    CHECK(out[0].class_id == 3);
    CHECK(out[0].value == 1600.0);
  }

  TEST_CASE("far_range_samples gating") {
    const PipelineConfig config;
    CHECK(far_range_samples(single_point(5, 2.0f, 3), one_normal(0.5), config).empty());
    CHECK(far_range_samples(single_point(12, 2.0f, 3), one_normal(0.5), config).empty());
    CHECK(far_range_samples(single_point(20, 2.0f, 3), one_normal(0.05), config).empty());
    CHECK(far_range_samples(single_point(20, 2.0f, 0), one_normal(0.5), config).empty());
    CHECK(far_range_samples(single_point(20, 2.0f, 3), one_normal(0.5, false), config).empty());
    CHECK(far_range_samples(single_point(20, 2.0f, 3), one_normal(0.1), config).size() == 1);
  }

  TEST_CASE("class_centroids on constant samples") {
    const std::vector<ClassSample> s{{3, 100}, {3, 100}, {3, 100}};
    const auto c = class_centroids(s);
    const auto* st = c.find(3);
    REQUIRE(st);
    CHECK(st->centroid == 100.0);
    CHECK(st->mean == 100.0);
    CHECK(st->variance == 0.0);
    CHECK(st->count == 3);
  }

  TEST_CASE("class_centroids discards outliers beyond 3 MAD") {
    const std::vector<ClassSample> s{{1, 90}, {1, 100}, {1, 110}, {1, 10000}};
    const auto* st = class_centroids(s).find(1);
    REQUIRE(st);
    CHECK(st->centroid == 105.0);
    CHECK(st->count == 3);
    CHECK(st->mean == doctest::Approx(100.0).epsilon(1e-12));
    CHECK(st->variance == doctest::Approx(66.66666666666667).epsilon(1e-12));
  }

  TEST_CASE("class_centroids on empty input") {
    CHECK(code_of([] { class_centroids(std::vector<ClassSample>{}); }) == ErrorCode::NoSamples);
  }

  TEST_CASE("eta_at on tables") {
    EtaTable t;
    t.near_range_threshold = 12.0;
    t.bin_centers = {1.0, 2.0, 3.0};
    t.eta = {0.2, 0.4, 0.6};
    t.sample_counts = {1, 1, 1};
    CHECK(eta_at(t, 22.0) == 1.0);
    CHECK(eta_at(t, 12.0) == 1.0);
    CHECK(eta_at(t, 2.0) == 0.4);
    CHECK(eta_at(t, 2.5) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(eta_at(t, 0.5) == 0.2);
    CHECK(eta_at(t, 7.0) == 0.6);
    CHECK(code_of([&] { eta_at(t, 0.0); }) == ErrorCode::NonPositiveRange);
    CHECK(code_of([&] { eta_at(t, -1.0); }) == ErrorCode::NonPositiveRange);
    const auto p = EtaParams::from_lumped(0.02, 1.5);
    CHECK(eta_at(p, 20.0) == doctest::Approx(model(0.02, 1.5, 20.0)).epsilon(1e-14));
    CHECK(code_of([&] { eta_at(p, 0.0); }) == ErrorCode::NonPositiveRange);
    CHECK(eta_at(EtaModel{t}, 2.5) == eta_at(t, 2.5));
  }

  TEST_CASE("EtaParams lumping") {
    const auto p = EtaParams::from_lumped(0.02, 1.5);
    CHECK(p.r_d == doctest::Approx(0.1));
    CHECK(p.lumped_a() == doctest::Approx(0.02).epsilon(1e-14));
    EtaParams q{0.05, 1.0, 0.5, 0.2};
    CHECK(q.lumped_a() == doctest::Approx(2 * 0.05 * 0.05 / (0.25 * 0.04)));
    CHECK_THROWS_AS((EtaParams{0.0, 1.0, 1.0, 1.0}.check()), Error);
  }

  TEST_CASE("fitted eta is strictly increasing") {
    const auto p = fit_eta_params(table_from_model(0.02, 1.5));
    double prev = 0.0;
    for (double r = 0.05; r < 12.0; r += 0.05) {
      const double v = eta_at(p, r);
      CHECK(v > prev);
      prev = v;
    }
  }

  TEST_CASE("fit recovers exact parameters") {
    const auto fit = fit_eta_lumped(table_from_model(0.02, 1.5));
    CHECK(std::abs(fit.a - 0.02) / 0.02 < 0.01);
    CHECK(std::abs(fit.d - 1.5) / 1.5 < 0.01);
    CHECK(fit.objective <= fit.grid_objective);
    const auto params = fit.params();
    CHECK(params.D == 1.0);
    CHECK(params.S == 1.0);
    CHECK(params.r_d == doctest::Approx(std::sqrt(fit.a / 2)));
  }

  TEST_CASE("fit with additive noise") {
    std::mt19937_64 rng(20);
    std::normal_distribution<double> noise(0.0, 0.02);
    auto t = table_from_model(0.02, 1.5);
    for (auto& e : t.eta) e = std::clamp(e + noise(rng), 1e-3, 1.0);
    const auto fit = fit_eta_lumped(t);
    CHECK(std::abs(fit.a - 0.02) / 0.02 < 0.10);
  }

  TEST_CASE("fit on an all-ones table diverges") {
    auto t = table_from_model(0.02, 1.5);
    for (auto& e : t.eta) e = 1.0;
    CHECK(code_of([&] { fit_eta_lumped(t); }) == ErrorCode::FitDiverged);
  }

  TEST_CASE("fit needs four populated bins") {
    auto t = table_from_model(0.02, 1.5);
    for (std::size_t b = 3; b < t.size(); ++b) t.sample_counts[b] = 0;
    CHECK(code_of([&] { fit_eta_lumped(t); }) == ErrorCode::InsufficientData);
  }

  TEST_CASE("calibrate_scan identity examples") {
    const PipelineConfig config;
    EtaTable ones;
    ones.near_range_threshold = 12.0;
    ones.bin_centers = {0.5, 1.5, 2.5};
    ones.eta = {1, 1, 1};
    ones.sample_counts = {1, 1, 1};
    RawScan scan;
    scan.push_back(1, 0, 0, 100);
    scan.push_back(0, 2, 0, 25);
    scan.push_back(0, 0, 3, 7);
    NormalField f = NormalField::invalid(3);
    f.cos_incidence = {1.0, 1.0, 0.05};
    f.valid = {1, 1, 1};
    const auto out = calibrate_scan(scan, f, ones, config);
    CHECK(out.reflectivity[0] == 100.0f);
    CHECK(out.reflectivity[1] == 100.0f);
    // cos below the floor is clamped to it
    CHECK(out.reflectivity[2] == doctest::Approx(7.0 * 9.0 / 0.1));
    f.valid[1] = 0;
    const auto partial = calibrate_scan(scan, f, ones, config);
    CHECK(partial.reflectivity[1] == 0.0f);
    CHECK(partial.valid[1] == 0);
    CHECK(partial.valid[0] == 1);
  }

  TEST_CASE("calibrate_scan rejects misaligned normals") {
    RawScan scan;
    scan.push_back(1, 0, 0, 1);
    CHECK(code_of([&] { calibrate_scan(scan, NormalField::invalid(2), EtaTable{}, PipelineConfig{}); }) ==
          ErrorCode::LengthMismatch);
  }

  TEST_CASE("calibrate_scan inverts the forward model") {
    const auto spec = test::box_scene(0.0, 21);
    const auto gen = generate_scene(spec);
    NormalField f = NormalField::invalid(gen.labeled.scan.size());
    f.cos_incidence = gen.truth.true_cos_incidence;
    std::fill(f.valid.begin(), f.valid.end(), 1);
    const auto out = calibrate_scan(gen.labeled.scan, f, spec.eta_params, PipelineConfig{});
    double worst = 0.0;
    for (std::size_t i = 0; i < out.reflectivity.size(); ++i) {
      const double expected = spec.emission_power * gen.truth.true_rho[i];
      worst = std::max(worst, std::abs(out.reflectivity[i] - expected) / expected);
    }
    CHECK(worst <= 1e-6);
  }

  TEST_CASE("calibrate_scan is homogeneous in intensity") {
    const auto spec = test::box_scene(0.05, 4);
    const auto gen = generate_scene(spec);
    const auto sensor = test::frame_sensor(spec);
    const auto f = compute_normals(gen.labeled.scan, sensor, PipelineConfig{});
    auto scaled = gen.labeled.scan;
    for (auto& v : scaled.intensity) v *= 3.0f;
    const auto a = calibrate_scan(gen.labeled.scan, f, spec.eta_params, PipelineConfig{});
    const auto b = calibrate_scan(scaled, f, spec.eta_params, PipelineConfig{});
    for (std::size_t i = 0; i < a.reflectivity.size(); ++i) {
      if (!a.valid[i]) continue;
      CHECK(std::abs(b.reflectivity[i] - 3.0 * a.reflectivity[i]) <= 1e-6 * 3.0 * a.reflectivity[i]);
    }
  }

  TEST_CASE("estimate_eta recovers the synthetic curve") {
    PipelineConfig config;
    const auto data = make_dataset(test::box_scene(0.05, 100), 8, config);
    const auto centroids = centroids_of(data, config);
    const auto table = estimate_eta(data.scans, data.normals, centroids, config);
    CHECK_NOTHROW(table.check());
    std::size_t checked = 0;
    for (std::size_t b = 0; b < table.size(); ++b) {
      CHECK(table.eta[b] > 0.0);
      CHECK(table.eta[b] <= 1.0);
      if (table.sample_counts[b] < config.min_bin_samples) continue;
      ++checked;
      CHECK(std::abs(table.eta[b] - model(0.02, 1.5, table.bin_centers[b])) <= 0.05);
    }
    CHECK(checked > 20);
  }

  TEST_CASE("estimate_eta on far-range-only data gives ones") {
    PipelineConfig config;
    auto data = make_dataset(test::box_scene(0.05, 200), 3, config);
    for (std::size_t s = 0; s < data.scans.size(); ++s) {
      std::vector<std::size_t> keep;
      for (std::size_t i = 0; i < data.scans[s].scan.size(); ++i)
        if (data.scans[s].scan.range(i) > config.near_range_threshold) keep.push_back(i);
      LabeledScan far;
      far.scan = select_points(data.scans[s].scan, keep);
      for (const auto k : keep) far.labels.push_back(data.scans[s].labels[k]);
      data.normals[s] = compute_normals(far.scan, test::frame_sensor(test::box_scene()), config);
      data.scans[s] = std::move(far);
    }
    const auto table = estimate_eta(data.scans, data.normals, centroids_of(data, config), config);
    REQUIRE(table.size() == 48);
    for (const double e : table.eta) CHECK(e == 1.0);
  }

  TEST_CASE("estimate_eta without populated bins") {
    PipelineConfig config;
    std::vector<LabeledScan> scans{single_point(5, 2.0f, 1)};
    std::vector<NormalField> normals{one_normal(1.0)};
    ClassReflectivity c;
    c.classes[1] = {1, 1, 50.0, 50.0, 0.0};
    CHECK(code_of([&] { estimate_eta(scans, normals, c, config); }) == ErrorCode::InsufficientData);
  }

  TEST_CASE("pooling classes matches a single-class estimate") {
    PipelineConfig config;
    auto spec = test::box_scene(0.0, 300);
    spec.materials = {{1, 0.1}, {2, 0.4}, {2, 0.4}};
    const auto pooled_data = make_dataset(spec, 6, config);
    const auto centroids = centroids_of(pooled_data, config);
    CHECK(centroids.find(1)->centroid == doctest::Approx(100.0).epsilon(0.02));
    CHECK(centroids.find(2)->centroid == doctest::Approx(400.0).epsilon(0.02));
    const auto pooled = estimate_eta(pooled_data.scans, pooled_data.normals, centroids, config);

    auto single_data = pooled_data;
    for (auto& s : single_data.scans)
      for (auto& l : s.labels)
        if (l == 2) l = kIgnoreClass;
    const auto single = estimate_eta(single_data.scans, single_data.normals, centroids_of(single_data, config), config);
    std::size_t compared = 0;
    for (std::size_t b = 0; b < pooled.size(); ++b) {
      if (single.sample_counts[b] < config.min_bin_samples || pooled.sample_counts[b] < config.min_bin_samples) continue;
      ++compared;
      CHECK(std::abs(pooled.eta[b] - single.eta[b]) <= 0.01);
    }
    CHECK(compared > 10);
  }

  TEST_CASE("estimate_eta is scale-equivariant") {
    PipelineConfig config;
    const auto data = make_dataset(test::box_scene(0.05, 400), 3, config);
    const auto c1 = centroids_of(data, config);
    const auto t1 = estimate_eta(data.scans, data.normals, c1, config);
    for (const float k : {4.0f, 0.5f}) {
      auto scaled = data;
      for (auto& s : scaled.scans)
        for (auto& v : s.scan.intensity) v *= k;
      const auto ck = centroids_of(scaled, config);
      for (const auto& [id, st] : c1.classes) CHECK(ck.find(id)->centroid == doctest::Approx(k * st.centroid).epsilon(1e-12));
      const auto tk = estimate_eta(scaled.scans, scaled.normals, ck, config);
      REQUIRE(tk.size() == t1.size());
      for (std::size_t b = 0; b < t1.size(); ++b) CHECK(std::abs(tk.eta[b] - t1.eta[b]) <= 1e-9 * t1.eta[b]);
    }
  }

  TEST_CASE("class_gaussians examples") {
    ReflectivityScan rs;
    for (int i = 0; i < 5; ++i) rs.scan.push_back(1, 0, 0, 0);
    rs.reflectivity = {10, 10, 10, 8, 12};
    rs.valid = {1, 1, 1, 1, 1};
    const std::vector<std::vector<ClassId>> labels{{1, 1, 1, 2, 2}};
    const auto g = class_gaussians(std::span<const ReflectivityScan>(&rs, 1), labels);
    CHECK(g.find(1)->mean == 10.0);
    CHECK(g.find(1)->variance == 0.0);
    CHECK(g.find(2)->mean == 10.0);
    CHECK(g.find(2)->variance == 4.0);
    rs.valid = {0, 0, 0, 0, 0};
    CHECK(code_of([&] { class_gaussians(std::span<const ReflectivityScan>(&rs, 1), labels); }) == ErrorCode::NoSamples);
  }

  TEST_CASE("class means are proportional to rho") {
    PipelineConfig config;
    auto spec = test::box_scene(0.05, 500);
    spec.materials = {{1, 0.25}, {2, 0.75}, {2, 0.75}};
    const auto data = make_dataset(spec, 3, config);
    std::vector<ReflectivityScan> cal;
    std::vector<std::vector<ClassId>> labels;
    for (std::size_t i = 0; i < data.scans.size(); ++i) {
      cal.push_back(calibrate_scan(data.scans[i].scan, data.normals[i], spec.eta_params, config));
      labels.push_back(data.scans[i].labels);
    }
    const auto g = class_gaussians(cal, labels);
    CHECK(g.find(2)->mean / g.find(1)->mean == doctest::Approx(3.0).epsilon(0.02));
    CHECK(g.find(1)->mean == doctest::Approx(250.0).epsilon(0.02));
  }

  TEST_CASE("variance collapses on noiseless scenes") {
    PipelineConfig config;
    const auto spec = test::box_scene(0.0, 600);
    const auto data = make_dataset(spec, 3, config);
    std::vector<ReflectivityScan> cal;
    std::vector<std::vector<ClassId>> labels;
    std::vector<ReflectivityScan> raw;
    for (std::size_t i = 0; i < data.scans.size(); ++i) {
      cal.push_back(calibrate_scan(data.scans[i].scan, data.normals[i], spec.eta_params, config));
      ReflectivityScan r;
      r.scan = data.scans[i].scan;
      r.reflectivity = data.scans[i].scan.intensity;
      r.valid.assign(r.reflectivity.size(), 1);
      raw.push_back(std::move(r));
      labels.push_back(data.scans[i].labels);
    }
    const auto g = class_gaussians(cal, labels);
    const auto gr = class_gaussians(raw, labels);
    for (const auto& [id, st] : g.classes) {
      CAPTURE(id);
      CHECK(std::sqrt(st.variance) / st.mean < 0.01);
      const auto* r = gr.find(id);
      CHECK(std::sqrt(r->variance) / r->mean > 0.5);
    }
  }

  TEST_CASE("gaussian_nll anchors") {
    ClassReflectivity s;
    s.classes[4] = {4, 1, 2.0, 2.0, 1.0};
    const std::vector<ClassId> l{4};
    CHECK(gaussian_nll(std::vector<double>{2.0}, l, s) == 0.0);
    CHECK(gaussian_nll(std::vector<double>{3.0}, l, s) == 0.5);
    CHECK(gaussian_nll(std::vector<float>{3.0f}, l, s) == 0.5);
    CHECK(gaussian_nll(std::vector<double>{3.0, 100.0}, std::vector<ClassId>{4, 0}, s) == 0.5);
    CHECK(code_of([&] { gaussian_nll(std::vector<double>{1.0}, std::vector<ClassId>{9}, s); }) ==
          ErrorCode::UnknownClass);
    s.classes[4].variance = 0.0;
    CHECK(gaussian_nll(std::vector<double>{2.001}, l, s) ==
          doctest::Approx(0.5 * (std::log(1e-6) + 1e-6 / 1e-6)).epsilon(1e-9));
  }

  TEST_CASE("gaussian_nll matches brute force") {
    std::mt19937_64 rng(1000);
    std::uniform_real_distribution<double> u(0, 500);
    ClassReflectivity s;
    s.classes[1] = {1, 10, 120, 118.5, 33.0};
    s.classes[2] = {2, 10, 300, 305.25, 410.0};
    std::vector<double> v(1000);
    std::vector<ClassId> l(1000);
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = u(rng);
      l[i] = static_cast<ClassId>(1 + (rng() % 2));
    }
    long double brute = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const auto& c = s.classes[l[i]];
      brute += 0.5L * (std::log(static_cast<long double>(c.variance)) +
                       (v[i] - c.mean) * (v[i] - c.mean) / static_cast<long double>(c.variance));
    }
    const double got = gaussian_nll(v, l, s);
    CHECK(std::abs(got - static_cast<double>(brute)) <= 1e-9 * std::abs(static_cast<double>(brute)));
  }

  TEST_CASE("gaussian_nll is minimized at the class mean") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-50, 50), var(0.01, 100);
    for (int t = 0; t < 200; ++t) {
      ClassReflectivity s;
      const double mean = u(rng);
      s.classes[1] = {1, 1, mean, mean, var(rng)};
      const std::vector<ClassId> l{1};
      const double at = gaussian_nll(std::vector<double>{mean}, l, s);
      const double delta = std::abs(u(rng)) + 1e-3;
      CHECK(gaussian_nll(std::vector<double>{mean + delta}, l, s) > at);
      CHECK(gaussian_nll(std::vector<double>{mean - delta}, l, s) > at);
    }
  }
}
