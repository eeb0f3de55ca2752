#include "lidar_reflect/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>

#include <json.hpp>

#include "binary_io.hpp"
#include "lidar_reflect/error.hpp"
#include "lidar_reflect/ingest.hpp"

namespace lidar_reflect {

namespace {

using nlohmann::json;

constexpr double kMinHitDistance = 1e-6;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  Eigen::Vector3d normal = Eigen::Vector3d::Zero();
  std::size_t material = 0;
};

std::optional<Hit> intersect(const Plane& plane, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) {
  const double denom = plane.normal.dot(dir);
  if (std::abs(denom) < 1e-12) return std::nullopt;
  const double t = plane.normal.dot(plane.point - origin) / denom;
  if (!(t > kMinHitDistance)) return std::nullopt;
  return Hit{t, plane.normal, plane.material};
}

std::optional<Hit> intersect(const Box& box, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) {
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  int axis_near = -1, axis_far = -1;
  for (int k = 0; k < 3; ++k) {
    if (dir[k] == 0.0) {
      if (origin[k] < box.min[k] || origin[k] > box.max[k]) return std::nullopt;
      continue;
    }
    double t0 = (box.min[k] - origin[k]) / dir[k];
    double t1 = (box.max[k] - origin[k]) / dir[k];
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > t_near) {
      t_near = t0;
      axis_near = k;
    }
    if (t1 < t_far) {
      t_far = t1;
      axis_far = k;
    }
  }
  if (t_near > t_far || !(t_far > kMinHitDistance)) return std::nullopt;
  // From inside the box the ray leaves through the far face.
  const bool inside = !(t_near > kMinHitDistance);
  const int axis = inside ? axis_far : axis_near;
  if (axis < 0) return std::nullopt;
  Hit hit;
  hit.t = inside ? t_far : t_near;
  hit.normal = Eigen::Vector3d::Unit(axis);
  hit.material = box.material;
  return hit;
}

template <typename T>
T get_field(const json& doc, const std::string& key) {
  if (!doc.contains(key)) throw Error(ErrorCode::MissingField, "scene spec: missing '" + key + "'");
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidValue, "scene spec: bad '" + key + "': " + e.what());
  }
}

Eigen::Vector3d get_vec3(const json& doc, const std::string& key) {
  const auto v = get_field<std::vector<double>>(doc, key);
  if (v.size() != 3) throw Error(ErrorCode::InvalidValue, "scene spec: '" + key + "' must have 3 components");
  return {v[0], v[1], v[2]};
}

void reject_unknown(const json& doc, const std::set<std::string>& allowed, const std::string& what) {
  for (const auto& [key, _] : doc.items())
    if (!allowed.contains(key)) throw Error(ErrorCode::InvalidValue, what + ": unknown field '" + key + "'");
}

}  // namespace

void SceneSpec::check() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidValue, "scene spec: " + msg); };
  sensor.check();
  eta_params.check();
  if (surfaces.empty()) fail("at least one surface is required");
  for (const auto& m : materials)
    if (!(m.rho > 0.0 && m.rho <= 1.0)) fail("material rho must lie in (0, 1]");
  for (const auto& s : surfaces) {
    const auto material = std::visit([](const auto& v) { return v.material; }, s);
    if (material >= materials.size()) fail("surface references unknown material");
    if (const auto* p = std::get_if<Plane>(&s); p && std::abs(p->normal.norm() - 1.0) > 1e-9)
      fail("plane normals must be unit length");
    if (const auto* b = std::get_if<Box>(&s); b && !(b->min.array() < b->max.array()).all())
      fail("box min must be below max on every axis");
  }
  if (!(emission_power > 0.0)) fail("emission_power must be positive");
  if (!(noise_sigma >= 0.0 && noise_sigma < 0.5)) fail("noise_sigma must lie in [0, 0.5)");
  if (!(max_incidence > 0.0 && max_incidence <= std::numbers::pi / 2.0)) fail("max_incidence must lie in (0, pi/2]");
  if (!(origin_jitter >= 0.0)) fail("origin_jitter must be non-negative");
}

double forward_intensity(double rho, double range, double cos_alpha, const EtaParams& eta, double emission_power,
                         double noise_sigma, std::mt19937_64& rng) {
  const double clean = eta_at(eta, range) * emission_power * rho * std::clamp(cos_alpha, 0.0, 1.0) / (range * range);
  if (noise_sigma <= 0.0) return clean;
  std::normal_distribution<double> gauss(0.0, noise_sigma);
  double eps = gauss(rng);
  while (std::abs(eps) > 3.0 * noise_sigma) eps = gauss(rng);
  return std::max(0.0, clean * (1.0 + eps));
}

Eigen::Vector3d pixel_direction(const SensorModel& sensor, int row, int col) {
  const double yaw = (0.5 - (col + 0.5) / sensor.cols) * 2.0 * std::numbers::pi;
  const double pitch = sensor.fov_down + (1.0 - (row + 0.5) / sensor.rows) * (sensor.fov_up - sensor.fov_down);
  return {std::cos(pitch) * std::cos(yaw), std::cos(pitch) * std::sin(yaw), std::sin(pitch)};
}

SyntheticScan generate_scene(const SceneSpec& spec) {
  spec.check();
  const auto& sensor = spec.sensor;

  Eigen::Vector3d origin = sensor.origin;
  if (spec.origin_jitter > 0.0) {
    std::mt19937_64 jitter_rng(splitmix64(spec.seed ^ 0x6A09E667F3BCC909ull));
    std::uniform_real_distribution<double> offset(-spec.origin_jitter, spec.origin_jitter);
    origin.x() += offset(jitter_rng);
    origin.y() += offset(jitter_rng);
  }
  const double min_cos = std::cos(spec.max_incidence);

  struct RowPoints {
    RawScan scan;
    std::vector<ClassId> labels;
    GroundTruth truth;
  };
  std::vector<RowPoints> rows(static_cast<std::size_t>(sensor.rows));

#pragma omp parallel for schedule(dynamic, 1)
  for (int r = 0; r < sensor.rows; ++r) {
    // Per-row streams keep the output independent of the thread count.
    std::mt19937_64 rng(splitmix64(spec.seed * 0x100000001B3ull + static_cast<std::uint64_t>(r)));
    auto& out = rows[r];
    for (int c = 0; c < sensor.cols; ++c) {
      const Eigen::Vector3d dir = pixel_direction(sensor, r, c);
      Hit best;
      for (const auto& surface : spec.surfaces) {
        const auto hit = std::visit([&](const auto& s) { return intersect(s, origin, dir); }, surface);
        if (hit && hit->t < best.t) best = *hit;
      }
      if (!(best.t <= sensor.max_range)) continue;
      if (std::abs(best.normal.dot(dir)) < min_cos) continue;

      const Eigen::Vector3d offset = best.t * dir;
      out.scan.push_back(static_cast<float>(offset.x()), static_cast<float>(offset.y()),
                         static_cast<float>(offset.z()), 0.0f);
      // Truth is evaluated at the emitted (float) coordinates, read back from
      // storage so the narrowing cannot be optimized away.
      const std::size_t k = out.scan.size() - 1;
      const Eigen::Vector3d p = out.scan.point(k);
      const double range = out.scan.range(k);
      if (!(range > 0.0) || range > sensor.max_range) {
        out.scan.pop_back();
        continue;
      }
      const double cos_a = std::abs(best.normal.dot(p)) / range;
      const auto& material = spec.materials[best.material];
      out.scan.intensity[k] = static_cast<float>(
          forward_intensity(material.rho, range, cos_a, spec.eta_params, spec.emission_power, spec.noise_sigma, rng));
      out.labels.push_back(material.class_id);
      out.truth.true_rho.push_back(material.rho);
      out.truth.true_cos_incidence.push_back(cos_a);
      out.truth.true_eta.push_back(eta_at(spec.eta_params, range));
      out.truth.true_range.push_back(range);
    }
  }

  SyntheticScan result;
  auto& scan = result.labeled.scan;
  auto& truth = result.truth;
  std::size_t total = 0;
  for (const auto& row : rows) total += row.scan.size();
  if (total == 0) throw Error(ErrorCode::EmptyScene, "no ray hit a surface within max_range");
  scan.reserve(total);
  result.labeled.labels.reserve(total);
  auto append = [](auto& dst, const auto& src) { dst.insert(dst.end(), src.begin(), src.end()); };
  for (const auto& row : rows) {
    append(scan.x, row.scan.x);
    append(scan.y, row.scan.y);
    append(scan.z, row.scan.z);
    append(scan.intensity, row.scan.intensity);
    append(result.labeled.labels, row.labels);
    append(truth.true_rho, row.truth.true_rho);
    append(truth.true_cos_incidence, row.truth.true_cos_incidence);
    append(truth.true_eta, row.truth.true_eta);
    append(truth.true_range, row.truth.true_range);
  }
  return result;
}

SceneSpec parse_scene_spec(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidValue, std::string("scene spec: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::InvalidValue, "scene spec: expected a JSON object");
  reject_unknown(doc,
                 {"sensor", "materials", "surfaces", "emission_power", "eta_params", "noise_sigma", "seed",
                  "max_incidence_deg", "origin_jitter"},
                 "scene spec");

  SceneSpec spec;
  spec.sensor = parse_sensor_config(get_field<json>(doc, "sensor").dump());
  for (const auto& m : get_field<json>(doc, "materials")) {
    reject_unknown(m, {"class_id", "rho"}, "scene material");
    const auto id = get_field<int>(m, "class_id");
    if (id < 0 || id > 0xFFFF) throw Error(ErrorCode::InvalidValue, "scene spec: class_id out of range");
    spec.materials.push_back({static_cast<ClassId>(id), get_field<double>(m, "rho")});
  }
  for (const auto& s : get_field<json>(doc, "surfaces")) {
    const auto type = get_field<std::string>(s, "type");
    const auto material = get_field<std::size_t>(s, "material");
    if (type == "plane") {
      reject_unknown(s, {"type", "material", "point", "normal"}, "scene plane");
      Plane p{get_vec3(s, "point"), get_vec3(s, "normal"), material};
      if (!(p.normal.norm() > 0.0)) throw Error(ErrorCode::InvalidValue, "scene spec: zero plane normal");
      p.normal.normalize();
      spec.surfaces.emplace_back(p);
    } else if (type == "box") {
      reject_unknown(s, {"type", "material", "min", "max"}, "scene box");
      spec.surfaces.emplace_back(Box{get_vec3(s, "min"), get_vec3(s, "max"), material});
    } else {
      throw Error(ErrorCode::InvalidValue, "scene spec: unknown surface type '" + type + "'");
    }
  }
  spec.emission_power = get_field<double>(doc, "emission_power");
  const auto eta = get_field<json>(doc, "eta_params");
  if (eta.contains("a")) {
    reject_unknown(eta, {"a", "d"}, "scene eta_params");
    spec.eta_params = EtaParams::from_lumped(get_field<double>(eta, "a"), get_field<double>(eta, "d"));
  } else {
    reject_unknown(eta, {"r_d", "d", "D", "S"}, "scene eta_params");
    spec.eta_params = {get_field<double>(eta, "r_d"), get_field<double>(eta, "d"), get_field<double>(eta, "D"),
                       get_field<double>(eta, "S")};
  }
  spec.noise_sigma = doc.contains("noise_sigma") ? get_field<double>(doc, "noise_sigma") : 0.0;
  spec.seed = doc.contains("seed") ? get_field<std::uint64_t>(doc, "seed") : 0;
  if (doc.contains("max_incidence_deg"))
    spec.max_incidence = get_field<double>(doc, "max_incidence_deg") * std::numbers::pi / 180.0;
  spec.origin_jitter = doc.contains("origin_jitter") ? get_field<double>(doc, "origin_jitter") : 0.0;
  spec.check();
  return spec;
}

SceneSpec read_scene_spec(const std::filesystem::path& path) {
  try {
    return parse_scene_spec(detail::read_text(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::FileUnreadable) throw;
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void write_ground_truth(const GroundTruth& truth, const std::filesystem::path& path) {
  const auto n = truth.size();
  if (truth.true_rho.size() != n || truth.true_cos_incidence.size() != n || truth.true_eta.size() != n)
    throw Error(ErrorCode::LengthMismatch, "ground-truth arrays differ in length");
  std::vector<char> buf;
  buf.reserve(n * 32);
  for (std::size_t i = 0; i < n; ++i) {
    detail::put(buf, truth.true_rho[i]);
    detail::put(buf, truth.true_cos_incidence[i]);
    detail::put(buf, truth.true_eta[i]);
    detail::put(buf, truth.true_range[i]);
  }
  detail::write_bytes(path, buf);
}

GroundTruth read_ground_truth(const std::filesystem::path& path) {
  const auto bytes = detail::read_bytes(path);
  if (bytes.size() % 32 != 0)
    throw Error(ErrorCode::MalformedScan, path.string() + ": size is not a multiple of 32");
  GroundTruth truth;
  const auto n = bytes.size() / 32;
  truth.true_rho.resize(n);
  truth.true_cos_incidence.resize(n);
  truth.true_eta.resize(n);
  truth.true_range.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const char* p = bytes.data() + i * 32;
    truth.true_rho[i] = detail::get<double>(p);
    truth.true_cos_incidence[i] = detail::get<double>(p + 8);
    truth.true_eta[i] = detail::get<double>(p + 16);
    truth.true_range[i] = detail::get<double>(p + 24);
  }
  return truth;
}

}  // namespace lidar_reflect
