#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <variant>
#include <vector>

#include "lidar_reflect/core.hpp"
#include "lidar_reflect/pipeline_config.hpp"

namespace lidar_reflect {

// Physical parameters of the defocusing model
//   eta(R) = 1 - exp(-2 r_d^2 (R + d)^2 / (D^2 S^2)).
// Only a = 2 r_d^2 / (D^2 S^2) and d are identifiable from curve data.
struct EtaParams {
  double r_d = 0.1;  // detector radius (m)
  double d = 0.0;    // range offset (m)
  double D = 1.0;    // lens diameter (m)
  double S = 1.0;    // focal length (m)

  double lumped_a() const noexcept { return 2.0 * r_d * r_d / (D * D * S * S); }
  static EtaParams from_lumped(double a, double d);
  void check() const;
};

// Nonparametric near-range factor sampled at bin centers.
struct EtaTable {
  std::vector<double> bin_centers;
  std::vector<double> eta;
  std::vector<std::uint64_t> sample_counts;
  double near_range_threshold = 12.0;

  std::size_t size() const noexcept { return bin_centers.size(); }
  bool empty() const noexcept { return bin_centers.empty(); }
  // Throws Error(MalformedTable) on length mismatch, unsorted centers or eta outside (0, 1.05].
  void check() const;
};

using EtaModel = std::variant<EtaTable, EtaParams>;

struct ClassStats {
  ClassId class_id = 0;
  std::size_t count = 0;  // samples retained after MAD trimming
  double centroid = 0.0;  // median
  double mean = 0.0;
  double variance = 0.0;  // population variance of retained samples
};

struct ClassReflectivity {
  std::map<ClassId, ClassStats> classes;

  const ClassStats* find(ClassId id) const;
  bool empty() const noexcept { return classes.empty(); }
};

struct ClassSample {
  ClassId class_id = 0;
  double value = 0.0;
};

// I * R^2 / cos(alpha) for labeled, well-conditioned points beyond the
// near-range threshold.
std::vector<ClassSample> far_range_samples(const LabeledScan& scan, const NormalField& normals,
                                           const PipelineConfig& config);

// Per-class median centroid plus MAD-trimmed mean/variance. Classes whose
// median is not positive are dropped. Throws NoSamples on empty input.
ClassReflectivity class_centroids(std::span<const ClassSample> samples);

// Data-driven near-range table: per-point ratios of measured to expected
// intensity, pooled across classes, binned by range, median per bin, gaps
// interpolated, then normalized to a far-range plateau of 1.
EtaTable estimate_eta(std::span<const LabeledScan> scans, std::span<const NormalField> normals,
                      const ClassReflectivity& centroids, const PipelineConfig& config);

struct EtaFit {
  double a = 0.0;
  double d = 0.0;
  double objective = 0.0;
  double grid_objective = 0.0;
  int iterations = 0;

  EtaParams params() const { return EtaParams::from_lumped(a, d); }
};

// Weighted least squares of the defocusing model over (a, d): log-grid
// search then Levenberg-Marquardt refinement in log-parameter space.
EtaFit fit_eta_lumped(const EtaTable& table);
EtaParams fit_eta_params(const EtaTable& table);

double eta_at(const EtaTable& table, double range);
double eta_at(const EtaParams& params, double range);
double eta_at(const EtaModel& model, double range);

// reflectivity = I R^2 / (max(cos, cos_floor) * eta(R)); invalid normals give
// reflectivity 0 and valid = false.
ReflectivityScan calibrate_scan(const RawScan& scan, const NormalField& normals, const EtaModel& eta,
                                const PipelineConfig& config);

// Per-class Gaussian of valid calibrated reflectivities (same trimming as
// class_centroids). labels[i] aligns with scans[i].
ClassReflectivity class_gaussians(std::span<const ReflectivityScan> scans,
                                  std::span<const std::vector<ClassId>> labels);

// Sum over labeled points of 0.5 * (log var_c + (v - mean_c)^2 / var_c), with
// var_c floored at 1e-6. Class 0 is skipped; unknown classes throw.
double gaussian_nll(std::span<const double> values, std::span<const ClassId> labels,
                    const ClassReflectivity& stats);
double gaussian_nll(std::span<const float> values, std::span<const ClassId> labels,
                    const ClassReflectivity& stats);

}  // namespace lidar_reflect
