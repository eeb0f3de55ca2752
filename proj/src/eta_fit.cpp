#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "lidar_reflect/calibration.hpp"
#include "lidar_reflect/error.hpp"

namespace lidar_reflect {

namespace {

// Search box in log space. a is in m^-2, d in m.
constexpr double kLogAMin = -11.512925464970229;  // ln 1e-5
constexpr double kLogAMax = 4.605170185988092;    // ln 1e2
constexpr double kLogDMin = -6.907755278982137;   // ln 1e-3
constexpr double kLogDMax = 4.605170185988092;    // ln 1e2
constexpr int kGridA = 121;
constexpr int kGridD = 101;
constexpr double kRelTolerance = 1e-8;
constexpr int kMaxIterations = 500;

struct Bin {
  double range;
  double eta;
  double weight;
};

double model(double a, double d, double range) {
  const double s = range + d;
  return 1.0 - std::exp(-a * s * s);
}

double objective(const std::vector<Bin>& bins, double a, double d) {
  double f = 0.0;
  for (const auto& b : bins) {
    const double r = model(a, d, b.range) - b.eta;
    f += b.weight * r * r;
  }
  return f;
}

}  // namespace

EtaFit fit_eta_lumped(const EtaTable& table) {
  table.check();
  std::vector<Bin> bins;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table.sample_counts[i] == 0 || !(table.bin_centers[i] > 0.0)) continue;
    bins.push_back({table.bin_centers[i], table.eta[i], static_cast<double>(table.sample_counts[i])});
  }
  if (bins.size() < 4)
    throw Error(ErrorCode::InsufficientData, "eta fit needs at least 4 populated bins, got " + std::to_string(bins.size()));

  EtaFit fit;
  double best_la = 0.0, best_ld = 0.0;
  fit.grid_objective = std::numeric_limits<double>::infinity();
  for (int i = 0; i < kGridA; ++i) {
    const double la = kLogAMin + (kLogAMax - kLogAMin) * i / (kGridA - 1);
    for (int j = 0; j < kGridD; ++j) {
      const double ld = kLogDMin + (kLogDMax - kLogDMin) * j / (kGridD - 1);
      const double f = objective(bins, std::exp(la), std::exp(ld));
      if (f < fit.grid_objective) {
        fit.grid_objective = f;
        best_la = la;
        best_ld = ld;
      }
    }
  }

  // Levenberg-Marquardt on (ln a, ln d).
  Eigen::Vector2d p(best_la, best_ld);
  double f = fit.grid_objective;
  double lambda = 1e-3;
  int it = 0;
  for (; it < kMaxIterations && f > 0.0; ++it) {
    const double a = std::exp(p[0]);
    const double d = std::exp(p[1]);
    Eigen::Matrix2d jtj = Eigen::Matrix2d::Zero();
    Eigen::Vector2d jtr = Eigen::Vector2d::Zero();
    for (const auto& b : bins) {
      const double s = b.range + d;
      const double e = std::exp(-a * s * s);
      const double r = (1.0 - e) - b.eta;
      const Eigen::Vector2d g(e * a * s * s, e * 2.0 * a * s * d);
      jtj += b.weight * g * g.transpose();
      jtr += b.weight * g * r;
    }
    bool accepted = false;
    while (lambda < 1e12) {
      Eigen::Matrix2d damped = jtj;
      damped.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
      Eigen::Vector2d q = p - damped.ldlt().solve(jtr);
      q[0] = std::clamp(q[0], kLogAMin, kLogAMax);
      q[1] = std::clamp(q[1], kLogDMin, kLogDMax);
      const double fq = objective(bins, std::exp(q[0]), std::exp(q[1]));
      if (std::isfinite(fq) && fq < f) {
        const double improvement = (f - fq) / f;
        p = q;
        f = fq;
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = improvement >= kRelTolerance;
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) break;
  }

  fit.a = std::exp(p[0]);
  fit.d = std::exp(p[1]);
  fit.objective = f;
  fit.iterations = it;

  if (!std::isfinite(f) || f > fit.grid_objective * (1.0 + 1e-12))
    throw Error(ErrorCode::FitDiverged, "refinement did not improve on the grid optimum");
  if (p[0] >= kLogAMax - 1e-9 || p[1] >= kLogDMax - 1e-9)
    throw Error(ErrorCode::FitDiverged, "fit ran to the edge of the parameter box (a or d unbounded)");
  // A model that is flat at 1 over all populated bins has no knee to identify.
  double lowest = 1.0;
  for (const auto& b : bins) lowest = std::min(lowest, model(fit.a, fit.d, b.range));
  if (lowest > 1.0 - 1e-6) throw Error(ErrorCode::FitDiverged, "table has no near-range knee");
  return fit;
}

EtaParams fit_eta_params(const EtaTable& table) { return fit_eta_lumped(table).params(); }

}  // namespace lidar_reflect
