#pragma once

// Pose accuracy and uncertainty-quality metrics: MPJPE, PA-MPJPE,
// sparsification curves with AUSC / AUSE, and Pearson correlation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "handunc/errors.hpp"
#include "handunc/gaussian.hpp"

namespace handunc::metrics {

inline constexpr double kMillimetersPerMeter = 1000.0;
inline constexpr int kCurvePoints = 50;

struct JointPrediction {
  std::uint64_t sample_id = 0;
  int joint_id = 0;
  Eigen::Vector3d pred = Eigen::Vector3d::Zero();  // m
  Eigen::Vector3d gt = Eigen::Vector3d::Zero();    // m
  double uncertainty = 0.0;

  /// Euclidean error in millimeters.
  double error_mm() const { return (pred - gt).norm() * kMillimetersPerMeter; }
};

/// Mean Euclidean joint error in millimeters.
inline double mpjpe(std::span<const JointPrediction> preds) {
  if (preds.empty()) throw Error(ErrorCode::EmptyInput, "mpjpe of an empty prediction list");
  double acc = 0.0;
  for (const auto& p : preds) acc += p.error_mm();
  return acc / static_cast<double>(preds.size());
}

/// Mean per-joint error (mm) between two flattened joint sets.
inline double mpjpe(const Vector& pred_set, const Vector& gt_set) {
  if (pred_set.size() != gt_set.size() || pred_set.size() % 3 != 0 || pred_set.size() == 0)
    throw Error(ErrorCode::ShapeError, "joint sets must have equal, nonzero multiple-of-3 length");
  const Eigen::Index n = pred_set.size() / 3;
  double acc = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) acc += (pred_set.segment<3>(3 * j) - gt_set.segment<3>(3 * j)).norm();
  return acc / static_cast<double>(n) * kMillimetersPerMeter;
}

inline Eigen::Matrix3Xd as_points(const Vector& set) {
  return Eigen::Map<const Eigen::Matrix3Xd>(set.data(), 3, set.size() / 3);
}

/// `pred` after the similarity transform (rotation, isotropic scale,
/// translation) that best aligns it to `gt` in the least-squares sense.
/// Reflections are excluded.
inline Vector procrustes_align(const Vector& pred_set, const Vector& gt_set) {
  if (pred_set.size() != gt_set.size() || pred_set.size() % 3 != 0 || pred_set.size() < 6)
    throw Error(ErrorCode::ShapeError, "joint sets must have equal multiple-of-3 length with >= 2 points");
  const Eigen::Matrix3Xd p = as_points(pred_set);
  const Eigen::Matrix3Xd g = as_points(gt_set);
  const Eigen::Matrix3Xd g_centered = g.colwise() - g.rowwise().mean();
  if (g_centered.squaredNorm() < 1e-24)
    throw Error(ErrorCode::DegenerateConfiguration, "ground-truth points are coincident");
  const Eigen::Matrix3Xd p_centered = p.colwise() - p.rowwise().mean();
  if (p_centered.squaredNorm() < 1e-24) {
    // Every similarity maps a point cloud collapsed to one location onto a
    // single point; the best one is the gt centroid.
    Eigen::Matrix3Xd aligned = g.rowwise().mean().replicate(1, p.cols());
    return Eigen::Map<const Vector>(aligned.data(), aligned.size());
  }
  const Eigen::Matrix4d t = Eigen::umeyama(p, g, /*with_scaling=*/true);
  Eigen::Matrix3Xd aligned = (t.topLeftCorner<3, 3>() * p).colwise() + t.topRightCorner<3, 1>();
  return Eigen::Map<const Vector>(aligned.data(), aligned.size());
}

/// MPJPE (mm) after similarity Procrustes alignment of pred to gt.
inline double pa_mpjpe(const Vector& pred_set, const Vector& gt_set) {
  return mpjpe(procrustes_align(pred_set, gt_set), gt_set);
}

/// How predictions are grouped before ranking.
enum class SparsificationUnit {
  /// Every joint of every sample is one entry (default).
  PooledJoints,
  /// One entry per sample: mean joint error and summed joint uncertainty.
  PerSample,
};

struct SparsificationCurve {
  std::array<double, kCurvePoints> fractions{};      // percent, 2..100
  std::array<double, kCurvePoints> errors{};         // mm, uncertainty-sorted prefixes
  std::array<double, kCurvePoints> oracle_errors{};  // mm, error-sorted prefixes
  double ausc = 0.0;
  std::optional<double> ause;
};

/// Prefix length for x percent of n entries, rounded up.
inline std::size_t prefix_size(int percent, std::size_t n) {
  return (static_cast<std::size_t>(percent) * n + 99) / 100;
}

namespace detail {

struct RankEntry {
  std::uint64_t sample_id;
  int joint_id;
  double uncertainty;
  double error;
};

inline std::vector<RankEntry> rank_entries(std::span<const JointPrediction> preds, SparsificationUnit unit) {
  std::vector<RankEntry> out;
  if (unit == SparsificationUnit::PooledJoints) {
    out.reserve(preds.size());
    for (const auto& p : preds) out.push_back({p.sample_id, p.joint_id, p.uncertainty, p.error_mm()});
    return out;
  }
  struct Acc {
    double u = 0.0, e = 0.0;
    int count = 0;
  };
  std::map<std::uint64_t, Acc> per_sample;
  for (const auto& p : preds) {
    auto& a = per_sample[p.sample_id];
    a.u += p.uncertainty;
    a.e += p.error_mm();
    ++a.count;
  }
  for (const auto& [id, a] : per_sample) out.push_back({id, 0, a.u, a.e / a.count});
  return out;
}

inline std::array<double, kCurvePoints> prefix_curve(const std::vector<double>& sorted_errors) {
  std::vector<double> cumulative(sorted_errors.size() + 1, 0.0);
  for (std::size_t i = 0; i < sorted_errors.size(); ++i) cumulative[i + 1] = cumulative[i] + sorted_errors[i];
  std::array<double, kCurvePoints> curve{};
  for (int i = 0; i < kCurvePoints; ++i) {
    const std::size_t k = prefix_size(2 * (i + 1), sorted_errors.size());
    curve[i] = cumulative[k] / static_cast<double>(k);
  }
  return curve;
}

inline double mean_of(const std::array<double, kCurvePoints>& a) {
  return std::accumulate(a.begin(), a.end(), 0.0) / kCurvePoints;
}

}  // namespace detail

/// Sparsification curve: entries sorted by ascending uncertainty (ties by
/// sample id, then joint id); point x is the mean error of the first
/// ceil(x% * n) entries for x = 2, 4, ..., 100. AUSC is the mean of the 50
/// points; AUSE the mean gap to the error-sorted oracle curve.
inline SparsificationCurve sparsification(std::span<const JointPrediction> preds,
                                          SparsificationUnit unit = SparsificationUnit::PooledJoints) {
  auto entries = detail::rank_entries(preds, unit);
  if (entries.size() < static_cast<std::size_t>(kCurvePoints))
    throw Error(ErrorCode::InsufficientData, "sparsification needs at least 50 entries, got " +
                                                 std::to_string(entries.size()));
  for (const auto& e : entries)
    if (!(e.uncertainty >= 0.0) || !std::isfinite(e.uncertainty))
      throw Error(ErrorCode::InvalidArgument, "uncertainty must be finite and >= 0");

  auto by_ids = [](const detail::RankEntry& a, const detail::RankEntry& b) {
    return a.sample_id != b.sample_id ? a.sample_id < b.sample_id : a.joint_id < b.joint_id;
  };
  auto sorted_errors = [&](auto key) {
    std::sort(entries.begin(), entries.end(), [&](const auto& a, const auto& b) {
      const double ka = key(a), kb = key(b);
      return ka != kb ? ka < kb : by_ids(a, b);
    });
    std::vector<double> errs;
    errs.reserve(entries.size());
    for (const auto& e : entries) errs.push_back(e.error);
    return errs;
  };

  SparsificationCurve c;
  for (int i = 0; i < kCurvePoints; ++i) c.fractions[i] = 2.0 * (i + 1);
  c.errors = detail::prefix_curve(sorted_errors([](const auto& e) { return e.uncertainty; }));
  c.oracle_errors = detail::prefix_curve(sorted_errors([](const auto& e) { return e.error; }));
  c.ausc = detail::mean_of(c.errors);
  double gap = 0.0;
  for (int i = 0; i < kCurvePoints; ++i) gap += c.errors[i] - c.oracle_errors[i];
  c.ause = gap / kCurvePoints;
  return c;
}

inline double ausc(std::span<const JointPrediction> preds,
                   SparsificationUnit unit = SparsificationUnit::PooledJoints) {
  return sparsification(preds, unit).ausc;
}

inline double ause(std::span<const JointPrediction> preds,
                   SparsificationUnit unit = SparsificationUnit::PooledJoints) {
  return *sparsification(preds, unit).ause;
}

/// Pearson product-moment correlation.
inline double pearson(std::span<const double> u, std::span<const double> e) {
  if (u.size() != e.size()) throw Error(ErrorCode::ShapeError, "pearson: lists differ in length");
  if (u.size() < 2) throw Error(ErrorCode::InsufficientData, "pearson needs at least 2 entries");
  const double n = static_cast<double>(u.size());
  const double mu = std::accumulate(u.begin(), u.end(), 0.0) / n;
  const double me = std::accumulate(e.begin(), e.end(), 0.0) / n;
  double suu = 0.0, see = 0.0, sue = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double du = u[i] - mu, de = e[i] - me;
    suu += du * du;
    see += de * de;
    sue += du * de;
  }
  if (suu <= 0.0 || see <= 0.0) throw Error(ErrorCode::UndefinedCorrelation, "zero variance");
  return std::clamp(sue / std::sqrt(suu * see), -1.0, 1.0);
}

/// Pearson correlation between uncertainty and error (mm) over all entries.
inline double uncertainty_error_correlation(std::span<const JointPrediction> preds) {
  std::vector<double> u, e;
  u.reserve(preds.size());
  e.reserve(preds.size());
  for (const auto& p : preds) {
    u.push_back(p.uncertainty);
    e.push_back(p.error_mm());
  }
  return pearson(u, e);
}

}  // namespace handunc::metrics
