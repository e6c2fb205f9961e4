#pragma once

// Synthetic hand-joint data with known heteroscedastic, correlated noise.
//
// Skeleton: wrist (joint 0) plus five fingers of four joints each
// (knuckle, two interphalangeal joints, tip), ordered thumb, index, middle,
// ring, little. Finger f owns joints 1 + 4f .. 4 + 4f.
//
// Canonical frame: the palm lies in the x-y plane, fingers point along +y
// when extended and flex toward -z.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "handunc/errors.hpp"
#include "handunc/gaussian.hpp"
#include "handunc/random.hpp"

namespace handunc::handsim {

inline constexpr int kNumFingers = 5;
inline constexpr int kJointsPerFinger = 4;
inline constexpr int kAnglesPerFinger = 4;  // knuckle flexion, knuckle abduction, middle flexion, distal flexion
inline constexpr int kNumAngles = kNumFingers * kAnglesPerFinger;
/// 2D projection of every joint plus the occlusion scalar.
inline constexpr int kFeatureDim = 2 * kNumJoints + 1;

inline constexpr int finger_joint(int finger, int k) { return 1 + kJointsPerFinger * finger + k; }

struct AngleLimit {
  double lo;
  double hi;
};

struct HandSkeleton {
  /// Segment lengths (m) per finger: wrist->knuckle, then three phalanges.
  std::array<std::array<double, kJointsPerFinger>, kNumFingers> segment_lengths;
  /// In-palm splay of each finger's metacarpal, radians from +y toward +x.
  std::array<double, kNumFingers> splay;
  std::array<AngleLimit, kAnglesPerFinger> limits;
};

/// Canonical skeleton. Lengths are fixed ratios of a 0.1 m unit hand; they do
/// not claim to be anthropometric averages.
inline HandSkeleton default_skeleton() {
  constexpr double unit = 0.1;
  HandSkeleton s;
  s.segment_lengths = {{
      {0.40 * unit, 0.35 * unit, 0.30 * unit, 0.25 * unit},  // thumb
      {0.90 * unit, 0.45 * unit, 0.25 * unit, 0.20 * unit},  // index
      {0.90 * unit, 0.50 * unit, 0.30 * unit, 0.20 * unit},  // middle
      {0.85 * unit, 0.45 * unit, 0.30 * unit, 0.20 * unit},  // ring
      {0.80 * unit, 0.35 * unit, 0.20 * unit, 0.18 * unit},  // little
  }};
  s.splay = {-0.9, -0.25, 0.0, 0.2, 0.4};
  s.limits = {{{0.0, std::numbers::pi / 2}, {-0.35, 0.35}, {0.0, std::numbers::pi / 2}, {0.0, 1.2}}};
  return s;
}

inline void validate(const HandSkeleton& s) {
  for (const auto& finger : s.segment_lengths)
    for (double len : finger)
      if (!(len > 0.0) || !std::isfinite(len))
        throw Error(ErrorCode::InvalidArgument, "segment lengths must be positive");
  for (const auto& lim : s.limits)
    if (!(lim.lo <= lim.hi)) throw Error(ErrorCode::InvalidArgument, "angle limit lo > hi");
}

/// Per-finger joint angles, indexed [finger][knuckle flex, knuckle abd, mid flex, distal flex].
using HandAngles = std::array<std::array<double, kAnglesPerFinger>, kNumFingers>;

namespace detail {

inline Eigen::Matrix3d rot_z(double a) { return Eigen::AngleAxisd(a, Eigen::Vector3d::UnitZ()).toRotationMatrix(); }
/// Flexion: positive angles bend +y toward -z.
inline Eigen::Matrix3d rot_flex(double a) { return Eigen::AngleAxisd(-a, Eigen::Vector3d::UnitX()).toRotationMatrix(); }

}  // namespace detail

/// Joint positions (joint-major, 63 values) via chained rigid transforms from
/// the wrist at the origin. Throws KinematicsError for out-of-limit angles.
inline Vector forward_kinematics(const HandSkeleton& skel, const HandAngles& angles) {
  for (int f = 0; f < kNumFingers; ++f)
    for (int a = 0; a < kAnglesPerFinger; ++a) {
      const double v = angles[f][a];
      if (!std::isfinite(v) || v < skel.limits[a].lo || v > skel.limits[a].hi)
        throw Error(ErrorCode::KinematicsError, "angle " + std::to_string(a) + " of finger " + std::to_string(f) +
                                                    " outside limits");
    }

  Vector out = Vector::Zero(kOutputDim);
  const Eigen::Vector3d forward = Eigen::Vector3d::UnitY();
  for (int f = 0; f < kNumFingers; ++f) {
    const auto& len = skel.segment_lengths[f];
    const auto& ang = angles[f];
    // Metacarpal is rigid in the palm.
    Eigen::Matrix3d frame = detail::rot_z(-skel.splay[f]);
    Eigen::Vector3d p = len[0] * (frame * forward);
    out.segment<3>(3 * finger_joint(f, 0)) = p;

    frame = frame * detail::rot_z(-ang[1]) * detail::rot_flex(ang[0]);
    p += len[1] * (frame * forward);
    out.segment<3>(3 * finger_joint(f, 1)) = p;

    frame = frame * detail::rot_flex(ang[2]);
    p += len[2] * (frame * forward);
    out.segment<3>(3 * finger_joint(f, 2)) = p;

    frame = frame * detail::rot_flex(ang[3]);
    p += len[3] * (frame * forward);
    out.segment<3>(3 * finger_joint(f, 3)) = p;
  }
  return out;
}

/// Parent of each joint in the kinematic tree (wrist is its own root, -1).
inline int parent_joint(int joint) {
  if (joint == 0) return -1;
  const int k = (joint - 1) % kJointsPerFinger;
  return k == 0 ? 0 : joint - 1;
}

/// FNV-1a 64 over a canonical text rendering of the skeleton.
inline std::uint64_t skeleton_hash(const HandSkeleton& s) {
  std::string text = "joints=21";
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, ",%.17g", v);
    text += buf;
  };
  for (const auto& finger : s.segment_lengths)
    for (double v : finger) put(v);
  for (double v : s.splay) put(v);
  for (const auto& lim : s.limits) {
    put(lim.lo);
    put(lim.hi);
  }
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string skeleton_hash_hex(const HandSkeleton& s) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(skeleton_hash(s)));
  return buf;
}

/// Generative noise: Sigma_true = (1 + 4 occ) * base_var * L L^T where L
/// holds one shared 3D latent per finger (weight grows toward the tip) next
/// to an independent per-joint term.
struct NoiseProfile {
  double base_var = 1e-4;
  std::array<double, kJointsPerFinger> shared_gain = {0.6, 0.8, 1.0, 1.2};
  double independent_gain = 0.6;
  double wrist_gain = 0.6;
  /// When set, every sample uses this occlusion instead of Uniform[0, 1].
  std::optional<double> fixed_occlusion;
};

inline double occlusion_scale(double occ, double base_var) { return (1.0 + 4.0 * occ) * base_var; }

/// The 63 x (63 + 3 * 5) mixing matrix L (unit scale).
inline Matrix noise_mixing(const NoiseProfile& np) {
  constexpr int shared_cols = kJointDim * kNumFingers;
  Matrix l = Matrix::Zero(kOutputDim, kOutputDim + shared_cols);
  for (int i = 0; i < kJointDim; ++i) l(i, i) = np.wrist_gain;
  for (int f = 0; f < kNumFingers; ++f)
    for (int k = 0; k < kJointsPerFinger; ++k) {
      const int j = finger_joint(f, k);
      for (int c = 0; c < kJointDim; ++c) {
        const int row = kJointDim * j + c;
        l(row, row) = np.independent_gain;
        l(row, kOutputDim + kJointDim * f + c) = np.shared_gain[k];
      }
    }
  return l;
}

struct SyntheticSample {
  std::uint64_t id = 0;
  Vector features;   // kFeatureDim
  Vector gt_joints;  // observed (noisy) joints, kOutputDim
  Matrix noise_cov;  // generative covariance of gt_joints around the clean pose
  double occlusion = 0.0;
};

inline HandAngles random_angles(const HandSkeleton& skel, Rng& rng) {
  HandAngles a{};
  for (int f = 0; f < kNumFingers; ++f)
    for (int k = 0; k < kAnglesPerFinger; ++k) {
      std::uniform_real_distribution<double> u(skel.limits[k].lo, skel.limits[k].hi);
      a[f][k] = u(rng);
    }
  return a;
}

/// Noiseless orthographic projection onto the palm plane plus occlusion.
inline Vector make_features(const Vector& clean_joints, double occlusion) {
  Vector f(kFeatureDim);
  for (int j = 0; j < kNumJoints; ++j) {
    f[2 * j] = clean_joints[3 * j];
    f[2 * j + 1] = clean_joints[3 * j + 1];
  }
  f[kFeatureDim - 1] = occlusion;
  return f;
}

/// One sample from its own seed substream (seed, id), so samples can be
/// generated independently and in any order.
inline SyntheticSample generate_one(const HandSkeleton& skel, std::uint64_t id, std::uint64_t seed,
                                    const NoiseProfile& np, const Matrix& mixing) {
  Rng rng = make_rng(seed, Stream::DatasetSample, id);
  const HandAngles angles = random_angles(skel, rng);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double drawn_occ = unit(rng);
  const double occ = np.fixed_occlusion.value_or(drawn_occ);
  const Vector clean = forward_kinematics(skel, angles);
  const Matrix latent = standard_normal(mixing.cols(), 1, rng);
  const double scale = occlusion_scale(occ, np.base_var);

  SyntheticSample s;
  s.id = id;
  s.occlusion = occ;
  s.features = make_features(clean, occ);
  s.gt_joints = clean + std::sqrt(scale) * (mixing * latent.col(0));
  s.noise_cov = scale * (mixing * mixing.transpose());
  return s;
}

inline std::vector<SyntheticSample> generate(const HandSkeleton& skel, std::size_t n, std::uint64_t seed,
                                             const NoiseProfile& np = {}) {
  validate(skel);
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "n must be >= 1");
  if (!(np.base_var > 0.0)) throw Error(ErrorCode::InvalidArgument, "base_var must be > 0");
  if (np.fixed_occlusion && (*np.fixed_occlusion < 0.0 || *np.fixed_occlusion > 1.0))
    throw Error(ErrorCode::InvalidArgument, "occlusion must lie in [0, 1]");
  const Matrix mixing = noise_mixing(np);
  std::vector<SyntheticSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(generate_one(skel, i, seed, np, mixing));
  return out;
}

/// Per-joint trace of the generative covariance blocks.
inline Vector oracle_uncertainty(const SyntheticSample& s) {
  if (s.noise_cov.rows() != kOutputDim || s.noise_cov.cols() != kOutputDim)
    throw Error(ErrorCode::ShapeError, "noise_cov must be 63 x 63");
  Vector u(kNumJoints);
  for (int j = 0; j < kNumJoints; ++j) u[j] = s.noise_cov.diagonal().segment<3>(3 * j).sum();
  return u;
}

}  // namespace handunc::handsim
