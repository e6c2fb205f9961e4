#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "handunc/dataset_io.hpp"
#include "handunc/gaussian.hpp"
#include "handunc/handsim.hpp"
#include "handunc/random.hpp"
#include "oracles.hpp"

using namespace handunc;
using namespace handunc::handsim;

namespace {

HandAngles zeros() { return HandAngles{}; }

HandSkeleton unit_skeleton() {
  HandSkeleton s = default_skeleton();
  for (auto& finger : s.segment_lengths) finger = {1.0, 1.0, 1.0, 1.0};
  return s;
}

// Noise realizations: the same seed with a vanishing base variance yields the
// clean poses, so the difference isolates the generative noise.
Matrix noise_matrix(std::size_t n, std::uint64_t seed, double occ) {
  NoiseProfile np;
  np.fixed_occlusion = occ;
  const auto noisy = generate(default_skeleton(), n, seed, np);
  np.base_var = 1e-300;
  const auto clean = generate(default_skeleton(), n, seed, np);
  Matrix out(kOutputDim, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) out.col(static_cast<Eigen::Index>(i)) = noisy[i].gt_joints - clean[i].gt_joints;
  return out;
}

Matrix covariance_about_zero(const Matrix& noise) {
  return noise * noise.transpose() / static_cast<double>(noise.cols());
}

}  // namespace

TEST(Kinematics, StraightFingersReachSumOfLengths) {
  const HandSkeleton s = default_skeleton();
  const Vector joints = forward_kinematics(s, zeros());
  EXPECT_EQ(joints.segment<3>(0), Eigen::Vector3d::Zero());
  for (int f = 0; f < kNumFingers; ++f) {
    const double total = s.segment_lengths[f][0] + s.segment_lengths[f][1] + s.segment_lengths[f][2] +
                         s.segment_lengths[f][3];
    const Eigen::Vector3d tip = joints.segment<3>(3 * finger_joint(f, 3));
    EXPECT_NEAR(tip.norm(), total, 1e-12);
    EXPECT_NEAR(tip.z(), 0.0, 1e-15);
  }
}

TEST(Kinematics, SingleRightAngleBend) {
  HandAngles a = zeros();
  a[2][0] = std::numbers::pi / 2;  // middle finger (zero splay), knuckle flexion
  const Vector j = forward_kinematics(unit_skeleton(), a);
  const Eigen::Vector3d expected[4] = {{0, 1, 0}, {0, 1, -1}, {0, 1, -2}, {0, 1, -3}};
  for (int k = 0; k < 4; ++k) EXPECT_LT((j.segment<3>(3 * finger_joint(2, k)) - expected[k]).norm(), 1e-12) << k;
}

TEST(Kinematics, SegmentLengthsPreserved) {
  const HandSkeleton s = default_skeleton();
  Rng rng = make_rng(5, Stream::DatasetSample);
  for (int t = 0; t < 1000; ++t) {
    const Vector j = forward_kinematics(s, random_angles(s, rng));
    for (int f = 0; f < kNumFingers; ++f)
      for (int k = 0; k < kJointsPerFinger; ++k) {
        const int joint = finger_joint(f, k);
        const double d = (j.segment<3>(3 * joint) - j.segment<3>(3 * parent_joint(joint))).norm();
        EXPECT_NEAR(d, s.segment_lengths[f][k], 1e-12);
      }
  }
}

TEST(Kinematics, OutOfLimitAngleRejected) {
  HandAngles a = zeros();
  a[1][1] = 0.5;
  try {
    forward_kinematics(default_skeleton(), a);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::KinematicsError);
  }
  a[1][1] = 0.0;
  a[3][3] = -0.01;
  EXPECT_THROW(forward_kinematics(default_skeleton(), a), Error);
}

TEST(Kinematics, TreeIsConnectedToWrist) {
  for (int j = 1; j < kNumJoints; ++j) {
    int k = j, hops = 0;
    while (k != 0 && hops < kNumJoints) {
      k = parent_joint(k);
      ++hops;
    }
    EXPECT_EQ(k, 0);
    EXPECT_LE(hops, 4);
  }
  EXPECT_EQ(parent_joint(0), -1);
}

TEST(Skeleton, InvalidLengthsRejected) {
  HandSkeleton s = default_skeleton();
  s.segment_lengths[0][2] = 0.0;
  EXPECT_THROW(generate(s, 1, 1), Error);
}

TEST(Skeleton, HashIsStableAndSensitive) {
  HandSkeleton s = default_skeleton();
  EXPECT_EQ(skeleton_hash(s), skeleton_hash(default_skeleton()));
  EXPECT_EQ(skeleton_hash_hex(s).size(), 16u);
  s.splay[2] += 1e-9;
  EXPECT_NE(skeleton_hash(s), skeleton_hash(default_skeleton()));
}

TEST(Generate, DeterministicAndIndependentOfCount) {
  const auto a = generate(default_skeleton(), 20, 3);
  const auto b = generate(default_skeleton(), 20, 3);
  const auto c = generate(default_skeleton(), 10, 3);
  for (std::size_t i = 0; i < 20; ++i) {
    EXPECT_EQ(a[i].gt_joints, b[i].gt_joints);
    EXPECT_EQ(a[i].features, b[i].features);
    EXPECT_EQ(a[i].occlusion, b[i].occlusion);
    if (i < 10) {
      EXPECT_EQ(a[i].gt_joints, c[i].gt_joints);
    }
  }
  EXPECT_NE(generate(default_skeleton(), 1, 4)[0].gt_joints, a[0].gt_joints);
}

TEST(Generate, FeaturesAreCleanProjectionPlusOcclusion) {
  NoiseProfile np;
  np.base_var = 1e-300;
  for (const auto& s : generate(default_skeleton(), 50, 8, np)) {
    ASSERT_EQ(s.features.size(), kFeatureDim);
    for (int j = 0; j < kNumJoints; ++j) {
      EXPECT_NEAR(s.features[2 * j], s.gt_joints[3 * j], 1e-9);
      EXPECT_NEAR(s.features[2 * j + 1], s.gt_joints[3 * j + 1], 1e-9);
    }
    EXPECT_EQ(s.features[kFeatureDim - 1], s.occlusion);
    EXPECT_GE(s.occlusion, 0.0);
    EXPECT_LE(s.occlusion, 1.0);
  }
}

TEST(Generate, VanishingNoiseLeavesCleanPose) {
  NoiseProfile tiny;
  tiny.base_var = 1e-300;
  NoiseProfile small;
  small.base_var = 1e-24;
  const auto a = generate(default_skeleton(), 30, 2, tiny);
  const auto b = generate(default_skeleton(), 30, 2, small);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_LT((a[i].gt_joints - b[i].gt_joints).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Generate, RejectsBadArguments) {
  EXPECT_THROW(generate(default_skeleton(), 0, 1), Error);
  NoiseProfile np;
  np.base_var = 0.0;
  EXPECT_THROW(generate(default_skeleton(), 1, 1, np), Error);
  np.base_var = 1e-4;
  np.fixed_occlusion = 1.5;
  EXPECT_THROW(generate(default_skeleton(), 1, 1, np), Error);
}

TEST(Generate, CovarianceIsPositiveDefinite) {
  for (const auto& s : generate(default_skeleton(), 100, 6)) {
    Matrix l;
    EXPECT_TRUE(oracle::cholesky(s.noise_cov, l));
    EXPECT_EQ(s.noise_cov, s.noise_cov.transpose());
  }
}

TEST(Generate, CovarianceFollowsOcclusionScale) {
  const auto s = generate(default_skeleton(), 5, 1);
  const Matrix llt = noise_mixing(NoiseProfile{}) * noise_mixing(NoiseProfile{}).transpose();
  for (const auto& x : s) {
    EXPECT_NEAR(x.noise_cov(0, 0), (1.0 + 4.0 * x.occlusion) * 1e-4 * llt(0, 0), 1e-18);
    EXPECT_LT((x.noise_cov - (1.0 + 4.0 * x.occlusion) * 1e-4 * llt).cwiseAbs().maxCoeff(), 1e-18);
  }
}

class NoiseStatistics : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    occ0_ = new Matrix(noise_matrix(50000, 17, 0.0));
    occ1_ = new Matrix(noise_matrix(50000, 18, 1.0));
  }
  static void TearDownTestSuite() {
    delete occ0_;
    delete occ1_;
  }
  static Matrix* occ0_;
  static Matrix* occ1_;
};
Matrix* NoiseStatistics::occ0_ = nullptr;
Matrix* NoiseStatistics::occ1_ = nullptr;

TEST_F(NoiseStatistics, VarianceRatioBetweenOcclusionExtremes) {
  const double v0 = occ0_->squaredNorm() / static_cast<double>(occ0_->cols());
  const double v1 = occ1_->squaredNorm() / static_cast<double>(occ1_->cols());
  EXPECT_NEAR(v1 / v0, 5.0, 0.05 * 5.0);
}

TEST_F(NoiseStatistics, EmpiricalCovarianceMatchesGenerative) {
  NoiseProfile np;
  np.fixed_occlusion = 0.0;
  const Matrix truth = generate(default_skeleton(), 1, 0, np)[0].noise_cov;
  EXPECT_LT((covariance_about_zero(*occ0_) - truth).norm() / truth.norm(), 0.05);
}

TEST_F(NoiseStatistics, WithinFingerCorrelationExceedsCrossFinger) {
  const Matrix c = covariance_about_zero(*occ0_);
  auto corr = [&](int i, int j) { return c(i, j) / std::sqrt(c(i, i) * c(j, j)); };
  double within = 0.0, cross = 0.0;
  int nw = 0, nc = 0;
  for (int f = 0; f < kNumFingers; ++f)
    for (int g = 0; g < kNumFingers; ++g)
      for (int k = 0; k < kJointsPerFinger; ++k)
        for (int m = 0; m < kJointsPerFinger; ++m)
          for (int axis = 0; axis < 3; ++axis) {
            const int i = 3 * finger_joint(f, k) + axis, j = 3 * finger_joint(g, m) + axis;
            if (i == j) continue;
            if (f == g) {
              within += corr(i, j);
              ++nw;
            } else {
              cross += std::abs(corr(i, j));
              ++nc;
            }
          }
  within /= nw;
  cross /= nc;
  EXPECT_GT(within, 0.5);
  EXPECT_LT(cross, 0.05);
  EXPECT_GT(within, cross);
}

TEST(Oracle, DiagonalBlockTrace) {
  SyntheticSample s;
  s.noise_cov = Matrix::Identity(63, 63);
  s.noise_cov.diagonal().head<3>() << 0.5, 1.5, 2.0;
  EXPECT_EQ(oracle_uncertainty(s)[0], 4.0);
  EXPECT_EQ(oracle_uncertainty(s)[1], 3.0);
}

TEST(Oracle, LinearInOcclusionScale) {
  NoiseProfile a, b;
  a.fixed_occlusion = 0.0;
  b.fixed_occlusion = 0.5;
  const Vector ua = oracle_uncertainty(generate(default_skeleton(), 1, 3, a)[0]);
  const Vector ub = oracle_uncertainty(generate(default_skeleton(), 1, 3, b)[0]);
  EXPECT_LT((ub - 3.0 * ua).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Oracle, MatchesTraceUncertaintyOfDenseCovariance) {
  for (const auto& s : generate(default_skeleton(), 10, 12)) {
    const Matrix l = oracle::cholesky_or_jitter(s.noise_cov);
    const Vector via_core = joint_trace_uncertainty(StructuredCov{l, Vector::Ones(63)});
    EXPECT_LT((oracle_uncertainty(s) - via_core).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(DatasetFile, RoundTripIsExact) {
  const auto samples = generate(default_skeleton(), 12, 9);
  DatasetHeader h;
  h.skeleton_hash = skeleton_hash_hex(default_skeleton());
  h.seed = 9;
  h.count = samples.size();
  std::stringstream ss;
  write_dataset(ss, h, samples);
  const Dataset back = read_dataset(ss);
  EXPECT_EQ(back.header.skeleton_hash, h.skeleton_hash);
  EXPECT_EQ(back.header.seed, 9u);
  EXPECT_EQ(back.header.feature_dim, kFeatureDim);
  ASSERT_EQ(back.samples.size(), samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    EXPECT_EQ(back.samples[i].id, samples[i].id);
    EXPECT_EQ(back.samples[i].features, samples[i].features);
    EXPECT_EQ(back.samples[i].gt_joints, samples[i].gt_joints);
    EXPECT_EQ(back.samples[i].noise_cov, samples[i].noise_cov);
    EXPECT_EQ(back.samples[i].occlusion, samples[i].occlusion);
  }
}

TEST(DatasetFile, PackedLowerTriangle) {
  Matrix m(3, 3);
  m << 1, 2, 4, 2, 3, 5, 4, 5, 6;
  EXPECT_EQ(pack_lower(m), (std::vector<double>{1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(unpack_lower(pack_lower(m), 3), m);
  EXPECT_EQ(pack_lower(Matrix::Identity(63, 63)).size(), 2016u);
  EXPECT_THROW(unpack_lower({1, 2}, 3), Error);
}

namespace {

std::string dataset_text(std::size_t n) {
  DatasetHeader h;
  h.count = n;
  std::stringstream ss;
  write_dataset(ss, h, generate(default_skeleton(), n, 1));
  return ss.str();
}

std::size_t parse_error_line(const std::string& text) {
  std::istringstream is(text);
  try {
    read_dataset(is);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

std::string nth_line(const std::string& text, std::size_t line) {
  std::istringstream is(text);
  std::string l;
  for (std::size_t i = 0; i < line; ++i) std::getline(is, l);
  return l;
}

std::string replace_line(const std::string& text, std::size_t line, const std::string& with) {
  std::istringstream is(text);
  std::string out, l;
  for (std::size_t i = 1; std::getline(is, l); ++i) out += (i == line ? with : l) + "\n";
  return out;
}

}  // namespace

TEST(DatasetFile, ParseErrorsCarryLineNumbers) {
  const std::string text = dataset_text(4);
  EXPECT_EQ(parse_error_line(replace_line(text, 3, "{not json")), 3u);
  EXPECT_EQ(parse_error_line(replace_line(text, 1, R"({"format":"other"})")), 1u);

  // A record whose covariance is not positive definite.
  const nlohmann::json record = nlohmann::json::parse(nth_line(text, 4));
  nlohmann::json bad = record;
  auto packed = bad["noise_cov_packed"].get<std::vector<double>>();
  packed[0] = -1.0;
  bad["noise_cov_packed"] = packed;
  EXPECT_EQ(parse_error_line(replace_line(text, 4, bad.dump())), 4u);

  bad = record;
  bad["features"] = std::vector<double>{1.0, 2.0};
  EXPECT_EQ(parse_error_line(replace_line(text, 2, bad.dump())), 2u);
  bad = record;
  bad["occlusion"] = 2.0;
  EXPECT_EQ(parse_error_line(replace_line(text, 2, bad.dump())), 2u);

  // Header count disagrees with the records present.
  EXPECT_GT(parse_error_line(replace_line(text, 5, "")), 0u);
}

TEST(DatasetFile, MissingFileIsIoError) {
  try {
    load_dataset("/nonexistent/dir/data.jsonl");
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IoError);
  }
}
