#pragma once

// Multivariate Gaussian beliefs over flattened joint sets and the three
// covariance parameterizations: diagonal, precision factor and the
// structured W * diag(var) * W^T form.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "handunc/errors.hpp"
#include "handunc/random.hpp"

namespace handunc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr int kNumJoints = 21;
inline constexpr int kJointDim = 3;
/// Flattened joint-major layout [j0x, j0y, j0z, j1x, ...].
inline constexpr int kOutputDim = kNumJoints * kJointDim;

/// Diagonal covariance, var[i] > 0 (m^2).
struct DiagonalCov {
  Vector var;
};

/// Covariance given through its precision Psi = A * A^T.
struct PrecisionFactorCov {
  Matrix a;
};

/// Sigma = W * diag(var) * W^T; positive definite iff W is nonsingular.
struct StructuredCov {
  Matrix w;
  Vector var;
};

using CovarianceParam = std::variant<DiagonalCov, PrecisionFactorCov, StructuredCov>;

struct GaussianBelief {
  Vector mean;
  CovarianceParam cov;
};

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

inline Eigen::Index dim(const CovarianceParam& cov) {
  return std::visit(Overloaded{
                        [](const DiagonalCov& c) { return c.var.size(); },
                        [](const PrecisionFactorCov& c) { return c.a.rows(); },
                        [](const StructuredCov& c) { return c.var.size(); },
                    },
                    cov);
}

/// Throws ShapeError / InvalidArgument when the variant's invariants do not hold.
inline void validate(const CovarianceParam& cov) {
  auto check_var = [](const Vector& var) {
    if (var.size() == 0) throw Error(ErrorCode::ShapeError, "empty variance vector");
    for (Eigen::Index i = 0; i < var.size(); ++i)
      if (!std::isfinite(var[i]) || !(var[i] > 0.0))
        throw Error(ErrorCode::InvalidArgument,
                    "variance must be positive and finite at index " + std::to_string(i));
  };
  std::visit(Overloaded{
                 [&](const DiagonalCov& c) { check_var(c.var); },
                 [&](const PrecisionFactorCov& c) {
                   if (c.a.rows() == 0 || c.a.rows() != c.a.cols())
                     throw Error(ErrorCode::ShapeError, "precision factor must be square");
                   if (!c.a.allFinite()) throw Error(ErrorCode::InvalidArgument, "non-finite precision factor");
                 },
                 [&](const StructuredCov& c) {
                   check_var(c.var);
                   if (c.w.rows() != c.var.size() || c.w.cols() != c.var.size())
                     throw Error(ErrorCode::ShapeError, "W must be square and match var");
                   if (!c.w.allFinite()) throw Error(ErrorCode::InvalidArgument, "non-finite W");
                 },
             },
             cov);
}

inline void validate(const GaussianBelief& belief) {
  validate(belief.cov);
  if (belief.mean.size() != dim(belief.cov))
    throw Error(ErrorCode::ShapeError, "mean and covariance dimensions differ");
  if (!belief.mean.allFinite()) throw Error(ErrorCode::InvalidArgument, "non-finite mean");
}

namespace detail {

/// Returns A^{-1}, or throws `code` when A is numerically singular.
inline Matrix checked_inverse(const Matrix& a, ErrorCode code, const char* what) {
  Eigen::FullPivLU<Matrix> lu(a);
  if (!lu.isInvertible()) throw Error(code, what);
  return lu.inverse();
}

inline Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

/// log|det| from the LU diagonal; determinant() under/overflows for d = 63.
inline double log_abs_det(const Eigen::FullPivLU<Matrix>& lu) {
  double acc = 0.0;
  const auto& lu_mat = lu.matrixLU();
  for (Eigen::Index i = 0; i < lu_mat.rows(); ++i) acc += std::log(std::abs(lu_mat(i, i)));
  return acc;
}

/// -0.5 * sum_i [log(2 pi) + log var_i + z_i^2 / var_i] - log|det W|.
/// Shared by the diagonal and structured routes so that W = I reproduces the
/// diagonal value bit for bit.
inline double whitened_log_density(const Vector& z, const Vector& var, double log_abs_det_w) {
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) acc += log_2pi + std::log(var[i]) + z[i] * z[i] / var[i];
  return -0.5 * acc - log_abs_det_w;
}

}  // namespace detail

/// Dense 63x63 (or d x d) covariance, symmetrized on return.
inline Matrix dense_covariance(const CovarianceParam& cov) {
  validate(cov);
  return std::visit(
      Overloaded{
          [](const DiagonalCov& c) -> Matrix { return c.var.asDiagonal(); },
          [](const PrecisionFactorCov& c) -> Matrix {
            // Sigma = (A A^T)^{-1} = A^{-T} A^{-1}
            const Matrix a_inv =
                detail::checked_inverse(c.a, ErrorCode::NonInvertiblePrecision, "A * A^T is singular");
            return detail::symmetrized(a_inv.transpose() * a_inv);
          },
          [](const StructuredCov& c) -> Matrix {
            return detail::symmetrized(c.w * c.var.asDiagonal() * c.w.transpose());
          },
      },
      cov);
}

/// log N(y; mean, Sigma) including the -(d/2) log(2 pi) constant.
///
/// The structured variant solves through an LU factorization of W and never
/// forms Sigma: log det Sigma = 2 log|det W| + sum log var.
inline double log_density(const GaussianBelief& belief, const Vector& y) {
  validate(belief);
  if (y.size() != belief.mean.size()) throw Error(ErrorCode::ShapeError, "y has wrong dimension");
  const Vector r = y - belief.mean;
  return std::visit(
      Overloaded{
          [&](const DiagonalCov& c) { return detail::whitened_log_density(r, c.var, 0.0); },
          [&](const PrecisionFactorCov& c) {
            Eigen::FullPivLU<Matrix> lu(c.a);
            if (!lu.isInvertible())
              throw Error(ErrorCode::NotPositiveDefinite, "precision A * A^T is singular");
            const double log_2pi = std::log(2.0 * std::numbers::pi);
            const Vector t = c.a.transpose() * r;
            const double log_det_psi = 2.0 * detail::log_abs_det(lu);
            return -0.5 * (static_cast<double>(r.size()) * log_2pi + t.squaredNorm() - log_det_psi);
          },
          [&](const StructuredCov& c) {
            Eigen::FullPivLU<Matrix> lu(c.w);
            if (!lu.isInvertible()) throw Error(ErrorCode::NotPositiveDefinite, "W is singular");
            const Vector z = lu.solve(r);
            return detail::whitened_log_density(z, c.var, detail::log_abs_det(lu));
          },
      },
      belief.cov);
}

/// Samples paired with the standard-normal draws that produced them.
struct ReparamDraws {
  Matrix eps;      // d x n
  Matrix samples;  // d x n
};

/// Reparameterized draws: y = mean + W * (sigma .* eps) for the structured
/// form, mean + sigma .* eps for the diagonal one and mean + A^{-T} eps for
/// the precision factor.
inline ReparamDraws sample_with_noise(const GaussianBelief& belief, int n, std::uint64_t seed) {
  validate(belief);
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "sample count must be >= 1");
  const Eigen::Index d = belief.mean.size();
  Rng rng = make_rng(seed, Stream::Sampling);
  ReparamDraws out;
  out.eps = standard_normal(d, n, rng);
  out.samples = std::visit(
      Overloaded{
          [&](const DiagonalCov& c) -> Matrix {
            return (c.var.cwiseSqrt().asDiagonal() * out.eps).colwise() + belief.mean;
          },
          [&](const PrecisionFactorCov& c) -> Matrix {
            Eigen::FullPivLU<Matrix> lu(c.a.transpose());
            if (!lu.isInvertible()) throw Error(ErrorCode::NotPositiveDefinite, "precision A * A^T is singular");
            return lu.solve(out.eps).colwise() + belief.mean;
          },
          [&](const StructuredCov& c) -> Matrix {
            return (c.w * (c.var.cwiseSqrt().asDiagonal() * out.eps)).colwise() + belief.mean;
          },
      },
      belief.cov);
  return out;
}

inline std::vector<Vector> sample(const GaussianBelief& belief, int n, std::uint64_t seed) {
  const ReparamDraws draws = sample_with_noise(belief, n, seed);
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < draws.samples.cols(); ++j) out.emplace_back(draws.samples.col(j));
  return out;
}

/// Per-joint scalar uncertainty: trace of each 3x3 diagonal block of Sigma.
inline Vector joint_trace_uncertainty(const CovarianceParam& cov) {
  validate(cov);
  const Eigen::Index d = dim(cov);
  if (d % kJointDim != 0) throw Error(ErrorCode::ShapeError, "dimension is not a multiple of 3");
  // Only the diagonal of Sigma is needed.
  const Vector diag = std::visit(
      Overloaded{
          [](const DiagonalCov& c) -> Vector { return c.var; },
          [](const PrecisionFactorCov& c) -> Vector { return dense_covariance(c).diagonal(); },
          [](const StructuredCov& c) -> Vector { return c.w.cwiseAbs2() * c.var; },
      },
      cov);
  Vector out(d / kJointDim);
  for (Eigen::Index j = 0; j < out.size(); ++j) out[j] = diag.segment(kJointDim * j, kJointDim).sum();
  return out;
}

}  // namespace handunc
