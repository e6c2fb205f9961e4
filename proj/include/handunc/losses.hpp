#pragma once

// Training objectives with hand-derived gradients: per-dimension diagonal
// NLL, precision-factor NLL, the reparameterized sampled MSE and the weighted
// combination of the three.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "handunc/errors.hpp"
#include "handunc/gaussian.hpp"

namespace handunc {

inline constexpr double kLogVarMin = -20.0;
inline constexpr double kLogVarMax = 10.0;

inline constexpr double kDefaultLambdaNll = 5e-4;
inline constexpr double kDefaultLambdaMse = 5e-4;

/// Value plus the gradients a particular loss produces. Components a loss
/// does not touch stay empty.
struct LossGrad {
  double value = 0.0;
  Vector d_mu;
  std::optional<Vector> d_log_var;
  std::optional<Matrix> d_w;
  std::optional<Matrix> d_a;
};

struct DiagNllInput {
  Vector mu;
  Vector log_var;
  Vector y;
};

inline double clamp_log_var(double s) { return std::clamp(s, kLogVarMin, kLogVarMax); }

/// sum_i (y_i - mu_i)^2 / (2 exp(s_i)) + 0.5 s_i, with s = log_var clamped to
/// [kLogVarMin, kLogVarMax]. No 2 pi constant. The log_var gradient is zero
/// where the clamp is active.
inline LossGrad diag_nll(const DiagNllInput& in) {
  const Eigen::Index d = in.mu.size();
  if (in.log_var.size() != d || in.y.size() != d) throw Error(ErrorCode::ShapeError, "diag_nll: size mismatch");
  LossGrad out;
  out.d_mu.resize(d);
  Vector d_log_var(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double s = clamp_log_var(in.log_var[i]);
    const double inv_var = std::exp(-s);
    const double r = in.y[i] - in.mu[i];
    const double half_sq = 0.5 * r * r * inv_var;
    out.value += half_sq + 0.5 * s;
    out.d_mu[i] = -r * inv_var;
    const bool clamped = in.log_var[i] < kLogVarMin || in.log_var[i] > kLogVarMax;
    d_log_var[i] = clamped ? 0.0 : 0.5 - half_sq;
  }
  out.d_log_var = std::move(d_log_var);
  return out;
}

/// 0.5 r^T Psi r - 0.5 log det Psi with Psi = A A^T and r = y - mu.
///
/// d_mu = -Psi r and d_A = (r r^T - Psi^{-1}) A = r (r^T A) - A^{-T}.
inline LossGrad full_nll_precision(const Vector& mu, const Matrix& a, const Vector& y) {
  const Eigen::Index d = mu.size();
  if (a.rows() != d || a.cols() != d || y.size() != d)
    throw Error(ErrorCode::ShapeError, "full_nll_precision: size mismatch");
  Eigen::FullPivLU<Matrix> lu(a);
  if (!lu.isInvertible()) throw Error(ErrorCode::NotPositiveDefinite, "precision A * A^T is singular");

  const Vector r = y - mu;
  const Vector t = a.transpose() * r;  // A^T r
  LossGrad out;
  out.value = 0.5 * t.squaredNorm() - detail::log_abs_det(lu);
  out.d_mu = -(a * t);
  const Matrix a_inv_t = lu.inverse().transpose();
  out.d_a = r * t.transpose() - a_inv_t;
  return out;
}

/// Reparameterized sample set: sample n is mu + W (sigma .* eps.col(n)),
/// sigma = exp(0.5 * clamp(log_var)).
struct SampleDraws {
  Vector mu;
  Vector log_var;
  Matrix w;
  Matrix eps;  // d x N
};

inline Vector sigma_from_log_var(const Vector& log_var) {
  return log_var.unaryExpr([](double s) { return std::exp(0.5 * clamp_log_var(s)); });
}

/// Materializes the samples described by `draws` as columns (d x N).
inline Matrix reparam_samples(const SampleDraws& draws) {
  const Vector sigma = sigma_from_log_var(draws.log_var);
  return (draws.w * (sigma.asDiagonal() * draws.eps)).colwise() + draws.mu;
}

/// (1/N) sum_n ||y - yhat_n||^2 for already-materialized samples.
inline double sampled_mse_value(const Vector& y, const std::vector<Vector>& samples) {
  if (samples.empty()) throw Error(ErrorCode::EmptyBatch, "sampled_mse needs at least one sample");
  double acc = 0.0;
  for (const auto& s : samples) {
    if (s.size() != y.size()) throw Error(ErrorCode::ShapeError, "sample has wrong dimension");
    acc += (y - s).squaredNorm();
  }
  return acc / static_cast<double>(samples.size());
}

/// Sampled MSE with gradients chained through the reparameterization into
/// mu, log_var and W. With `sigma_gets_grad == false` the log_var gradient is
/// left empty (sigma frozen against this term).
inline LossGrad sampled_mse(const Vector& y, const SampleDraws& draws, bool sigma_gets_grad = true) {
  const Eigen::Index d = draws.mu.size();
  const Eigen::Index n = draws.eps.cols();
  if (n == 0) throw Error(ErrorCode::EmptyBatch, "sampled_mse needs at least one sample");
  if (y.size() != d || draws.log_var.size() != d || draws.w.rows() != d || draws.w.cols() != d ||
      draws.eps.rows() != d)
    throw Error(ErrorCode::ShapeError, "sampled_mse: size mismatch");

  const Vector sigma = sigma_from_log_var(draws.log_var);
  const Matrix scaled = sigma.asDiagonal() * draws.eps;                // s_n = sigma .* eps_n
  const Matrix resid = (draws.w * scaled).colwise() + (draws.mu - y);  // e_n = yhat_n - y
  const double inv_n = 1.0 / static_cast<double>(n);

  LossGrad out;
  out.value = resid.colwise().squaredNorm().sum() * inv_n;
  const Matrix d_yhat = (2.0 * inv_n) * resid;
  out.d_mu = d_yhat.rowwise().sum();
  out.d_w = d_yhat * scaled.transpose();
  if (sigma_gets_grad) {
    // d s_nk / d log_var_k = 0.5 s_nk
    const Matrix d_scaled = draws.w.transpose() * d_yhat;
    Vector d_log_var = 0.5 * d_scaled.cwiseProduct(scaled).rowwise().sum();
    for (Eigen::Index k = 0; k < d; ++k)
      if (draws.log_var[k] < kLogVarMin || draws.log_var[k] > kLogVarMax) d_log_var[k] = 0.0;
    out.d_log_var = std::move(d_log_var);
  }
  return out;
}

/// deter + lambda_nll * nll + lambda_mse * mse.
inline double combined_loss(double deter, double nll, double mse, double lambda_nll = kDefaultLambdaNll,
                            double lambda_mse = kDefaultLambdaMse) {
  if (lambda_nll < 0.0 || lambda_mse < 0.0) throw Error(ErrorCode::InvalidArgument, "loss weights must be >= 0");
  return deter + lambda_nll * nll + lambda_mse * mse;
}

}  // namespace handunc
