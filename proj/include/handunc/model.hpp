#pragma once

// Desk-scale regressor: dense tanh feature extractor, a mean head and one of
// four uncertainty parameterizations on top.
//
//   deterministic  mean only
//   diagonal       mean + log-variance head
//   full           one head emitting [mu, vec(A)] with Psi = A A^T
//   structured     mean + log-variance head + shared, input-independent W

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "handunc/errors.hpp"
#include "handunc/gaussian.hpp"
#include "handunc/losses.hpp"
#include "handunc/random.hpp"

namespace handunc::net {

enum class HeadKind { Deterministic, Diagonal, Full, Structured };

inline std::string_view to_string(HeadKind k) {
  switch (k) {
    case HeadKind::Deterministic: return "deterministic";
    case HeadKind::Diagonal: return "diagonal";
    case HeadKind::Full: return "full";
    case HeadKind::Structured: return "structured";
  }
  return "?";
}

inline HeadKind parse_head_kind(std::string_view s) {
  if (s == "deterministic") return HeadKind::Deterministic;
  if (s == "diagonal") return HeadKind::Diagonal;
  if (s == "full") return HeadKind::Full;
  if (s == "structured") return HeadKind::Structured;
  throw Error(ErrorCode::InvalidArgument, "unknown head kind '" + std::string(s) + "'");
}

/// Head parameter count, biases excluded:
/// deterministic d_f d_o, diagonal 2 d_f d_o, full d_f (d_o + d_o^2),
/// structured 2 d_f d_o + d_o^2.
inline std::int64_t head_param_count(HeadKind kind, std::int64_t d_f, std::int64_t d_o) {
  if (d_f < 1 || d_o < 1) throw Error(ErrorCode::InvalidArgument, "d_f and d_o must be >= 1");
  switch (kind) {
    case HeadKind::Deterministic: return d_f * d_o;
    case HeadKind::Diagonal: return 2 * d_f * d_o;
    case HeadKind::Full: return d_f * (d_o + d_o * d_o);
    case HeadKind::Structured: return 2 * d_f * d_o + d_o * d_o;
  }
  return 0;
}

struct ModelConfig {
  int d_in = 0;
  int d_f = 1024;
  int d_o = kOutputDim;
  HeadKind head = HeadKind::Structured;
  int n_samples = 25;
  /// Widths of the dense layers before the final d_f-wide feature layer.
  std::vector<int> hidden_layers = {256};
  /// Initial predictive standard deviation (m): log-variance biases start at
  /// 2 log(init_std) and the full head's A at I / init_std.
  double init_std = 1.0;

  bool operator==(const ModelConfig&) const = default;
};

inline void validate(const ModelConfig& c) {
  if (c.d_in < 1) throw Error(ErrorCode::InvalidArgument, "d_in must be >= 1");
  if (c.d_f < 1) throw Error(ErrorCode::InvalidArgument, "d_f must be >= 1");
  if (c.d_o != kOutputDim) throw Error(ErrorCode::InvalidArgument, "d_o must be 63");
  if (c.n_samples < 1) throw Error(ErrorCode::InvalidArgument, "n_samples must be >= 1");
  for (int w : c.hidden_layers)
    if (w < 1) throw Error(ErrorCode::InvalidArgument, "hidden widths must be >= 1");
  if (!(c.init_std > 0.0)) throw Error(ErrorCode::InvalidArgument, "init_std must be > 0");
}

inline bool has_variance_head(HeadKind k) { return k == HeadKind::Diagonal || k == HeadKind::Structured; }

struct Dense {
  Matrix w;  // out x in
  Vector b;  // out
};

struct ModelParams {
  std::vector<Dense> feature_layers;  // tanh after each
  Dense mean_head;                    // deterministic / diagonal / structured
  Dense log_var_head;                 // diagonal / structured
  Dense full_head;                    // full: rows [mu; row-major vec(A)]
  Matrix shared_w;                    // structured
};

/// Visits every non-empty parameter tensor in a fixed order as
/// f(name, tensor) where tensor is a Matrix& or Vector&.
template <class Params, class F>
void for_each_tensor(Params& p, F&& f) {
  auto dense = [&](const std::string& prefix, auto& layer) {
    if (layer.w.size() > 0) f(prefix + ".w", layer.w);
    if (layer.b.size() > 0) f(prefix + ".b", layer.b);
  };
  for (std::size_t i = 0; i < p.feature_layers.size(); ++i)
    dense("feature." + std::to_string(i), p.feature_layers[i]);
  dense("mean_head", p.mean_head);
  dense("log_var_head", p.log_var_head);
  dense("full_head", p.full_head);
  if (p.shared_w.size() > 0) f(std::string("shared_w"), p.shared_w);
}

/// Same layout as `params`, every entry zero.
inline ModelParams zeros_like(const ModelParams& params) {
  ModelParams z = params;
  for_each_tensor(z, [](const std::string&, auto& t) { t.setZero(); });
  return z;
}

/// Biases-excluded parameter count of the configured head, for comparison
/// with head_param_count().
inline std::int64_t head_weight_count(const ModelParams& p) {
  return p.mean_head.w.size() + p.log_var_head.w.size() + p.full_head.w.size() + p.shared_w.size();
}

namespace detail {

inline Dense init_dense(int out, int in, double stddev, Rng& rng) {
  Dense d;
  d.w = stddev * standard_normal(out, in, rng);
  d.b = Vector::Zero(out);
  return d;
}

}  // namespace detail

/// Initial parameters. The feature extractor and mean head draw from one
/// substream and the variance / full heads from their own, so the shared part
/// is identical for every head kind under the same seed.
inline ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  ModelParams p;
  Rng rng = make_rng(seed, Stream::ParamInit);
  int in = cfg.d_in;
  std::vector<int> widths = cfg.hidden_layers;
  widths.push_back(cfg.d_f);
  for (int out : widths) {
    // Xavier-normal for tanh layers.
    p.feature_layers.push_back(detail::init_dense(out, in, std::sqrt(2.0 / (in + out)), rng));
    in = out;
  }
  const double head_std = std::sqrt(1.0 / cfg.d_f);
  const double log_var0 = 2.0 * std::log(cfg.init_std);
  switch (cfg.head) {
    case HeadKind::Deterministic:
      p.mean_head = detail::init_dense(cfg.d_o, cfg.d_f, head_std, rng);
      break;
    case HeadKind::Diagonal:
    case HeadKind::Structured:
      p.mean_head = detail::init_dense(cfg.d_o, cfg.d_f, head_std, rng);
      p.log_var_head.w = Matrix::Zero(cfg.d_o, cfg.d_f);
      p.log_var_head.b = Vector::Constant(cfg.d_o, log_var0);
      if (cfg.head == HeadKind::Structured) p.shared_w = Matrix::Identity(cfg.d_o, cfg.d_o);
      break;
    case HeadKind::Full: {
      Rng full_rng = make_rng(seed, Stream::FullHeadInit);
      const int rows = cfg.d_o + cfg.d_o * cfg.d_o;
      p.full_head.w = Matrix::Zero(rows, cfg.d_f);
      p.full_head.w.topRows(cfg.d_o) = head_std * standard_normal(cfg.d_o, cfg.d_f, full_rng);
      p.full_head.b = Vector::Zero(rows);
      // A starts at I / init_std so that A A^T = I / init_std^2.
      for (int i = 0; i < cfg.d_o; ++i) p.full_head.b[cfg.d_o + i * cfg.d_o + i] = 1.0 / cfg.init_std;
      break;
    }
  }
  return p;
}

/// Checks that `p` has the tensor shapes `cfg` implies.
inline bool shapes_match(const ModelParams& p, const ModelConfig& cfg) {
  try {
    const ModelParams ref = init_params(cfg, 0);
    std::vector<std::pair<std::string, std::pair<Eigen::Index, Eigen::Index>>> a, b;
    for_each_tensor(ref, [&](const std::string& n, const auto& t) { a.push_back({n, {t.rows(), t.cols()}}); });
    for_each_tensor(p, [&](const std::string& n, const auto& t) { b.push_back({n, {t.rows(), t.cols()}}); });
    return a == b;
  } catch (const Error&) {
    return false;
  }
}

/// Activations kept for the backward pass; columns are batch elements.
struct ForwardCache {
  std::vector<Matrix> activations;  // [input, layer0 out, ..., features]
  Matrix mean;                      // d_o x B
  Matrix log_var;                   // d_o x B (variance heads)
  Matrix full_out;                  // (d_o + d_o^2) x B (full head)

  const Matrix& features() const { return activations.back(); }
};

inline ForwardCache forward_batch(const ModelParams& p, const ModelConfig& cfg, const Matrix& x) {
  if (x.rows() != cfg.d_in)
    throw Error(ErrorCode::ShapeError,
                "input has " + std::to_string(x.rows()) + " rows, model expects " + std::to_string(cfg.d_in));
  ForwardCache c;
  c.activations.reserve(p.feature_layers.size() + 1);
  c.activations.push_back(x);
  for (const auto& layer : p.feature_layers) {
    Matrix z = (layer.w * c.activations.back()).colwise() + layer.b;
    c.activations.push_back(z.array().tanh().matrix());
  }
  const Matrix& f = c.features();
  if (cfg.head == HeadKind::Full) {
    c.full_out = (p.full_head.w * f).colwise() + p.full_head.b;
    c.mean = c.full_out.topRows(cfg.d_o);
  } else {
    c.mean = (p.mean_head.w * f).colwise() + p.mean_head.b;
    if (has_variance_head(cfg.head)) c.log_var = (p.log_var_head.w * f).colwise() + p.log_var_head.b;
  }
  return c;
}

/// Row-major reshape of the A block of column `b` of the full head output.
inline Matrix precision_factor(const ForwardCache& c, const ModelConfig& cfg, Eigen::Index b) {
  const Eigen::Index d = cfg.d_o;
  Matrix a(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) a(i, j) = c.full_out(d + i * d + j, b);
  return a;
}

/// Model output for one input: the mean, plus a covariance unless the head
/// is deterministic.
struct ModelOutput {
  Vector mean;
  std::optional<CovarianceParam> cov;

  /// Throws InvalidArgument for deterministic outputs.
  GaussianBelief belief() const {
    if (!cov) throw Error(ErrorCode::InvalidArgument, "deterministic output carries no covariance");
    return {mean, *cov};
  }
};

inline ModelOutput output_at(const ModelParams& p, const ModelConfig& cfg, const ForwardCache& c, Eigen::Index b) {
  ModelOutput out;
  out.mean = c.mean.col(b);
  switch (cfg.head) {
    case HeadKind::Deterministic: break;
    case HeadKind::Diagonal: out.cov = DiagonalCov{sigma_from_log_var(c.log_var.col(b)).array().square()}; break;
    case HeadKind::Structured:
      out.cov = StructuredCov{p.shared_w, sigma_from_log_var(c.log_var.col(b)).array().square()};
      break;
    case HeadKind::Full: out.cov = PrecisionFactorCov{precision_factor(c, cfg, b)}; break;
  }
  return out;
}

inline ModelOutput forward(const ModelParams& p, const ModelConfig& cfg, const Vector& x) {
  const ForwardCache c = forward_batch(p, cfg, x);
  return output_at(p, cfg, c, 0);
}

/// Loss weights and gradient routing for one objective evaluation.
struct ObjectiveOptions {
  double lambda_nll = kDefaultLambdaNll;
  double lambda_mse = kDefaultLambdaMse;
  bool freeze_sigma_against_mse = false;
};

/// Batch-mean loss components; total = deter + lambda_nll nll + lambda_mse mse.
struct LossParts {
  double total = 0.0;
  double deter = 0.0;
  double nll = 0.0;
  double mse = 0.0;
};

inline bool uses_samples(HeadKind k, const ObjectiveOptions& o) {
  return has_variance_head(k) && o.lambda_mse > 0.0;
}

/// Full training objective on a batch and, when `grad` is non-null, its
/// gradient with respect to every tensor in `p` (written into `grad`, which
/// must have the layout of `p`).
///
/// deter is ||mu - y||^2 per element. Variance heads add the diagonal NLL and,
/// when lambda_mse > 0, the sampled MSE over the draws in `eps`
/// (d_o x (n_samples * B), element b owns columns [b N, (b + 1) N)). The
/// diagonal head mixes its samples with the identity. The full head adds the
/// precision NLL and takes no sampled term.
inline LossParts evaluate_objective(const ModelParams& p, const ModelConfig& cfg, const ObjectiveOptions& opt,
                                    const Matrix& x, const Matrix& y, const Matrix& eps, ModelParams* grad) {
  const Eigen::Index batch = x.cols();
  if (batch == 0) throw Error(ErrorCode::EmptyBatch, "empty batch");
  if (y.rows() != cfg.d_o || y.cols() != batch) throw Error(ErrorCode::ShapeError, "targets do not match batch");
  if (cfg.head == HeadKind::Full && opt.lambda_mse > 0.0)
    throw Error(ErrorCode::InvalidArgument, "the full head has no sampled MSE term; set lambda_mse = 0");
  const bool sampled = uses_samples(cfg.head, opt);
  const int n = cfg.n_samples;
  if (sampled && (eps.rows() != cfg.d_o || eps.cols() != n * batch))
    throw Error(ErrorCode::ShapeError, "eps must be d_o x (n_samples * batch)");

  const ForwardCache c = forward_batch(p, cfg, x);
  const Eigen::Index d = cfg.d_o;
  const double inv_b = 1.0 / static_cast<double>(batch);

  Matrix d_mean = Matrix::Zero(d, batch);
  Matrix d_log_var;
  Matrix d_full;
  Matrix d_shared_w;
  if (has_variance_head(cfg.head)) d_log_var = Matrix::Zero(d, batch);
  if (cfg.head == HeadKind::Full) d_full = Matrix::Zero(d + d * d, batch);
  if (cfg.head == HeadKind::Structured) d_shared_w = Matrix::Zero(d, d);
  const Matrix identity = cfg.head == HeadKind::Diagonal ? Matrix::Identity(d, d) : Matrix();
  const Matrix& mixing = cfg.head == HeadKind::Structured ? p.shared_w : identity;

  LossParts parts;
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Vector mu = c.mean.col(b);
    const Vector target = y.col(b);
    const Vector r = mu - target;
    parts.deter += r.squaredNorm();
    Eigen::Ref<Vector> dmu = d_mean.col(b);
    dmu += 2.0 * inv_b * r;

    if (has_variance_head(cfg.head)) {
      const Vector lv = c.log_var.col(b);
      const LossGrad nll = diag_nll({mu, lv, target});
      parts.nll += nll.value;
      if (opt.lambda_nll != 0.0) {
        dmu += (opt.lambda_nll * inv_b) * nll.d_mu;
        d_log_var.col(b) += (opt.lambda_nll * inv_b) * *nll.d_log_var;
      }
      if (sampled) {
        const SampleDraws draws{mu, lv, mixing, eps.middleCols(b * n, n)};
        const LossGrad mse = sampled_mse(target, draws, !opt.freeze_sigma_against_mse);
        parts.mse += mse.value;
        const double scale = opt.lambda_mse * inv_b;
        dmu += scale * mse.d_mu;
        if (mse.d_log_var) d_log_var.col(b) += scale * *mse.d_log_var;
        if (cfg.head == HeadKind::Structured) d_shared_w += scale * *mse.d_w;
      }
    } else if (cfg.head == HeadKind::Full) {
      const Matrix a = precision_factor(c, cfg, b);
      const LossGrad nll = full_nll_precision(mu, a, target);
      parts.nll += nll.value;
      if (opt.lambda_nll != 0.0) {
        const double scale = opt.lambda_nll * inv_b;
        dmu += scale * nll.d_mu;
        for (Eigen::Index i = 0; i < d; ++i)
          for (Eigen::Index j = 0; j < d; ++j) d_full(d + i * d + j, b) = scale * (*nll.d_a)(i, j);
      }
    }
  }
  parts.deter *= inv_b;
  parts.nll *= inv_b;
  parts.mse *= inv_b;
  parts.total = combined_loss(parts.deter, parts.nll, parts.mse, opt.lambda_nll, opt.lambda_mse);
  if (!grad) return parts;

  // Backward through the heads.
  const Matrix& f = c.features();
  Matrix d_feat;
  if (cfg.head == HeadKind::Full) {
    d_full.topRows(d) = d_mean;
    grad->full_head.w.noalias() = d_full * f.transpose();
    grad->full_head.b = d_full.rowwise().sum();
    d_feat.noalias() = p.full_head.w.transpose() * d_full;
  } else {
    grad->mean_head.w.noalias() = d_mean * f.transpose();
    grad->mean_head.b = d_mean.rowwise().sum();
    d_feat.noalias() = p.mean_head.w.transpose() * d_mean;
    if (has_variance_head(cfg.head)) {
      grad->log_var_head.w.noalias() = d_log_var * f.transpose();
      grad->log_var_head.b = d_log_var.rowwise().sum();
      if (opt.lambda_nll != 0.0 || sampled) d_feat.noalias() += p.log_var_head.w.transpose() * d_log_var;
    }
    if (cfg.head == HeadKind::Structured) grad->shared_w = d_shared_w;
  }

  // Backward through the tanh feature layers.
  Matrix d_act = std::move(d_feat);
  for (std::size_t li = p.feature_layers.size(); li-- > 0;) {
    const Matrix& out = c.activations[li + 1];
    const Matrix d_z = d_act.cwiseProduct((1.0 - out.array().square()).matrix());
    grad->feature_layers[li].w.noalias() = d_z * c.activations[li].transpose();
    grad->feature_layers[li].b = d_z.rowwise().sum();
    if (li > 0) d_act.noalias() = p.feature_layers[li].w.transpose() * d_z;
  }
  return parts;
}

}  // namespace handunc::net
