#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "handunc/adamw.hpp"
#include "handunc/errors.hpp"
#include "handunc/model.hpp"
#include "handunc/random.hpp"

namespace handunc::net {

/// Inputs and targets as columns.
struct TrainingSet {
  Matrix x;  // d_in x n
  Matrix y;  // d_o x n

  Eigen::Index size() const { return x.cols(); }
};

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int batch_size = 64;
  long iterations = 1000;
  std::uint64_t seed = 0;
  double lambda_nll = kDefaultLambdaNll;
  double lambda_mse = kDefaultLambdaMse;
  bool freeze_sigma_against_mse = false;
  /// Keeps the structured head's shared W at its initial identity.
  bool freeze_w = false;

  bool operator==(const TrainConfig&) const = default;
};

inline void validate(const TrainConfig& t) {
  if (!(t.lr > 0.0)) throw Error(ErrorCode::InvalidArgument, "lr must be > 0");
  if (!(t.weight_decay >= 0.0)) throw Error(ErrorCode::InvalidArgument, "weight_decay must be >= 0");
  if (!(t.beta1 >= 0.0 && t.beta1 < 1.0) || !(t.beta2 >= 0.0 && t.beta2 < 1.0))
    throw Error(ErrorCode::InvalidArgument, "betas must lie in [0, 1)");
  if (t.batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch_size must be >= 1");
  if (t.iterations < 1) throw Error(ErrorCode::InvalidArgument, "iterations must be >= 1");
  if (!(t.lambda_nll >= 0.0) || !(t.lambda_mse >= 0.0))
    throw Error(ErrorCode::InvalidArgument, "loss weights must be >= 0");
}

struct LossRecord {
  long iteration = 0;  // 1-based
  LossParts parts;
};

struct TrainResult {
  ModelParams params;
  std::vector<LossRecord> trace;
};

/// Mini-batch AdamW on the combined objective.
///
/// Determinism: parameters come from init_params(mcfg, seed); batches from an
/// epoch-wise shuffle on the Shuffle substream; reparameterization draws from
/// the Reparam substream, taken only when the objective uses samples.
inline TrainResult train(const TrainingSet& data, const ModelConfig& mcfg, const TrainConfig& tcfg,
                         const std::function<void(const LossRecord&)>& on_iteration = {}) {
  validate(mcfg);
  validate(tcfg);
  if (data.size() == 0) throw Error(ErrorCode::EmptyInput, "training set is empty");
  if (data.x.rows() != mcfg.d_in || data.y.rows() != mcfg.d_o || data.y.cols() != data.size())
    throw Error(ErrorCode::ShapeError, "training set does not match the model dimensions");

  const ObjectiveOptions opt{tcfg.lambda_nll, tcfg.lambda_mse, tcfg.freeze_sigma_against_mse};
  if (mcfg.head == HeadKind::Full && opt.lambda_mse > 0.0)
    throw Error(ErrorCode::InvalidArgument, "the full head has no sampled MSE term; set lambda_mse = 0");
  const bool sampled = uses_samples(mcfg.head, opt);

  TrainResult result;
  result.params = init_params(mcfg, tcfg.seed);
  ModelParams grad = zeros_like(result.params);
  AdamW optimizer({tcfg.lr, tcfg.weight_decay, tcfg.beta1, tcfg.beta2, 1e-8});

  Rng shuffle_rng = make_rng(tcfg.seed, Stream::Shuffle);
  Rng reparam_rng = make_rng(tcfg.seed, Stream::Reparam);
  const Eigen::Index n = data.size();
  const Eigen::Index batch = std::min<Eigen::Index>(tcfg.batch_size, n);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Eigen::Index cursor = n;  // forces a shuffle before the first batch

  Matrix xb(mcfg.d_in, batch), yb(mcfg.d_o, batch), eps;
  result.trace.reserve(static_cast<std::size_t>(tcfg.iterations));
  for (long it = 1; it <= tcfg.iterations; ++it) {
    if (cursor + batch > n) {
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      cursor = 0;
    }
    for (Eigen::Index b = 0; b < batch; ++b) {
      const Eigen::Index idx = order[static_cast<std::size_t>(cursor + b)];
      xb.col(b) = data.x.col(idx);
      yb.col(b) = data.y.col(idx);
    }
    cursor += batch;
    if (sampled) eps = standard_normal(mcfg.d_o, static_cast<Eigen::Index>(mcfg.n_samples) * batch, reparam_rng);

    const LossParts parts = evaluate_objective(result.params, mcfg, opt, xb, yb, eps, &grad);
    if (!std::isfinite(parts.total)) throw TrainingDiverged(it);

    optimizer.begin_step();
    std::size_t slot = 0;
    std::vector<std::span<const double>> grads;
    for_each_tensor(grad, [&](const std::string&, const auto& g) { grads.emplace_back(g.data(), g.size()); });
    for_each_tensor(result.params, [&](const std::string& name, auto& t) {
      const std::size_t s = slot++;
      if (name == "shared_w" && tcfg.freeze_w) return;
      optimizer.update(s, {t.data(), static_cast<std::size_t>(t.size())}, grads[s]);
    });

    LossRecord rec{it, parts};
    if (on_iteration) on_iteration(rec);
    result.trace.push_back(rec);
  }
  return result;
}

}  // namespace handunc::net
