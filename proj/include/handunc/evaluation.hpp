#pragma once

// Glue between datasets, trained models and the metric suite.

#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "handunc/handsim.hpp"
#include "handunc/metrics.hpp"
#include "handunc/model.hpp"
#include "handunc/predictions_io.hpp"
#include "handunc/train.hpp"

namespace handunc {

inline net::TrainingSet to_training_set(std::span<const handsim::SyntheticSample> samples) {
  net::TrainingSet set;
  if (samples.empty()) return set;
  set.x.resize(samples.front().features.size(), static_cast<Eigen::Index>(samples.size()));
  set.y.resize(kOutputDim, static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    set.x.col(static_cast<Eigen::Index>(i)) = samples[i].features;
    set.y.col(static_cast<Eigen::Index>(i)) = samples[i].gt_joints;
  }
  return set;
}

/// Splits at floor((1 - holdout_fraction) * n): [0, split) trains, the rest is held out.
inline std::size_t split_index(std::size_t n, double holdout_fraction) {
  const auto held = static_cast<std::size_t>(holdout_fraction * static_cast<double>(n));
  return n - std::min(held, n);
}

/// Per-joint predictions with trace uncertainty; deterministic heads report 0.
inline std::vector<metrics::JointPrediction> predict_joints(const net::ModelParams& params,
                                                            const net::ModelConfig& cfg,
                                                            std::span<const handsim::SyntheticSample> samples,
                                                            Eigen::Index chunk = 256) {
  std::vector<metrics::JointPrediction> out;
  out.reserve(samples.size() * kNumJoints);
  for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(chunk)) {
    const std::size_t stop = std::min(samples.size(), start + static_cast<std::size_t>(chunk));
    const net::TrainingSet set = to_training_set(samples.subspan(start, stop - start));
    const net::ForwardCache c = net::forward_batch(params, cfg, set.x);
    for (std::size_t i = start; i < stop; ++i) {
      const auto col = static_cast<Eigen::Index>(i - start);
      const net::ModelOutput o = net::output_at(params, cfg, c, col);
      const Vector u = o.cov ? joint_trace_uncertainty(*o.cov) : Vector::Zero(kNumJoints);
      for (int j = 0; j < kNumJoints; ++j)
        out.push_back({samples[i].id, j, o.mean.segment<3>(3 * j), samples[i].gt_joints.segment<3>(3 * j), u[j]});
    }
  }
  return out;
}

/// Same predictions with the uncertainty replaced by the generative oracle.
inline std::vector<metrics::JointPrediction> with_oracle_uncertainty(
    std::vector<metrics::JointPrediction> preds, std::span<const handsim::SyntheticSample> samples) {
  std::size_t k = 0;
  for (const auto& s : samples) {
    const Vector u = handsim::oracle_uncertainty(s);
    for (int j = 0; j < kNumJoints; ++j, ++k) preds.at(k).uncertainty = u[j];
  }
  return preds;
}

struct MetricsReport {
  std::size_t num_samples = 0;
  std::size_t num_joints = 0;
  double mpjpe_mm = 0.0;
  double pa_mpjpe_mm = 0.0;
  double ausc_mm = 0.0;
  double ause_mm = 0.0;
  /// Absent when uncertainties (or errors) have zero variance.
  std::optional<double> pearson;
  metrics::SparsificationCurve curve;
};

/// Scores a prediction list. PA-MPJPE is averaged over samples that carry
/// all 21 joints.
inline MetricsReport compute_report(std::span<const metrics::JointPrediction> preds,
                                    metrics::SparsificationUnit unit = metrics::SparsificationUnit::PooledJoints) {
  MetricsReport r;
  r.num_joints = preds.size();
  r.mpjpe_mm = metrics::mpjpe(preds);
  r.curve = metrics::sparsification(preds, unit);
  r.ausc_mm = r.curve.ausc;
  r.ause_mm = *r.curve.ause;
  try {
    r.pearson = metrics::uncertainty_error_correlation(preds);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::UndefinedCorrelation) throw;
  }

  std::map<std::uint64_t, std::pair<Vector, Vector>> sets;
  std::map<std::uint64_t, int> counts;
  for (const auto& p : preds) {
    auto& [pred, gt] = sets[p.sample_id];
    if (pred.size() == 0) {
      pred = Vector::Zero(kOutputDim);
      gt = Vector::Zero(kOutputDim);
    }
    pred.segment<3>(3 * p.joint_id) = p.pred;
    gt.segment<3>(3 * p.joint_id) = p.gt;
    ++counts[p.sample_id];
  }
  double pa = 0.0;
  std::size_t used = 0;
  for (const auto& [id, pg] : sets) {
    if (counts[id] != kNumJoints) continue;
    pa += metrics::pa_mpjpe(pg.first, pg.second);
    ++used;
  }
  r.num_samples = sets.size();
  r.pa_mpjpe_mm = used ? pa / static_cast<double>(used) : 0.0;
  return r;
}

inline nlohmann::ordered_json report_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["num_samples"] = r.num_samples;
  j["num_joints"] = r.num_joints;
  j["mpjpe_mm"] = r.mpjpe_mm;
  j["pa_mpjpe_mm"] = r.pa_mpjpe_mm;
  j["ausc_mm"] = r.ausc_mm;
  j["ause_mm"] = r.ause_mm;
  j["pearson"] = r.pearson ? nlohmann::ordered_json(*r.pearson) : nlohmann::ordered_json(nullptr);
  j["curve"] = {{"fractions", r.curve.fractions}, {"errors", r.curve.errors}, {"oracle", r.curve.oracle_errors}};
  return j;
}

/// key = value lines.
inline void write_report_text(std::ostream& os, const MetricsReport& r) {
  os << "num_samples = " << r.num_samples << '\n';
  os << "num_joints = " << r.num_joints << '\n';
  os << "mpjpe_mm = " << metrics::format_double(r.mpjpe_mm) << '\n';
  os << "pa_mpjpe_mm = " << metrics::format_double(r.pa_mpjpe_mm) << '\n';
  os << "ausc_mm = " << metrics::format_double(r.ausc_mm) << '\n';
  os << "ause_mm = " << metrics::format_double(r.ause_mm) << '\n';
  os << "pearson = " << (r.pearson ? metrics::format_double(*r.pearson) : std::string("undefined")) << '\n';
}

}  // namespace handunc
