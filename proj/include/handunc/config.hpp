#pragma once

// Experiment configuration and its JSON file format. Every field is written
// on save, so load -> save -> load is lossless.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "handunc/errors.hpp"
#include "handunc/metrics.hpp"
#include "handunc/model.hpp"
#include "handunc/train.hpp"

namespace handunc {

struct PathsConfig {
  std::string dataset;
  std::string checkpoint;
  std::string report_dir = ".";

  bool operator==(const PathsConfig&) const = default;
};

struct MetricFlags {
  metrics::SparsificationUnit unit = metrics::SparsificationUnit::PooledJoints;
  /// Also score the generative-covariance oracle uncertainty.
  bool include_oracle = false;

  bool operator==(const MetricFlags&) const = default;
};

struct ExperimentConfig {
  PathsConfig paths;
  net::ModelConfig model;
  net::TrainConfig train;
  MetricFlags metrics;
  /// Trailing fraction of the dataset held out for evaluation.
  double holdout_fraction = 0.2;
  std::uint64_t seed = 0;

  bool operator==(const ExperimentConfig&) const = default;
};

inline std::string_view to_string(metrics::SparsificationUnit u) {
  return u == metrics::SparsificationUnit::PooledJoints ? "pooled_joints" : "per_sample";
}

inline metrics::SparsificationUnit parse_sparsification_unit(std::string_view s) {
  if (s == "pooled_joints") return metrics::SparsificationUnit::PooledJoints;
  if (s == "per_sample") return metrics::SparsificationUnit::PerSample;
  throw Error(ErrorCode::InvalidArgument, "unknown sparsification unit '" + std::string(s) + "'");
}

namespace net {

inline void to_json(nlohmann::ordered_json& j, const ModelConfig& c) {
  j = nlohmann::ordered_json{{"d_in", c.d_in},
                             {"d_f", c.d_f},
                             {"d_o", c.d_o},
                             {"head", std::string(to_string(c.head))},
                             {"n_samples", c.n_samples},
                             {"hidden_layers", c.hidden_layers},
                             {"init_std", c.init_std}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.d_in = j.at("d_in").get<int>();
  c.d_f = j.at("d_f").get<int>();
  c.d_o = j.at("d_o").get<int>();
  c.head = parse_head_kind(j.at("head").get<std::string>());
  c.n_samples = j.at("n_samples").get<int>();
  c.hidden_layers = j.at("hidden_layers").get<std::vector<int>>();
  c.init_std = j.at("init_std").get<double>();
}

inline void to_json(nlohmann::ordered_json& j, const TrainConfig& c) {
  j = nlohmann::ordered_json{{"lr", c.lr},
                             {"weight_decay", c.weight_decay},
                             {"beta1", c.beta1},
                             {"beta2", c.beta2},
                             {"batch_size", c.batch_size},
                             {"iterations", c.iterations},
                             {"seed", c.seed},
                             {"lambda_nll", c.lambda_nll},
                             {"lambda_mse", c.lambda_mse},
                             {"freeze_sigma_against_mse", c.freeze_sigma_against_mse},
                             {"freeze_w", c.freeze_w}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.lr = j.at("lr").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.iterations = j.at("iterations").get<long>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.lambda_nll = j.at("lambda_nll").get<double>();
  c.lambda_mse = j.at("lambda_mse").get<double>();
  c.freeze_sigma_against_mse = j.at("freeze_sigma_against_mse").get<bool>();
  c.freeze_w = j.at("freeze_w").get<bool>();
}

}  // namespace net

inline nlohmann::ordered_json to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["paths"] = {{"dataset", c.paths.dataset}, {"checkpoint", c.paths.checkpoint}, {"report_dir", c.paths.report_dir}};
  j["model"] = c.model;
  j["train"] = c.train;
  j["metrics"] = {{"unit", std::string(to_string(c.metrics.unit))}, {"include_oracle", c.metrics.include_oracle}};
  j["holdout_fraction"] = c.holdout_fraction;
  j["seed"] = c.seed;
  return j;
}

/// Missing sections keep their defaults; present keys must be well-typed.
inline ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      c.paths.dataset = p.value("dataset", c.paths.dataset);
      c.paths.checkpoint = p.value("checkpoint", c.paths.checkpoint);
      c.paths.report_dir = p.value("report_dir", c.paths.report_dir);
    }
    if (j.contains("model")) c.model = j.at("model").get<net::ModelConfig>();
    if (j.contains("train")) c.train = j.at("train").get<net::TrainConfig>();
    if (j.contains("metrics")) {
      const auto& m = j.at("metrics");
      c.metrics.unit = parse_sparsification_unit(m.value("unit", std::string("pooled_joints")));
      c.metrics.include_oracle = m.value("include_oracle", false);
    }
    c.holdout_fraction = j.value("holdout_fraction", c.holdout_fraction);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("config: ") + e.what());
  }
  if (!(c.holdout_fraction >= 0.0 && c.holdout_fraction < 1.0))
    throw Error(ErrorCode::InvalidArgument, "holdout_fraction must lie in [0, 1)");
  return c;
}

inline std::string dump_config(const ExperimentConfig& c) { return to_json(c).dump(2) + "\n"; }

inline ExperimentConfig parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ParseError, std::string("config: ") + e.what());
  }
  return experiment_from_json(j);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

inline void save_config(const std::string& path, const ExperimentConfig& c) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
  os << dump_config(c);
}

}  // namespace handunc
