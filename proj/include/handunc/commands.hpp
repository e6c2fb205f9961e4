#pragma once

// Command-line surface: generate, train, eval, curves, paramcount.
//
// Exit codes:
//   0 success            2 usage / invalid argument   3 I/O
//   4 parse / config     5 numerical failure          6 incompatible checkpoint
//   1 anything else
//
// Seed substreams: `--seed` feeds dataset generation (one substream per
// sample id) and training (parameter init, shuffling and reparameterization
// draws each get their own substream); see random.hpp.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "handunc/checkpoint.hpp"
#include "handunc/config.hpp"
#include "handunc/dataset_io.hpp"
#include "handunc/evaluation.hpp"
#include "handunc/handsim.hpp"
#include "handunc/model.hpp"
#include "handunc/predictions_io.hpp"
#include "handunc/svg.hpp"
#include "handunc/train.hpp"

namespace handunc::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kIo = 3,
  kParse = 4,
  kNumerical = 5,
  kIncompatible = 6,
};

inline int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::IoError: return kIo;
    case ErrorCode::ParseError: return kParse;
    case ErrorCode::TrainingDiverged:
    case ErrorCode::NotPositiveDefinite:
    case ErrorCode::NonInvertiblePrecision: return kNumerical;
    case ErrorCode::IncompatibleCheckpoint: return kIncompatible;
    case ErrorCode::InvalidArgument:
    case ErrorCode::ShapeError:
    case ErrorCode::EmptyInput:
    case ErrorCode::InsufficientData: return kUsage;
    default: return kFailure;
  }
}

/// "<stem><suffix>" next to `path`, e.g. ("out/ck.txt", ".loss.csv") -> "out/ck.loss.csv".
inline std::string sibling(const std::string& path, const std::string& suffix) {
  std::filesystem::path p(path);
  return (p.parent_path() / (p.stem().string() + suffix)).string();
}

inline std::string write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
  os << text;
  if (!os) throw Error(ErrorCode::IoError, "failed writing " + path);
  return path;
}

struct GlobalOptions {
  std::uint64_t seed = 0;
  std::string config_path;
  std::string out;
};

inline ExperimentConfig base_config(const GlobalOptions& g, const CLI::App& app) {
  ExperimentConfig cfg = g.config_path.empty() ? ExperimentConfig{} : load_config(g.config_path);
  if (app.count("--seed") > 0 || g.config_path.empty()) cfg.seed = g.seed;
  return cfg;
}

// ---------------------------------------------------------------- generate

struct GenerateOptions {
  long n = 0;
  double base_var = 1e-4;
  std::optional<double> occlusion;
};

inline int cmd_generate(const GlobalOptions& g, const CLI::App& app, const GenerateOptions& o, std::ostream& out) {
  if (o.n < 1) throw Error(ErrorCode::InvalidArgument, "--n must be >= 1");
  if (g.out.empty()) throw Error(ErrorCode::InvalidArgument, "--out is required");
  const ExperimentConfig cfg = base_config(g, app);
  handsim::NoiseProfile np;
  np.base_var = o.base_var;
  np.fixed_occlusion = o.occlusion;
  const auto skel = handsim::default_skeleton();
  const auto samples = handsim::generate(skel, static_cast<std::size_t>(o.n), cfg.seed, np);
  handsim::DatasetHeader h;
  h.skeleton_hash = handsim::skeleton_hash_hex(skel);
  h.count = samples.size();
  h.seed = cfg.seed;
  handsim::save_dataset(g.out, h, samples);
  out << "generated n=" << samples.size() << " seed=" << cfg.seed << " skeleton=" << h.skeleton_hash << " -> "
      << g.out << '\n';
  return kOk;
}

// ------------------------------------------------------------------- train

struct TrainOptions {
  std::string data;
  std::string head;
  long iters = 0;
  std::vector<int> n_samples;
  double lambda_nll = 0.0;
  double lambda_mse = 0.0;
  bool freeze_w = false;
  bool freeze_sigma_mse = false;
  double lr = 0.0;
  double weight_decay = 0.0;
  int batch = 0;
  int d_f = 0;
  std::vector<int> hidden;
  double init_std = 0.0;
  double holdout = 0.0;
  std::string trace;
};

/// Resolves defaults < config file < explicit flags.
inline ExperimentConfig resolve_train_config(const GlobalOptions& g, const CLI::App& app, const CLI::App& sub,
                                             const TrainOptions& o) {
  ExperimentConfig cfg = base_config(g, app);
  auto given = [&](const char* flag) { return sub.count(flag) > 0; };
  if (given("--data")) cfg.paths.dataset = o.data;
  if (!g.out.empty()) cfg.paths.checkpoint = g.out;
  if (given("--head")) cfg.model.head = net::parse_head_kind(o.head);
  if (given("--iters")) cfg.train.iterations = o.iters;
  if (given("--lambda-nll")) cfg.train.lambda_nll = o.lambda_nll;
  if (given("--lambda-mse")) {
    cfg.train.lambda_mse = o.lambda_mse;
  } else if (g.config_path.empty() && cfg.model.head != net::HeadKind::Structured) {
    // Only the structured head carries the sampled term by default.
    cfg.train.lambda_mse = 0.0;
  }
  if (given("--freeze-w")) cfg.train.freeze_w = o.freeze_w;
  if (given("--freeze-sigma-mse")) cfg.train.freeze_sigma_against_mse = o.freeze_sigma_mse;
  if (given("--lr")) cfg.train.lr = o.lr;
  if (given("--weight-decay")) cfg.train.weight_decay = o.weight_decay;
  if (given("--batch")) cfg.train.batch_size = o.batch;
  if (given("--d-f")) cfg.model.d_f = o.d_f;
  if (given("--hidden")) cfg.model.hidden_layers = o.hidden;
  if (given("--init-std")) cfg.model.init_std = o.init_std;
  if (given("--holdout")) cfg.holdout_fraction = o.holdout;
  if (given("--n-samples") && o.n_samples.size() == 1) cfg.model.n_samples = o.n_samples.front();
  cfg.train.seed = cfg.seed;
  if (cfg.train.freeze_w && cfg.model.head != net::HeadKind::Structured)
    throw Error(ErrorCode::InvalidArgument, "--freeze-w applies to the structured head only");
  if (cfg.model.head == net::HeadKind::Full && cfg.train.lambda_mse > 0.0)
    throw Error(ErrorCode::InvalidArgument, "the full head has no sampled MSE term; use --lambda-mse 0");
  return cfg;
}

inline int cmd_train(const GlobalOptions& g, const CLI::App& app, const CLI::App& sub, const TrainOptions& o,
                     std::ostream& out) {
  ExperimentConfig cfg = resolve_train_config(g, app, sub, o);
  if (cfg.paths.dataset.empty()) throw Error(ErrorCode::InvalidArgument, "--data is required");
  if (cfg.paths.checkpoint.empty()) throw Error(ErrorCode::InvalidArgument, "--out is required");
  if (!(cfg.holdout_fraction >= 0.0 && cfg.holdout_fraction < 1.0))
    throw Error(ErrorCode::InvalidArgument, "--holdout must lie in [0, 1)");

  const handsim::Dataset ds = handsim::load_dataset(cfg.paths.dataset);
  const std::size_t split = split_index(ds.samples.size(), cfg.holdout_fraction);
  if (split == 0) throw Error(ErrorCode::EmptyInput, "no training samples left after the holdout split");
  const std::span<const handsim::SyntheticSample> train_part(ds.samples.data(), split);
  const net::TrainingSet set = to_training_set(train_part);
  cfg.model.d_in = static_cast<int>(set.x.rows());

  std::vector<int> sweep = o.n_samples;
  if (sweep.size() <= 1) sweep = {cfg.model.n_samples};
  for (int n : sweep) {
    ExperimentConfig run = cfg;
    run.model.n_samples = n;
    std::string ck_path = cfg.paths.checkpoint;
    if (sweep.size() > 1) {
      std::filesystem::path p(ck_path);
      ck_path = (p.parent_path() / (p.stem().string() + ".n" + std::to_string(n) + p.extension().string())).string();
    }
    run.paths.checkpoint = ck_path;
    const std::string trace_path =
        (!o.trace.empty() && sweep.size() == 1) ? o.trace : sibling(ck_path, ".loss.csv");

    const net::TrainResult res = net::train(set, run.model, run.train);
    net::save_checkpoint(ck_path, run.model, res.params);
    net::save_loss_trace(trace_path, res.trace);
    save_config(sibling(ck_path, ".config.json"), run);
    const auto& last = res.trace.back().parts;
    out << "trained head=" << net::to_string(run.model.head) << " n_samples=" << n
        << " iters=" << run.train.iterations << " final_total=" << metrics::format_double(last.total) << " -> "
        << ck_path << '\n';
  }
  return kOk;
}

// -------------------------------------------------------------------- eval

struct EvalOptions {
  std::string data;
  std::string checkpoint;
  std::string split = "holdout";
  double holdout = 0.0;
  bool oracle = false;
  std::string unit;
};

inline int cmd_eval(const GlobalOptions& g, const CLI::App& app, const CLI::App& sub, const EvalOptions& o,
                    std::ostream& out) {
  ExperimentConfig cfg = base_config(g, app);
  if (sub.count("--data") > 0) cfg.paths.dataset = o.data;
  if (sub.count("--checkpoint") > 0) cfg.paths.checkpoint = o.checkpoint;
  if (sub.count("--holdout") > 0) cfg.holdout_fraction = o.holdout;
  if (sub.count("--oracle") > 0) cfg.metrics.include_oracle = o.oracle;
  if (sub.count("--unit") > 0) cfg.metrics.unit = parse_sparsification_unit(o.unit);
  if (cfg.paths.dataset.empty() || cfg.paths.checkpoint.empty())
    throw Error(ErrorCode::InvalidArgument, "--data and --checkpoint are required");
  if (g.out.empty()) throw Error(ErrorCode::InvalidArgument, "--out (report prefix) is required");

  const net::Checkpoint ck = net::load_checkpoint(cfg.paths.checkpoint);
  const handsim::Dataset ds = handsim::load_dataset(cfg.paths.dataset);
  if (ds.header.feature_dim != ck.config.d_in)
    throw Error(ErrorCode::IncompatibleCheckpoint, "dataset feature_dim " + std::to_string(ds.header.feature_dim) +
                                                       " != checkpoint d_in " + std::to_string(ck.config.d_in));
  const std::size_t split = split_index(ds.samples.size(), cfg.holdout_fraction);
  std::span<const handsim::SyntheticSample> part(ds.samples);
  if (o.split == "holdout") {
    part = part.subspan(split);
  } else if (o.split == "train") {
    part = part.subspan(0, split);
  } else if (o.split != "all") {
    throw Error(ErrorCode::InvalidArgument, "--split must be holdout, train or all");
  }
  if (part.empty()) throw Error(ErrorCode::EmptyInput, "selected split is empty");

  const auto preds = predict_joints(ck.params, ck.config, part);
  const std::string pred_path = g.out + ".predictions.csv";
  metrics::save_predictions(pred_path, preds);
  auto emit = [&](const std::vector<metrics::JointPrediction>& p, const std::string& prefix) {
    const MetricsReport rep = compute_report(p, cfg.metrics.unit);
    std::ostringstream txt;
    write_report_text(txt, rep);
    write_text_file(prefix + ".report.txt", txt.str());
    write_text_file(prefix + ".report.json", report_json(rep).dump(2) + "\n");
    return txt.str();
  };
  out << emit(preds, g.out);
  if (cfg.metrics.include_oracle) {
    const auto oracle = with_oracle_uncertainty(preds, part);
    metrics::save_predictions(g.out + ".oracle.predictions.csv", oracle);
    out << "# oracle uncertainty\n" << emit(oracle, g.out + ".oracle");
  }
  return kOk;
}

// ------------------------------------------------------------------ curves

struct CurvesOptions {
  std::vector<std::string> preds;
  std::vector<std::string> labels;
  std::string unit;
};

inline int cmd_curves(const GlobalOptions& g, const CLI::App& sub, const CurvesOptions& o, std::ostream& out) {
  if (o.preds.empty()) throw Error(ErrorCode::InvalidArgument, "at least one --pred file is required");
  if (g.out.empty()) throw Error(ErrorCode::InvalidArgument, "--out (output prefix) is required");
  if (!o.labels.empty() && o.labels.size() != o.preds.size())
    throw Error(ErrorCode::InvalidArgument, "--label must be given once per --pred");
  const auto unit = sub.count("--unit") > 0 ? parse_sparsification_unit(o.unit)
                                            : metrics::SparsificationUnit::PooledJoints;

  std::vector<svg::Series> series;
  std::ostringstream csv;
  csv << "method,x,error_mm\n";
  auto add = [&](const std::string& label, const std::array<double, metrics::kCurvePoints>& xs,
                 const std::array<double, metrics::kCurvePoints>& ys, bool dashed) {
    svg::Series s{label, {xs.begin(), xs.end()}, {ys.begin(), ys.end()}, dashed};
    for (int i = 0; i < metrics::kCurvePoints; ++i)
      csv << label << ',' << metrics::format_double(xs[i]) << ',' << metrics::format_double(ys[i]) << '\n';
    series.push_back(std::move(s));
  };
  for (std::size_t i = 0; i < o.preds.size(); ++i) {
    const std::string label =
        o.labels.empty() ? std::filesystem::path(o.preds[i]).stem().string() : o.labels[i];
    const auto preds = metrics::load_predictions(o.preds[i]);
    const auto curve = metrics::sparsification(preds, unit);
    add(label, curve.fractions, curve.errors, false);
    add(label + " oracle", curve.fractions, curve.oracle_errors, true);
    out << label << ": ausc_mm=" << metrics::format_double(curve.ausc)
        << " ause_mm=" << metrics::format_double(*curve.ause) << '\n';
  }
  write_text_file(g.out + ".csv", csv.str());
  std::ostringstream chart;
  svg::write_line_chart(chart, series, "Sparsification curves", "fraction of joints kept (%)", "mean error (mm)");
  write_text_file(g.out + ".svg", chart.str());
  out << "wrote " << g.out << ".csv and " << g.out << ".svg\n";
  return kOk;
}

// -------------------------------------------------------------- paramcount

inline std::string format_millions(std::int64_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3fM", static_cast<double>(n) / 1e6);
  return buf;
}

inline int cmd_paramcount(long d_f, long d_o, std::ostream& out) {
  char line[128];
  std::snprintf(line, sizeof line, "%-14s %12s %10s\n", "head", "params", "approx");
  out << line;
  for (auto k : {net::HeadKind::Deterministic, net::HeadKind::Diagonal, net::HeadKind::Full,
                 net::HeadKind::Structured}) {
    const auto n = net::head_param_count(k, d_f, d_o);
    std::snprintf(line, sizeof line, "%-14s %12lld %10s\n", std::string(net::to_string(k)).c_str(),
                  static_cast<long long>(n), format_millions(n).c_str());
    out << line;
  }
  return kOk;
}

// --------------------------------------------------------------------- run

/// Parses `args` (args[0] is the program name) and runs one command.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Correlation-aware aleatoric uncertainty for 3D hand joints"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--seed", g.seed, "Seed for every random substream");
  app.add_option("--config", g.config_path, "Experiment config (JSON)");
  app.add_option("--out", g.out, "Output path or prefix");

  GenerateOptions gen;
  auto* generate = app.add_subcommand("generate", "Write a synthetic hand dataset");
  generate->add_option("--n", gen.n, "Number of samples")->required();
  generate->add_option("--base-var", gen.base_var, "Base noise variance (m^2)");
  generate->add_option("--occlusion", gen.occlusion, "Fix every sample's occlusion in [0, 1]");

  TrainOptions tr;
  auto* train = app.add_subcommand("train", "Train a model and write a checkpoint plus loss trace");
  train->add_option("--data", tr.data, "Dataset file");
  train->add_option("--head", tr.head, "deterministic | diagonal | full | structured");
  train->add_option("--iters", tr.iters, "Iterations");
  train->add_option("--n-samples", tr.n_samples, "Samples per element; several values run a sweep")->delimiter(',');
  train->add_option("--lambda-nll", tr.lambda_nll, "NLL weight");
  train->add_option("--lambda-mse", tr.lambda_mse, "Sampled MSE weight");
  train->add_flag("--freeze-w", tr.freeze_w, "Keep W at the identity (no linear layer)");
  train->add_flag("--freeze-sigma-mse", tr.freeze_sigma_mse, "Block sampled-MSE gradients into sigma");
  train->add_option("--lr", tr.lr, "AdamW step size");
  train->add_option("--weight-decay", tr.weight_decay, "AdamW decoupled weight decay");
  train->add_option("--batch", tr.batch, "Batch size");
  train->add_option("--d-f", tr.d_f, "Feature width");
  train->add_option("--hidden", tr.hidden, "Hidden widths before the feature layer")->delimiter(',');
  train->add_option("--init-std", tr.init_std, "Initial predictive std (m)");
  train->add_option("--holdout", tr.holdout, "Held-out trailing fraction");
  train->add_option("--trace", tr.trace, "Loss trace CSV path");

  EvalOptions ev;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint and write predictions and reports");
  eval->add_option("--data", ev.data, "Dataset file");
  eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint file");
  eval->add_option("--split", ev.split, "holdout | train | all");
  eval->add_option("--holdout", ev.holdout, "Held-out trailing fraction");
  eval->add_flag("--oracle", ev.oracle, "Also score the generative oracle uncertainty");
  eval->add_option("--unit", ev.unit, "pooled_joints | per_sample");

  CurvesOptions cu;
  auto* curves = app.add_subcommand("curves", "Sparsification curves as CSV and SVG");
  curves->add_option("--pred", cu.preds, "Predictions file (repeatable)");
  curves->add_option("--label", cu.labels, "Label per predictions file");
  curves->add_option("--unit", cu.unit, "pooled_joints | per_sample");

  long d_f = 1024, d_o = kOutputDim;
  auto* paramcount = app.add_subcommand("paramcount", "Head parameter counts per parameterization");
  paramcount->add_option("--d-f", d_f, "Feature dimension");
  paramcount->add_option("--d-o", d_o, "Output dimension");

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  try {
    if (generate->parsed()) return cmd_generate(g, app, gen, out);
    if (train->parsed()) return cmd_train(g, app, *train, tr, out);
    if (eval->parsed()) return cmd_eval(g, app, *eval, ev, out);
    if (curves->parsed()) return cmd_curves(g, *curves, cu, out);
    if (paramcount->parsed()) return cmd_paramcount(d_f, d_o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}

inline int run(int argc, char** argv) { return run(std::vector<std::string>(argv, argv + argc)); }

}  // namespace handunc::cli
