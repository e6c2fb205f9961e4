#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <tuple>

#include <gtest/gtest.h>

#include "handunc/commands.hpp"
#include "oracles.hpp"

using namespace handunc;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "handunc");
  std::ostringstream out, err;
  Result r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

// Small settings so each training run takes well under a second.
const std::vector<std::string> kSmall = {"--d-f", "16", "--hidden", "16", "--batch", "16"};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("handunc_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string dataset(long n = 120, int seed = 3) {
    const std::string p = path("d" + std::to_string(n) + "_" + std::to_string(seed) + ".jsonl");
    if (!fs::exists(p)) {
      const auto r = invoke({"--seed", std::to_string(seed), "--out", p, "generate", "--n", std::to_string(n)});
      EXPECT_EQ(r.code, 0) << r.err;
    }
    return p;
  }

  Result train(const std::string& out, std::vector<std::string> extra) {
    std::vector<std::string> args = {"--seed", "5", "--out", out, "train", "--data", dataset()};
    args.insert(args.end(), kSmall.begin(), kSmall.end());
    args.insert(args.end(), extra.begin(), extra.end());
    return invoke(args);
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, GenerateIsByteIdenticalAndParses) {
  const auto a = invoke({"--seed", "9", "--out", path("a.jsonl"), "generate", "--n", "40"});
  const auto b = invoke({"generate", "--n", "40", "--seed", "9", "--out", path("b.jsonl")});
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(slurp(path("a.jsonl")), slurp(path("b.jsonl")));
  const auto ds = handsim::load_dataset(path("a.jsonl"));
  EXPECT_EQ(ds.samples.size(), 40u);
  EXPECT_EQ(ds.header.seed, 9u);
  EXPECT_EQ(ds.header.feature_dim, 43);
  invoke({"--seed", "10", "--out", path("c.jsonl"), "generate", "--n", "40"});
  EXPECT_NE(slurp(path("a.jsonl")), slurp(path("c.jsonl")));
}

TEST_F(Cli, GenerateRejectsBadArguments) {
  EXPECT_NE(invoke({"--out", path("x.jsonl"), "generate", "--n", "0"}).code, 0);
  EXPECT_EQ(invoke({"generate", "--n", "5"}).code, cli::kUsage);
  EXPECT_EQ(invoke({"--out", path("x.jsonl"), "generate"}).code, cli::kUsage);
  EXPECT_EQ(invoke({"bogus"}).code, cli::kUsage);
  EXPECT_EQ(invoke({}).code, cli::kUsage);
}

TEST_F(Cli, TrainWritesCheckpointTraceAndConfig) {
  const auto r = train(path("ck.txt"), {"--iters", "200"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = csv_rows(slurp(path("ck.loss.csv")));
  ASSERT_EQ(rows.size(), 201u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"iteration", "total", "deter", "nll", "mse"}));
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_EQ(std::stol(rows[i][0]), static_cast<long>(i));
  const auto ck = net::load_checkpoint(path("ck.txt"));
  EXPECT_EQ(ck.config.head, net::HeadKind::Structured);
  EXPECT_EQ(ck.config.d_in, 43);
  EXPECT_EQ(ck.config.d_f, 16);
  const auto cfg = load_config(path("ck.config.json"));
  EXPECT_EQ(cfg.train.iterations, 200);
  EXPECT_EQ(cfg.model, ck.config);
}

TEST_F(Cli, TrainIsDeterministic) {
  ASSERT_EQ(train(path("a.txt"), {"--iters", "30"}).code, 0);
  ASSERT_EQ(train(path("b.txt"), {"--iters", "30"}).code, 0);
  EXPECT_EQ(slurp(path("a.txt")), slurp(path("b.txt")));
  EXPECT_EQ(slurp(path("a.loss.csv")), slurp(path("b.loss.csv")));
}

TEST_F(Cli, SampleCountSweepWritesOneCheckpointEach) {
  const auto r = train(path("s.txt"), {"--iters", "10", "--n-samples", "1,5,10,25"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (int n : {1, 5, 10, 25}) {
    const std::string stem = "s.n" + std::to_string(n);
    ASSERT_TRUE(fs::exists(path(stem + ".txt"))) << stem;
    EXPECT_TRUE(fs::exists(path(stem + ".loss.csv")));
    EXPECT_EQ(net::load_checkpoint(path(stem + ".txt")).config.n_samples, n);
  }
}

TEST_F(Cli, ZeroUncertaintyWeightsMatchDeterministicTrace) {
  ASSERT_EQ(train(path("diag.txt"), {"--iters", "40", "--head", "diagonal", "--lambda-nll", "0"}).code, 0);
  ASSERT_EQ(train(path("det.txt"), {"--iters", "40", "--head", "deterministic"}).code, 0);
  const auto a = csv_rows(slurp(path("diag.loss.csv")));
  const auto b = csv_rows(slurp(path("det.loss.csv")));
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 1; i < a.size(); ++i) {
    EXPECT_EQ(a[i][1], b[i][1]) << "row " << i;
    EXPECT_EQ(a[i][2], b[i][2]) << "row " << i;
  }
}

TEST_F(Cli, TrainRejectsInvalidCombinations) {
  EXPECT_EQ(train(path("f.txt"), {"--iters", "5", "--head", "full", "--lambda-mse", "0.1"}).code, cli::kUsage);
  EXPECT_EQ(train(path("f.txt"), {"--iters", "5", "--head", "diagonal", "--freeze-w"}).code, cli::kUsage);
  EXPECT_EQ(train(path("f.txt"), {"--iters", "5", "--head", "banana"}).code, cli::kUsage);
  EXPECT_EQ(train(path("f.txt"), {"--iters", "5", "--holdout", "1"}).code, cli::kUsage);
}

TEST_F(Cli, EvalReportMatchesPredictionsFile) {
  ASSERT_EQ(train(path("ck.txt"), {"--iters", "60"}).code, 0);
  for (const std::string split : {"holdout", "train"}) {
    const std::string prefix = path("ev_" + split);
    const auto r = invoke(
        {"--out", prefix, "eval", "--data", dataset(), "--checkpoint", path("ck.txt"), "--split", split, "--oracle"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto preds = metrics::load_predictions(prefix + ".predictions.csv");
    EXPECT_EQ(preds.size(), 21u * (split == "holdout" ? 24u : 96u));

    // Recompute MPJPE and AUSC without the library's metric code.
    double sum = 0.0;
    std::vector<std::tuple<double, std::uint64_t, int, double>> rows;
    for (const auto& p : preds) {
      const double e = (p.pred - p.gt).norm() * 1000.0;
      sum += e;
      rows.emplace_back(p.uncertainty, p.sample_id, p.joint_id, e);
    }
    std::sort(rows.begin(), rows.end());
    std::vector<double> ordered;
    for (const auto& t : rows) ordered.push_back(std::get<3>(t));

    const auto json = nlohmann::json::parse(slurp(prefix + ".report.json"));
    EXPECT_NEAR(json["mpjpe_mm"].get<double>(), sum / static_cast<double>(preds.size()), 1e-9);
    EXPECT_NEAR(json["ausc_mm"].get<double>(), oracle::area(ordered), 1e-9);
    EXPECT_EQ(json["num_joints"].get<std::size_t>(), preds.size());
    EXPECT_EQ(json["curve"]["errors"].size(), 50u);

    std::ostringstream txt;
    write_report_text(txt, compute_report(preds));
    EXPECT_EQ(slurp(prefix + ".report.txt"), txt.str());
    EXPECT_TRUE(fs::exists(prefix + ".oracle.report.json"));
    EXPECT_NE(r.out.find("mpjpe_mm = "), std::string::npos);
  }
}

TEST_F(Cli, EvalRejectsMismatchedCheckpoint) {
  net::ModelConfig cfg;
  cfg.d_in = 10;
  cfg.d_f = 4;
  cfg.hidden_layers = {};
  net::save_checkpoint(path("bad.txt"), cfg, net::init_params(cfg, 1));
  const auto r = invoke({"--out", path("ev"), "eval", "--data", dataset(), "--checkpoint", path("bad.txt")});
  EXPECT_EQ(r.code, cli::kIncompatible);
  EXPECT_NE(r.err.find("feature_dim"), std::string::npos);
}

TEST_F(Cli, CurvesMatchSparsification) {
  ASSERT_EQ(train(path("ck.txt"), {"--iters", "20"}).code, 0);
  ASSERT_EQ(invoke({"--out", path("ev"), "eval", "--data", dataset(), "--checkpoint", path("ck.txt")}).code, 0);
  const auto r = invoke({"--out", path("cv"), "curves", "--pred", path("ev.predictions.csv"), "--label", "model"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = csv_rows(slurp(path("cv.csv")));
  ASSERT_EQ(rows.size(), 1u + 2u * 50u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"method", "x", "error_mm"}));
  const auto curve = metrics::sparsification(metrics::load_predictions(path("ev.predictions.csv")));
  for (int i = 0; i < 50; ++i) {
    EXPECT_EQ(rows[1 + i][0], "model");
    EXPECT_EQ(std::stod(rows[1 + i][1]), curve.fractions[i]);
    EXPECT_EQ(std::stod(rows[1 + i][2]), curve.errors[i]);
    EXPECT_EQ(rows[51 + i][0], "model oracle");
    EXPECT_EQ(std::stod(rows[51 + i][2]), curve.oracle_errors[i]);
  }

  // Every opened element is closed in order.
  const std::string svg = slurp(path("cv.svg"));
  ASSERT_NE(svg.find("<svg"), std::string::npos);
  std::vector<std::string> stack;
  for (std::size_t pos = svg.find('<'); pos != std::string::npos; pos = svg.find('<', pos + 1)) {
    const std::size_t end = svg.find('>', pos);
    ASSERT_NE(end, std::string::npos);
    const std::string tag = svg.substr(pos + 1, end - pos - 1);
    if (tag.empty() || tag[0] == '?' || tag[0] == '!' || tag.back() == '/') continue;
    const std::string name = tag.substr(tag[0] == '/' ? 1 : 0, tag.find_first_of(" \n", 0) - (tag[0] == '/'));
    if (tag[0] == '/') {
      ASSERT_FALSE(stack.empty());
      EXPECT_EQ(stack.back(), name);
      stack.pop_back();
    } else {
      stack.push_back(name);
    }
  }
  EXPECT_TRUE(stack.empty());
}

TEST_F(Cli, FlatUncertaintyAuseMatchesBruteForce) {
  std::mt19937_64 rng(70);
  std::vector<metrics::JointPrediction> preds;
  for (std::uint64_t s = 0; s < 5; ++s)
    for (int j = 0; j < 21; ++j) {
      metrics::JointPrediction p;
      p.sample_id = s;
      p.joint_id = j;
      p.gt = oracle::random_vector(3, rng, 0.05);
      p.pred = p.gt + oracle::random_vector(3, rng, 0.01);
      p.uncertainty = 0.5;
      preds.push_back(p);
    }
  // Shuffle file order: ranking must still follow (sample, joint).
  std::reverse(preds.begin(), preds.end());
  metrics::save_predictions(path("flat.csv"), preds);
  ASSERT_EQ(invoke({"--out", path("cv"), "curves", "--pred", path("flat.csv")}).code, 0);

  std::vector<double> id_order(105), by_error;
  for (const auto& p : preds) id_order[p.sample_id * 21 + p.joint_id] = (p.pred - p.gt).norm() * 1000.0;
  by_error = id_order;
  std::sort(by_error.begin(), by_error.end());
  const double expected = oracle::area(id_order) - oracle::area(by_error);
  const auto rows = csv_rows(slurp(path("cv.csv")));
  double gap = 0.0;
  for (int i = 0; i < 50; ++i) gap += std::stod(rows[1 + i][2]) - std::stod(rows[51 + i][2]);
  EXPECT_NEAR(gap / 50.0, expected, 1e-9);
  EXPECT_EQ(rows[1][0], "flat");
}

TEST_F(Cli, CurvesReportErrors) {
  {
    std::ofstream os(path("bad.csv"));
    os << "sample_id,joint_id,pred_x,pred_y,pred_z,gt_x,gt_y,gt_z,uncertainty\n0,0,1,2\n";
  }
  EXPECT_EQ(invoke({"--out", path("cv"), "curves", "--pred", path("bad.csv")}).code, cli::kParse);
  EXPECT_EQ(invoke({"--out", path("cv"), "curves", "--pred", path("missing.csv")}).code, cli::kIo);
  EXPECT_EQ(invoke({"--out", path("cv"), "curves"}).code, cli::kUsage);
}

TEST_F(Cli, ParamcountTables) {
  const auto r = invoke({"paramcount"});
  ASSERT_EQ(r.code, 0);
  for (const char* s : {"64512", "129024", "4128768", "132993", "0.065M", "4.129M"})
    EXPECT_NE(r.out.find(s), std::string::npos) << s;
  const auto unit = invoke({"paramcount", "--d-f", "1", "--d-o", "1"});
  std::istringstream is(unit.out);
  std::string line;
  std::getline(is, line);
  std::vector<long long> counts;
  std::string name, approx;
  long long n = 0;
  while (is >> name >> n >> approx) counts.push_back(n);
  EXPECT_EQ(counts, (std::vector<long long>{1, 2, 2, 3}));
  const auto small = invoke({"paramcount", "--d-f", "8", "--d-o", "6"});
  std::istringstream is2(small.out);
  std::getline(is2, line);
  counts.clear();
  while (is2 >> name >> n >> approx) counts.push_back(n);
  // 6*8, 2*6*8, 8*6*(6+1), 2*6*8 + 6*6
  EXPECT_EQ(counts, (std::vector<long long>{48, 96, 336, 132}));
}

TEST_F(Cli, ConfigAndCheckpointRoundTrip) {
  ExperimentConfig c;
  c.paths.dataset = "data/x.jsonl";
  c.model.head = net::HeadKind::Diagonal;
  c.model.hidden_layers = {7, 9};
  c.model.init_std = 0.0125;
  c.train.lr = 3e-4;
  c.train.iterations = 77;
  c.metrics.unit = metrics::SparsificationUnit::PerSample;
  c.holdout_fraction = 0.3;
  c.seed = 12345678901234ull;
  save_config(path("c.json"), c);
  EXPECT_EQ(load_config(path("c.json")), c);

  net::ModelConfig m;
  m.d_in = 5;
  m.d_f = 6;
  m.hidden_layers = {4};
  m.head = net::HeadKind::Full;
  const auto params = net::init_params(m, 8);
  net::save_checkpoint(path("k.txt"), m, params);
  const auto back = net::load_checkpoint(path("k.txt"));
  EXPECT_EQ(back.config, m);
  net::save_checkpoint(path("k2.txt"), back.config, back.params);
  EXPECT_EQ(slurp(path("k.txt")), slurp(path("k2.txt")));
}

TEST_F(Cli, ConfigFileFeedsTrainAndFlagsOverride) {
  ExperimentConfig c;
  c.paths.dataset = dataset();
  c.model.d_f = 12;
  c.model.hidden_layers = {8};
  c.model.head = net::HeadKind::Diagonal;
  c.train.iterations = 15;
  c.train.batch_size = 8;
  save_config(path("c.json"), c);
  const auto r = invoke({"--config", path("c.json"), "--out", path("ck.txt"), "train", "--iters", "12"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto used = load_config(path("ck.config.json"));
  EXPECT_EQ(used.model.d_f, 12);
  EXPECT_EQ(used.model.head, net::HeadKind::Diagonal);
  EXPECT_EQ(used.train.iterations, 12);
  EXPECT_EQ(used.train.lambda_mse, c.train.lambda_mse);
  EXPECT_EQ(invoke({"--config", path("nope.json"), "--out", path("x.txt"), "train"}).code, cli::kIo);
  {
    std::ofstream os(path("broken.json"));
    os << "{\"model\": ";
  }
  EXPECT_EQ(invoke({"--config", path("broken.json"), "--out", path("x.txt"), "train"}).code, cli::kParse);
}

TEST_F(Cli, ExitCodesForIoParseAndNumericalFailures) {
  EXPECT_EQ(invoke({"--out", path("x.txt"), "train", "--data", path("missing.jsonl")}).code, cli::kIo);

  // Corrupt one record of an otherwise valid dataset.
  std::string text = slurp(dataset());
  const std::size_t at = text.find("\"features\":[", text.find('\n'));
  std::string broken = text;
  broken.replace(at, 12, "\"features\":[oops,");
  {
    std::ofstream os(path("broken.jsonl"), std::ios::binary);
    os << broken;
  }
  const auto p = invoke({"--out", path("x.txt"), "train", "--data", path("broken.jsonl"), "--iters", "2"});
  EXPECT_EQ(p.code, cli::kParse);
  EXPECT_NE(p.err.find("line 2"), std::string::npos) << p.err;

  // Steps far beyond floating-point range overflow the loss after one update.
  const auto n = train(path("x.txt"), {"--iters", "3", "--lr", "1e300"});
  EXPECT_EQ(n.code, cli::kNumerical) << n.err;
  EXPECT_NE(n.err.find("iteration 2"), std::string::npos);
}
