#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "iopcal/cli/app.hpp"
#include "iopcal/cli/commands.hpp"
#include "iopcal/cli/model_file.hpp"
#include "iopcal/error.hpp"

namespace iopcal::cli {
namespace {

using nlohmann::json;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    std::random_device rd;
    dir_ = fs::temp_directory_path() / ("iopcal_cli_" + std::to_string(rd()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  int call(std::vector<std::string> args) {
    args.insert(args.begin(), "iopcal");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    out_.str("");
    err_.str("");
    return run(static_cast<int>(argv.size()), argv.data(), out_, err_);
  }

  void synth(const std::string& name, const std::string& miscal, int seed, int samples = 2000,
             int classes = 10) {
    ASSERT_EQ(call({"synth", "--classes", std::to_string(classes), "--samples",
                    std::to_string(samples), "--miscal", miscal, "--seed", std::to_string(seed),
                    "--out", path(name)}),
              0)
        << err_.str();
  }

  json read_json(const std::string& name) {
    std::ifstream in(path(name));
    return json::parse(in);
  }

  std::string read_text(const std::string& name) {
    std::ifstream in(path(name), std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), {});
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

TEST_F(CliTest, SynthIsDeterministicBySeed) {
  synth("a.csv", "temp:3", 5, 300);
  synth("b.csv", "temp:3", 5, 300);
  synth("c.csv", "temp:3", 6, 300);
  EXPECT_EQ(read_text("a.csv"), read_text("b.csv"));
  EXPECT_NE(read_text("a.csv"), read_text("c.csv"));
  synth("a.bin", "temp:3", 5, 300);
  EXPECT_EQ(load_dataset(path("a.bin")).logits, load_dataset(path("a.csv")).logits);
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  synth("d.csv", "temp:1", 1, 50);
  EXPECT_EQ(call({"fit", "--method", "ts", "--out", path("m.json")}), 2);
  EXPECT_EQ(call({"fit", "--method", "platt", "--train", path("d.csv"), "--out", path("m.json")}),
            2);
  EXPECT_EQ(call({"synth", "--miscal", "warp:2", "--out", path("x.csv")}), 2);
  EXPECT_EQ(call({"synth", "--miscal", "temp:0", "--out", path("x.csv")}), 2);
  EXPECT_EQ(call({}), 2);
  EXPECT_EQ(call({"eval", "--model", path("missing.json"), "--test", path("d.csv")}), 2);
  EXPECT_EQ(call({"fit", "--method", "ts", "--train", path("d.csv"), "--folds", "100", "--out",
                  path("m.json")}),
            2);
  EXPECT_EQ(call({"--help"}), 0);
}

TEST_F(CliTest, FitRecoversTemperature) {
  synth("train.csv", "temp:3", 42, 5000);
  ASSERT_EQ(call({"fit", "--method", "ts", "--train", path("train.csv"), "--out", path("ts.json")}),
            0)
      << err_.str();
  const json model = read_json("ts.json");
  EXPECT_EQ(model.at("method"), "ts");
  EXPECT_EQ(model.at("ensemble").size(), 5u);
  EXPECT_EQ(model.at("train_meta").at("folds"), 5);
  EXPECT_NEAR(model.at("params")[0].get<double>(), 3.0, 0.1);
  for (const auto& member : model.at("ensemble")) EXPECT_NEAR(member[0].get<double>(), 3.0, 0.1);
  EXPECT_NE(out_.str().find("selected"), std::string::npos);
}

TEST_F(CliTest, SingleFoldSkipsCrossValidation) {
  synth("train.csv", "temp:2", 3, 500);
  ASSERT_EQ(call({"fit", "--method", "op", "--train", path("train.csv"), "--folds", "1",
                  "--epochs", "20", "--out", path("op.json")}),
            0)
      << err_.str();
  const json model = read_json("op.json");
  EXPECT_EQ(model.at("ensemble").size(), 1u);
  EXPECT_EQ(model.at("train_meta").at("folds"), 1);
  EXPECT_EQ(model.at("spec").at("widths"), json({10, 10, 10}));
  EXPECT_EQ(out_.str().find("validation_nll"), std::string::npos);
}

TEST_F(CliTest, GridFileAndLambdaOverride) {
  synth("train.csv", "temp:2", 3, 400, 4);
  {
    std::ofstream grid(path("grid.json"));
    grid << R"([{"hidden": [3], "lambda": 0.5}, {"hidden": [5, 2], "lambda": 0.0}])";
  }
  ASSERT_EQ(call({"fit", "--method", "oi", "--train", path("train.csv"), "--grid",
                  path("grid.json"), "--folds", "2", "--epochs", "10", "--out", path("oi.json")}),
            0)
      << err_.str();
  const auto widths = read_json("oi.json").at("spec").at("widths");
  EXPECT_TRUE(widths == json({4, 3, 4}) || widths == json({4, 5, 2, 4}));

  const auto grid = parse_grid(R"([{"hidden": [7], "lambda": 0.25}])", Method::diag, 4);
  ASSERT_EQ(grid.size(), 1u);
  EXPECT_EQ(grid[0].arch.widths, (std::vector<std::size_t>{1, 7, 1}));
  EXPECT_EQ(grid[0].lambda, 0.25);
  EXPECT_THROW(parse_grid("[]", Method::op, 3), Error);
  EXPECT_THROW(parse_grid(R"([{"lambda": -1}])", Method::op, 3), Error);

  LogitDataset data = load_dataset(path("train.csv"));
  FitOptions options;
  options.method = "ms";
  options.folds = 2;
  options.lambda = 0.01;
  options.epochs = 5;
  std::ostringstream log;
  const ModelFile file = fit_model(data, options, log);
  EXPECT_EQ(file.meta.lambda, 0.01);
}

ModelFile identity_ts(std::size_t n) {
  TrainMeta meta;
  return make_model_file({CalibratorModel::temperature(n, 1.0)}, meta);
}

TEST_F(CliTest, IdentityTemperatureEvalEqualsUncalibrated) {
  synth("test.csv", "temp:3", 9, 800);
  save_model(identity_ts(10), path("id.json"));
  ASSERT_EQ(call({"eval", "--model", path("id.json"), "--test", path("test.csv"), "--out",
                  path("r.json")}),
            0)
      << err_.str();
  const json report = read_json("r.json");
  for (const auto& name : all_metric_names()) {
    EXPECT_EQ(report.at(name), report.at("uncal_" + name)) << name;
  }
  EXPECT_EQ(report.at("accuracy_delta").get<double>(), 0.0);
}

TEST_F(CliTest, EvalMatchesMetricsModuleOnHandDataset) {
  LogitDataset data;
  data.n_classes = 3;
  data.logits = Matrix(4, 3, {2.0, 0.5, -1.0, 0.1, 0.2, 0.3, -2.0, 3.0, 0.0, 1.0, 1.0, 0.0});
  data.labels = {0, 2, 1, 1};
  save_csv(data, path("hand.csv"));
  save_model(make_model_file({CalibratorModel::temperature(3, 2.0)}, {}), path("t2.json"));
  ASSERT_EQ(call({"eval", "--model", path("t2.json"), "--test", path("hand.csv"), "--metrics",
                  "ece,nll,brier,accuracy", "--bins", "5", "--out", path("r.json")}),
            0)
      << err_.str();
  const json report = read_json("r.json");
  Matrix scaled = data.logits;
  for (double& v : scaled.data()) v /= 2.0;
  const Matrix p = softmax_rows(scaled);
  EXPECT_DOUBLE_EQ(report.at("ece").get<double>(), ece(p, data.labels, 5));
  EXPECT_DOUBLE_EQ(report.at("nll").get<double>(), nll_metric(p, data.labels));
  EXPECT_DOUBLE_EQ(report.at("brier").get<double>(), brier(p, data.labels));
  EXPECT_DOUBLE_EQ(report.at("accuracy").get<double>(), 0.75);
  EXPECT_FALSE(report.contains("classwise_ece"));
  EXPECT_EQ(report.size(), 4u * 2u + 1u);

  save_model(identity_ts(4), path("wrong.json"));
  EXPECT_EQ(call({"eval", "--model", path("wrong.json"), "--test", path("hand.csv")}), 2);
}

TEST_F(CliTest, RankPreservingMethodsKeepAccuracy) {
  synth("train.csv", "temp:3", 1, 600);
  synth("test.csv", "temp:3", 2, 600);
  for (const std::string method : {"ts", "diag", "oi", "op"}) {
    ASSERT_EQ(call({"fit", "--method", method, "--train", path("train.csv"), "--folds", "2",
                    "--epochs", "5", "--out", path(method + ".json")}),
              0)
        << err_.str();
    ASSERT_EQ(call({"eval", "--model", path(method + ".json"), "--test", path("test.csv"),
                    "--out", path(method + "_r.json")}),
              0);
    const json report = read_json(method + "_r.json");
    EXPECT_EQ(report.at("accuracy_delta").get<double>(), 0.0) << method;
    EXPECT_EQ(report.at("topk_accuracy_delta").get<double>(), 0.0) << method;
  }
}

TEST_F(CliTest, DivergenceExitsThree) {
  LogitDataset data;
  data.n_classes = 2;
  data.logits = Matrix(4, 2, {1e10, -1e10, -1e10, 1e10, 1e10, 1e10, 5.0, 0.0});
  data.labels = {0, 1, 0, 1};
  save_csv(data, path("huge.csv"));
  EXPECT_EQ(call({"fit", "--method", "unconstrained", "--train", path("huge.csv"), "--folds", "1",
                  "--lr", "1e300", "--out", path("u.json")}),
            3)
      << err_.str();
  EXPECT_NE(err_.str().find("diverged"), std::string::npos);
}

TEST_F(CliTest, DiagramBinsAndPerfectPredictor) {
  synth("test.csv", "temp:3", 4, 700);
  save_model(identity_ts(10), path("id.json"));
  ASSERT_EQ(call({"diagram", "--model", path("id.json"), "--test", path("test.csv"), "--bins",
                  "10", "--out", path("diag")}),
            0);
  for (const char* file : {"diag/calibrated.csv", "diag/uncalibrated.csv"}) {
    std::istringstream in(read_text(file));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "bin_lo,bin_hi,count,conf,acc,gap");
    std::size_t total = 0, rows = 0;
    while (std::getline(in, line)) {
      std::istringstream cells(line);
      std::string cell;
      for (int c = 0; c < 3; ++c) std::getline(cells, cell, ',');
      total += std::stoul(cell);
      ++rows;
    }
    EXPECT_EQ(rows, 10u);
    EXPECT_EQ(total, 700u);
  }

  LogitDataset perfect;
  perfect.n_classes = 3;
  perfect.logits = Matrix(3, 3, {800, 0, 0, 0, 800, 0, 0, 0, 800});
  perfect.labels = {0, 1, 2};
  save_csv(perfect, path("perfect.csv"));
  save_model(identity_ts(3), path("id3.json"));
  ASSERT_EQ(call({"diagram", "--model", path("id3.json"), "--test", path("perfect.csv"), "--out",
                  path("p")}),
            0);
  std::istringstream in(read_text("p/calibrated.csv"));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) EXPECT_EQ(line.substr(line.rfind(',') + 1), "0") << line;
}

TEST_F(CliTest, CompareWritesRankedTables) {
  synth("train.csv", "temp:3", 11, 1500);
  synth("test.csv", "temp:3", 12, 1500);
  CompareOptions options;
  options.train = {path("train.csv")};
  options.test = {path("test.csv")};
  options.methods = {"ts", "dir"};
  options.metrics = {"ece", "accuracy"};
  options.folds = 2;
  options.out = path("cmp");
  std::ostringstream log;
  cmd_compare(options, log);

  std::istringstream csv(read_text("cmp/ece.csv"));
  std::string header, row, are;
  std::getline(csv, header);
  std::getline(csv, row);
  std::getline(csv, are);
  EXPECT_EQ(header, "dataset,uncal,ts,dir");
  EXPECT_EQ(row.substr(0, 5), "test,");
  EXPECT_EQ(are.substr(0, 23), "average_relative_error,");

  const CompareTable table = run_compare(options, log);
  std::vector<double> parsed;
  std::istringstream cells(row.substr(5));
  std::string cell;
  while (std::getline(cells, cell, ',')) parsed.push_back(std::stod(cell));
  EXPECT_EQ(parsed, table.values.at("ece")[0]);
  const auto ranks = rank_row(parsed, false);
  EXPECT_EQ(ranks[0], 3u);
  for (std::size_t c = 1; c < parsed.size(); ++c) EXPECT_LT(parsed[c], parsed[0]);
  EXPECT_TRUE(fs::exists(path("cmp/accuracy.csv")));
  EXPECT_NE(read_text("cmp/table.txt").find("average_relative_error"), std::string::npos);

  EXPECT_EQ(rank_row({0.3, 0.1, 0.1}, false), (std::vector<std::size_t>{3, 1, 1}));
  EXPECT_EQ(rank_row({0.3, 0.1, 0.2}, true), (std::vector<std::size_t>{1, 3, 2}));
  options.test.push_back(path("test.csv"));
  EXPECT_THROW(run_compare(options, log), Error);
}

TEST(ModelFile, JsonRoundTripIsExact) {
  std::mt19937_64 rng(3);
  const MlpSpec arch{{4, 3, 4}, {}};
  auto model = initial_model(Method::op, 4, arch, 1);
  std::vector<double> p = model.params();
  std::uniform_real_distribution<double> dist(-1, 1);
  for (double& v : p) v = dist(rng) / 3.0;
  TrainMeta meta{7, 0.125, 3, 1.5};
  const ModelFile file = make_model_file({model.with_params(p), model}, meta);
  const ModelFile back = model_from_json(to_json(file));
  EXPECT_EQ(back.method, Method::op);
  EXPECT_EQ(back.params, p);
  EXPECT_EQ(back.ensemble.size(), 2u);
  EXPECT_EQ(back.net, file.net);
  EXPECT_EQ(back.meta.seed, 7u);
  EXPECT_EQ(back.meta.final_nll, 1.5);

  json doc = json::parse(to_json(file));
  doc["params"].erase(0);
  EXPECT_THROW(model_from_json(doc.dump()), Error);
  EXPECT_THROW(model_from_json("{not json"), Error);
  doc = json::parse(to_json(file));
  doc["method"] = "platt";
  EXPECT_THROW(model_from_json(doc.dump()), Error);
}

}  // namespace
}  // namespace iopcal::cli
