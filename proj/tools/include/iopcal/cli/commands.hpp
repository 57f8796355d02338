#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "iopcal/cli/model_file.hpp"
#include "iopcal/dataset.hpp"
#include "iopcal/metrics.hpp"
#include "iopcal/training.hpp"

namespace iopcal::cli {

namespace fs = std::filesystem;

/// Hyperparameter grid for a method when no --grid file is given.
std::vector<GridPoint> default_grid(Method method, std::size_t n_classes);

/// Parses a JSON list of {"hidden": [widths...], "lambda": value} entries.
std::vector<GridPoint> parse_grid(const std::string& text, Method method, std::size_t n_classes);

struct FitOptions {
  std::string method;
  fs::path train;
  std::optional<fs::path> grid;
  std::size_t folds = 5;
  std::optional<double> lambda;
  std::uint64_t seed = 0;
  std::optional<std::size_t> epochs;
  std::optional<double> learning_rate;
  std::optional<std::size_t> batch_size;
  fs::path out;
};

/// Cross-validates over the grid (or fits grid[0] once when folds == 1).
ModelFile fit_model(const LogitDataset& data, const FitOptions& options, std::ostream& log);
void cmd_fit(const FitOptions& options, std::ostream& log);

struct EvalOptions {
  fs::path model;
  fs::path test;
  std::vector<std::string> metrics = all_metric_names();
  std::size_t bins = kDefaultBins;
  std::size_t topk = 5;
  std::optional<fs::path> out;
};

/// Calibrated metrics, their uncalibrated counterparts (prefixed "uncal_")
/// and accuracy_delta / topk_accuracy_delta when accuracies were requested.
std::map<std::string, double> evaluate_model(const ModelFile& model, const LogitDataset& data,
                                             const MetricOptions& options);
void cmd_eval(const EvalOptions& options, std::ostream& log);

struct CompareOptions {
  std::vector<fs::path> train;
  std::vector<fs::path> test;
  std::vector<std::string> methods = {"ts", "ms", "dir", "diag", "oi", "op"};
  std::vector<std::string> metrics = {"ece", "classwise_ece", "nll", "brier", "accuracy"};
  std::size_t bins = kDefaultBins;
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  fs::path out;
};

/// values[metric][dataset][column]; column 0 is the uncalibrated baseline.
struct CompareTable {
  std::vector<std::string> datasets;
  std::vector<std::string> columns;
  std::map<std::string, std::vector<std::vector<double>>> values;
};

CompareTable run_compare(const CompareOptions& options, std::ostream& log);
/// 1-based ranks within a row, ties sharing the best rank.
std::vector<std::size_t> rank_row(const std::vector<double>& row, bool higher_is_better);
bool higher_is_better(const std::string& metric);
/// Per-dataset rows followed by an average_relative_error row.
std::string compare_csv(const CompareTable& table, const std::string& metric);
std::string compare_text(const CompareTable& table);
void cmd_compare(const CompareOptions& options, std::ostream& log);

struct SynthOptions {
  std::size_t classes = 10;
  std::size_t samples = 1000;
  double alpha = 0.5;
  std::string miscal = "temp:1";
  std::uint64_t seed = 0;
  fs::path out;
};
void cmd_synth(const SynthOptions& options, std::ostream& log);

struct DiagramOptions {
  fs::path model;
  fs::path test;
  std::size_t bins = kDefaultBins;
  bool weighted = false;
  fs::path out;
};
/// Writes calibrated.csv and uncalibrated.csv into the output directory.
void cmd_diagram(const DiagramOptions& options, std::ostream& log);

}  // namespace iopcal::cli
