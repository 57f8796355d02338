#include "iopcal/cli/app.hpp"

#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "iopcal/cli/commands.hpp"
#include "iopcal/error.hpp"

namespace iopcal::cli {

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

const std::vector<std::string> kMethodNames = {"ts", "ms", "dir", "diag", "oi", "op",
                                               "unconstrained"};

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Post-hoc calibration of classifier logits with order-preserving functions",
               "iopcal"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "iopcal 0.1.0");

  FitOptions fit;
  std::string fit_grid;
  double fit_lambda = 0.0;
  std::size_t fit_epochs = 0, fit_batch = 0;
  double fit_lr = 0.0;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a calibrator, cross-validating over a grid");
  fit_cmd->add_option("--method", fit.method, "Calibration family")
      ->required()
      ->check(CLI::IsMember(kMethodNames));
  fit_cmd->add_option("--train", fit.train, "Calibration logits (.csv or .bin)")
      ->required()
      ->check(CLI::ExistingFile);
  auto* grid_opt = fit_cmd->add_option("--grid", fit_grid, "JSON list of {hidden, lambda}")
                       ->check(CLI::ExistingFile);
  fit_cmd->add_option("--folds", fit.folds, "Cross-validation folds (1 fits once)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  auto* lambda_opt =
      fit_cmd->add_option("--lambda", fit_lambda, "Regularization weight for every grid point")
          ->check(CLI::NonNegativeNumber);
  fit_cmd->add_option("--seed", fit.seed, "Random seed")->capture_default_str();
  auto* epochs_opt = fit_cmd->add_option("--epochs", fit_epochs, "Override the epoch count");
  auto* lr_opt = fit_cmd->add_option("--lr", fit_lr, "Override the Adam learning rate")
                     ->check(CLI::PositiveNumber);
  auto* batch_opt = fit_cmd->add_option("--batch", fit_batch, "Minibatch size (0 = full batch)");
  fit_cmd->add_option("--out", fit.out, "Model file to write")->required();

  EvalOptions eval;
  std::string eval_metrics, eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a fitted calibrator on test logits");
  eval_cmd->add_option("--model", eval.model, "Model file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--test", eval.test, "Test logits")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--metrics", eval_metrics, "Comma-separated metric names (default all)");
  eval_cmd->add_option("--bins", eval.bins, "Confidence bins")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  eval_cmd->add_option("--topk", eval.topk, "k for topk_accuracy")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  auto* eval_out_opt = eval_cmd->add_option("--out", eval_out, "Report JSON (stdout if omitted)");

  CompareOptions compare;
  std::string compare_methods, compare_metrics;
  auto* compare_cmd = app.add_subcommand("compare", "Fit and rank several methods");
  compare_cmd->add_option("--train", compare.train, "Calibration logits (repeatable)")
      ->required()
      ->check(CLI::ExistingFile);
  compare_cmd->add_option("--test", compare.test, "Test logits, paired with --train")
      ->required()
      ->check(CLI::ExistingFile);
  compare_cmd->add_option("--methods", compare_methods, "Comma-separated methods");
  compare_cmd->add_option("--metrics", compare_metrics, "Comma-separated metrics");
  compare_cmd->add_option("--bins", compare.bins, "Confidence bins")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  compare_cmd->add_option("--folds", compare.folds, "Cross-validation folds")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  compare_cmd->add_option("--seed", compare.seed, "Random seed")->capture_default_str();
  compare_cmd->add_option("--out", compare.out, "Output directory")->required();

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic miscalibrated dataset");
  synth_cmd->add_option("--classes", synth.classes, "Number of classes")
      ->capture_default_str()
      ->check(CLI::Range(std::size_t{2}, std::size_t{1000000}));
  synth_cmd->add_option("--samples", synth.samples, "Number of samples")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  synth_cmd->add_option("--alpha", synth.alpha, "Dirichlet concentration")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  synth_cmd->add_option("--miscal", synth.miscal, "temp:S | shift:v0,... | affine:W;b")
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
  synth_cmd->add_option("--out", synth.out, "Dataset to write (.csv or .bin)")->required();

  DiagramOptions diagram;
  auto* diagram_cmd = app.add_subcommand("diagram", "Export reliability-diagram bins");
  diagram_cmd->add_option("--model", diagram.model, "Model file")
      ->required()
      ->check(CLI::ExistingFile);
  diagram_cmd->add_option("--test", diagram.test, "Test logits")
      ->required()
      ->check(CLI::ExistingFile);
  diagram_cmd->add_option("--bins", diagram.bins, "Confidence bins")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  diagram_cmd->add_flag("--weighted", diagram.weighted, "Scale gaps by bin mass");
  diagram_cmd->add_option("--out", diagram.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*fit_cmd) {
      if (grid_opt->count()) fit.grid = fit_grid;
      if (lambda_opt->count()) fit.lambda = fit_lambda;
      if (epochs_opt->count()) fit.epochs = fit_epochs;
      if (lr_opt->count()) fit.learning_rate = fit_lr;
      if (batch_opt->count()) fit.batch_size = fit_batch;
      cmd_fit(fit, out);
    } else if (*eval_cmd) {
      if (!eval_metrics.empty()) eval.metrics = split_list(eval_metrics);
      if (eval_out_opt->count()) eval.out = eval_out;
      cmd_eval(eval, out);
    } else if (*compare_cmd) {
      if (!compare_methods.empty()) compare.methods = split_list(compare_methods);
      if (!compare_metrics.empty()) compare.metrics = split_list(compare_metrics);
      cmd_compare(compare, out);
    } else if (*synth_cmd) {
      cmd_synth(synth, out);
    } else if (*diagram_cmd) {
      cmd_diagram(diagram, out);
    }
  } catch (const TrainingDiverged& e) {
    err << "error: training diverged at iteration " << e.iteration() << ": " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}

}  // namespace iopcal::cli
