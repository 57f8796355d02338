#include "iopcal/cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "iopcal/error.hpp"
#include "iopcal/io.hpp"

namespace iopcal::cli {

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

Method method_or_fail(const std::string& name) {
  const auto method = parse_method(name);
  if (!method) fail(ErrorKind::invalid_input, "unknown method '" + name + "'");
  return *method;
}

MlpSpec arch_for(Method method, std::size_t n, const std::vector<std::size_t>& hidden) {
  MlpSpec arch;
  switch (method) {
    case Method::ts:
    case Method::ms:
    case Method::dir:
      return arch;
    case Method::diag:
      arch.widths.push_back(1);
      arch.widths.insert(arch.widths.end(), hidden.begin(), hidden.end());
      arch.widths.push_back(1);
      return arch;
    default:
      arch.widths.push_back(n);
      arch.widths.insert(arch.widths.end(), hidden.begin(), hidden.end());
      arch.widths.push_back(n);
      return arch;
  }
}

std::string describe(const GridPoint& point) {
  std::ostringstream s;
  s << "hidden=[";
  const auto& w = point.arch.widths;
  for (std::size_t i = 1; i + 1 < w.size(); ++i) s << (i > 1 ? "," : "") << w[i];
  s << "] lambda=" << point.lambda;
  return s.str();
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void check_classes(const ModelFile& model, const LogitDataset& data) {
  if (model.n_classes != data.n_classes) {
    fail(ErrorKind::invalid_input, "model has " + std::to_string(model.n_classes) +
                                       " classes but the data has " +
                                       std::to_string(data.n_classes));
  }
}

}  // namespace

std::vector<GridPoint> default_grid(Method method, std::size_t n_classes) {
  switch (method) {
    case Method::ts:
      return {{arch_for(method, n_classes, {}), 0.0}};
    case Method::ms:
    case Method::dir:
      return {{arch_for(method, n_classes, {}), 0.0}, {arch_for(method, n_classes, {}), 1e-3}};
    case Method::diag:
      return {{arch_for(method, n_classes, {10}), 0.0}};
    case Method::op:
    case Method::oi:
      return {{arch_for(method, n_classes, {10}), 0.0}, {arch_for(method, n_classes, {10}), 1e-3}};
    case Method::unconstrained:
      return {{arch_for(method, n_classes, {10}), 0.0}};
  }
  return {};
}

std::vector<GridPoint> parse_grid(const std::string& text, Method method, std::size_t n_classes) {
  std::vector<GridPoint> grid;
  try {
    const auto doc = nlohmann::json::parse(text);
    if (!doc.is_array()) fail(ErrorKind::invalid_config, "grid: expected a JSON list");
    for (const auto& entry : doc) {
      const auto hidden = entry.value("hidden", std::vector<std::size_t>{});
      const double lambda = entry.value("lambda", 0.0);
      if (!(lambda >= 0.0)) fail(ErrorKind::invalid_config, "grid: lambda must be >= 0");
      grid.push_back({arch_for(method, n_classes, hidden), lambda});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::invalid_config, std::string("grid: ") + e.what());
  }
  if (grid.empty()) fail(ErrorKind::invalid_config, "grid: no entries");
  return grid;
}

ModelFile fit_model(const LogitDataset& data, const FitOptions& options, std::ostream& log) {
  const Method method = method_or_fail(options.method);
  data.validate();
  std::vector<GridPoint> grid = options.grid
                                    ? parse_grid(read_text(*options.grid), method, data.n_classes)
                                    : default_grid(method, data.n_classes);
  if (options.lambda) {
    if (!(*options.lambda >= 0.0)) fail(ErrorKind::invalid_config, "--lambda must be >= 0");
    std::vector<GridPoint> unique;
    for (auto& point : grid) {
      point.lambda = *options.lambda;
      const bool seen = std::any_of(unique.begin(), unique.end(),
                                    [&](const GridPoint& u) { return u.arch == point.arch; });
      if (!seen) unique.push_back(point);
    }
    grid = std::move(unique);
  }

  TrainConfig config = default_train_config(method);
  config.seed = options.seed;
  config.folds = options.folds;
  if (options.epochs) config.epochs = *options.epochs;
  if (options.learning_rate) config.learning_rate = *options.learning_rate;
  if (options.batch_size) config.batch_size = *options.batch_size;
  if (options.folds == 0) fail(ErrorKind::invalid_config, "--folds must be >= 1");

  TrainMeta meta;
  meta.seed = options.seed;
  meta.folds = options.folds;
  if (options.folds == 1) {
    config.lambda = grid.front().lambda;
    config.validate();
    const auto init = initial_model(method, data.n_classes, grid.front().arch, options.seed);
    const FitReport report = fit(init, data, config);
    meta.lambda = grid.front().lambda;
    meta.final_nll = mean_nll(report.model, data);
    log << "fit " << options.method << ": " << describe(grid.front())
        << " training_nll=" << meta.final_nll << "\n";
    return make_model_file({report.model}, meta);
  }

  const CrossValidationResult cv = cross_validate(method, grid, data, config);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    log << "  " << describe(grid[g]) << " validation_nll=" << cv.mean_validation_nll[g]
        << (g == cv.best_index ? "  *" : "") << "\n";
  }
  meta.lambda = cv.best.lambda;
  meta.final_nll = cv.mean_validation_nll[cv.best_index];
  log << "fit " << options.method << ": selected " << describe(cv.best)
      << " validation_nll=" << meta.final_nll << "\n";
  return make_model_file(cv.ensemble.members(), meta);
}

void cmd_fit(const FitOptions& options, std::ostream& log) {
  const LogitDataset data = load_dataset(options.train);
  const ModelFile model = fit_model(data, options, log);
  save_model(model, options.out);
  log << "wrote " << options.out.string() << "\n";
}

std::map<std::string, double> evaluate_model(const ModelFile& model, const LogitDataset& data,
                                             const MetricOptions& options) {
  check_classes(model, data);
  data.validate();
  const Matrix calibrated = model.ensemble_model().predict_proba(data.logits);
  const Matrix raw = softmax_rows(data.logits);
  std::map<std::string, double> values = evaluate(calibrated, data.labels, options).values;
  const auto uncal = evaluate(raw, data.labels, options).values;
  for (const auto& [name, v] : uncal) values["uncal_" + name] = v;
  for (const char* name : {"accuracy", "topk_accuracy"}) {
    if (values.count(name)) {
      values[std::string(name) + "_delta"] = values.at(name) - uncal.at(name);
    }
  }
  return values;
}

void cmd_eval(const EvalOptions& options, std::ostream& log) {
  const ModelFile model = load_model(options.model);
  const LogitDataset data = load_dataset(options.test);
  MetricOptions metric_options;
  metric_options.metrics = options.metrics;
  metric_options.bins = options.bins;
  metric_options.topk = options.topk;
  MetricReport report;
  report.values = evaluate_model(model, data, metric_options);
  const std::string text = to_json(report);
  if (options.out) {
    write_text_atomically(*options.out, text);
    for (const auto& name : options.metrics) {
      log << std::left << std::setw(16) << name << std::setprecision(6) << report.values.at(name)
          << "  (uncalibrated " << report.values.at("uncal_" + name) << ")\n";
    }
    log << "wrote " << options.out->string() << "\n";
  } else {
    log << text;
  }
}

bool higher_is_better(const std::string& metric) {
  return metric == "accuracy" || metric == "topk_accuracy";
}

std::vector<std::size_t> rank_row(const std::vector<double>& row, bool higher_is_better) {
  std::vector<std::size_t> ranks(row.size(), 1);
  for (std::size_t i = 0; i < row.size(); ++i) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      const bool better = higher_is_better ? row[j] > row[i] : row[j] < row[i];
      if (better) ++ranks[i];
    }
  }
  return ranks;
}

CompareTable run_compare(const CompareOptions& options, std::ostream& log) {
  if (options.train.empty() || options.train.size() != options.test.size()) {
    fail(ErrorKind::invalid_config, "compare: --train and --test must be given in pairs");
  }
  if (options.methods.empty()) fail(ErrorKind::invalid_config, "compare: no methods");
  for (const auto& m : options.methods) method_or_fail(m);

  CompareTable table;
  table.columns.push_back("uncal");
  table.columns.insert(table.columns.end(), options.methods.begin(), options.methods.end());
  MetricOptions metric_options;
  metric_options.metrics = options.metrics;
  metric_options.bins = options.bins;

  std::set<std::string> names;
  for (std::size_t d = 0; d < options.train.size(); ++d) {
    const LogitDataset train = load_dataset(options.train[d]);
    const LogitDataset test = load_dataset(options.test[d]);
    std::string name = options.test[d].stem().string();
    if (!names.insert(name).second) name += "_" + std::to_string(d);
    table.datasets.push_back(name);
    log << "dataset " << name << "\n";

    const auto raw = evaluate(softmax_rows(test.logits), test.labels, metric_options).values;
    for (const auto& metric : options.metrics) {
      table.values[metric].push_back({raw.at(metric)});
    }
    for (const auto& method : options.methods) {
      FitOptions fit_options;
      fit_options.method = method;
      fit_options.folds = options.folds;
      fit_options.seed = options.seed;
      const ModelFile model = fit_model(train, fit_options, log);
      check_classes(model, test);
      const Matrix probs = model.ensemble_model().predict_proba(test.logits);
      const auto values = evaluate(probs, test.labels, metric_options).values;
      for (const auto& metric : options.metrics) {
        table.values[metric].back().push_back(values.at(metric));
      }
    }
  }
  return table;
}

std::string compare_csv(const CompareTable& table, const std::string& metric) {
  const auto& rows = table.values.at(metric);
  std::ostringstream out;
  out << "dataset";
  for (const auto& c : table.columns) out << "," << c;
  out << "\n";
  for (std::size_t d = 0; d < rows.size(); ++d) {
    out << table.datasets[d];
    for (double v : rows[d]) out << "," << format_double(v);
    out << "\n";
  }
  out << "average_relative_error";
  std::vector<double> base;
  for (const auto& row : rows) base.push_back(row[0]);
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    std::vector<double> column;
    for (const auto& row : rows) column.push_back(row[c]);
    out << "," << format_double(average_relative_error(column, base));
  }
  out << "\n";
  return out.str();
}

std::string compare_text(const CompareTable& table) {
  std::ostringstream out;
  out << std::fixed;
  for (const auto& [metric, rows] : table.values) {
    const bool higher = higher_is_better(metric);
    out << metric << "\n" << std::left << std::setw(24) << "dataset";
    for (const auto& c : table.columns) out << std::right << std::setw(16) << c;
    out << "\n";
    auto emit = [&](const std::string& label, const std::vector<double>& row) {
      const auto ranks = rank_row(row, higher);
      out << std::left << std::setw(24) << label;
      for (std::size_t c = 0; c < row.size(); ++c) {
        std::ostringstream cell;
        cell << std::fixed << std::setprecision(4) << row[c] << " (" << ranks[c] << ")";
        out << std::right << std::setw(16) << cell.str();
      }
      out << "\n";
    };
    for (std::size_t d = 0; d < rows.size(); ++d) emit(table.datasets[d], rows[d]);
    std::vector<double> base, are;
    for (const auto& row : rows) base.push_back(row[0]);
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
      std::vector<double> column;
      for (const auto& row : rows) column.push_back(row[c]);
      are.push_back(average_relative_error(column, base));
    }
    emit("average_relative_error", are);
    out << "\n";
  }
  return out.str();
}

void cmd_compare(const CompareOptions& options, std::ostream& log) {
  const CompareTable table = run_compare(options, log);
  fs::create_directories(options.out);
  for (const auto& metric : options.metrics) {
    write_text_atomically(options.out / (metric + ".csv"), compare_csv(table, metric));
  }
  const std::string text = compare_text(table);
  write_text_atomically(options.out / "table.txt", text);
  log << "\n" << text;
}

void cmd_synth(const SynthOptions& options, std::ostream& log) {
  SynthSpec spec;
  spec.n_classes = options.classes;
  spec.n_samples = options.samples;
  spec.dirichlet_alpha = options.alpha;
  spec.miscal = parse_distortion(options.miscal, options.classes);
  spec.seed = options.seed;
  const SynthResult result = synth_generate(spec);
  save_dataset(result.data, options.out);
  log << "wrote " << result.data.size() << " samples (" << options.classes << " classes, "
      << format_distortion(spec.miscal) << ") to " << options.out.string() << "\n";
}

void cmd_diagram(const DiagramOptions& options, std::ostream& log) {
  const ModelFile model = load_model(options.model);
  const LogitDataset data = load_dataset(options.test);
  check_classes(model, data);
  data.validate();
  const Matrix calibrated = model.ensemble_model().predict_proba(data.logits);
  const Matrix raw = softmax_rows(data.logits);
  const auto cal_bins = reliability_diagram(calibrated, data.labels, options.bins, options.weighted);
  const auto raw_bins = reliability_diagram(raw, data.labels, options.bins, options.weighted);
  fs::create_directories(options.out);
  write_text_atomically(options.out / "calibrated.csv", bins_to_csv(cal_bins));
  write_text_atomically(options.out / "uncalibrated.csv", bins_to_csv(raw_bins));
  log << "wrote " << (options.out / "calibrated.csv").string() << " and "
      << (options.out / "uncalibrated.csv").string() << "\n";
}

}  // namespace iopcal::cli
