#include "iopcal/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>

#include "iopcal/error.hpp"
#include "iopcal/parallel.hpp"

namespace iopcal {

namespace {

constexpr std::size_t kChunkRows = 256;
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
constexpr double kMinTemperature = 1e-3;

std::size_t resolve_threads(std::size_t threads) {
  return threads == 0 ? default_thread_count() : threads;
}

void check_data(const CalibratorModel& model, const LogitDataset& data) {
  if (data.size() == 0) fail(ErrorKind::invalid_input, "training: empty dataset");
  if (data.n_classes != model.n_classes()) {
    fail(ErrorKind::invalid_input, "training: model has " + std::to_string(model.n_classes()) +
                                       " classes, data has " + std::to_string(data.n_classes));
  }
}

void add_regularizer_grad(const CalibratorModel& model, double lambda, std::span<double> g) {
  if (lambda == 0.0) return;
  const auto& p = model.params();
  if (model.method() == Method::ms || model.method() == Method::dir) {
    const std::size_t n = model.n_classes();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i != j) g[i * n + j] += 2.0 * lambda * p[i * n + j];
      }
      g[n * n + i] += 2.0 * lambda * p[n * n + i];
    }
    return;
  }
  for (std::size_t i = 0; i < p.size(); ++i) g[i] += lambda * p[i];
}

void fill_uniform(std::span<double> out, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : out) v = dist(rng);
}

// Hidden layers drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)). When
// `identity_output` is set, the output layer has zero weights and biases
// chosen so every output equals 1 after its activation.
std::vector<double> init_network(const MlpSpec& spec, bool identity_output, std::mt19937_64& rng) {
  std::vector<double> params(param_count(spec), 0.0);
  const std::size_t layers = spec.layer_count();
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = spec.widths[l];
    const std::size_t out = spec.widths[l + 1];
    const std::size_t offset = layer_offset(spec, l);
    std::span<double> block(params.data() + offset, in * out + out);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    if (l + 1 == layers && identity_output) {
      std::span<double> bias = block.subspan(in * out);
      for (std::size_t o = 0; o < out; ++o) {
        const bool positive = !spec.positive_outputs.empty() && spec.positive_outputs[o];
        bias[o] = positive ? softplus_inverse(1.0) : 1.0;
      }
    } else {
      fill_uniform(block, bound, rng);
    }
  }
  return params;
}

void project(const CalibratorModel& model, std::vector<double>& params) {
  if (model.method() == Method::ts) params[0] = std::max(params[0], kMinTemperature);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) fail(ErrorKind::invalid_config, "train: learning_rate must be > 0");
  if (!(lambda >= 0.0)) fail(ErrorKind::invalid_config, "train: lambda must be >= 0");
  if (folds < 1) fail(ErrorKind::invalid_config, "train: folds must be >= 1");
}

TrainConfig default_train_config(Method method) {
  TrainConfig config;
  switch (method) {
    case Method::ts:
      config.learning_rate = 0.05;
      config.epochs = 500;
      break;
    case Method::diag:
      config.learning_rate = 0.01;
      config.epochs = 15;
      config.batch_size = 500;
      break;
    default:
      config.learning_rate = 0.02;
      config.epochs = 500;
      break;
  }
  return config;
}

double nll_loss(std::span<const double> logits, std::size_t label) {
  if (logits.empty() || label >= logits.size()) {
    fail(ErrorKind::invalid_input, "nll_loss: label " + std::to_string(label) +
                                       " out of range for " + std::to_string(logits.size()) +
                                       " classes");
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  return mx + std::log(sum) - logits[label];
}

double regularizer(const CalibratorModel& model, double lambda) {
  if (lambda < 0.0) fail(ErrorKind::invalid_parameter, "regularizer: lambda must be >= 0");
  const auto& p = model.params();
  if (model.method() == Method::ms || model.method() == Method::dir) {
    const std::size_t n = model.n_classes();
    const Matrix w(n, n, std::vector<double>(p.begin(), p.begin() + static_cast<long>(n * n)));
    return off_diagonal_penalty(w, std::span<const double>(p).subspan(n * n), lambda, lambda);
  }
  double sq = 0.0;
  for (double v : p) sq += v * v;
  return 0.5 * lambda * sq;
}

LossAndGrad objective_and_grad(const CalibratorModel& model, const LogitDataset& data,
                               double lambda, std::span<const std::size_t> rows,
                               std::size_t threads) {
  check_data(model, data);
  const std::size_t count = rows.empty() ? data.size() : rows.size();
  const std::size_t n_params = model.params().size();
  const std::size_t n = model.n_classes();
  const double inv_count = 1.0 / static_cast<double>(count);
  const std::size_t chunks = (count + kChunkRows - 1) / kChunkRows;

  std::vector<double> chunk_loss(chunks, 0.0);
  std::vector<std::vector<double>> chunk_grad(chunks);
  parallel_for(chunks, threads, [&](std::size_t c) {
    std::vector<double>& g = chunk_grad[c];
    g.assign(n_params, 0.0);
    ForwardCache cache;
    std::vector<double> grad_out(n);
    double loss = 0.0;
    const std::size_t end = std::min(count, (c + 1) * kChunkRows);
    for (std::size_t k = c * kChunkRows; k < end; ++k) {
      const std::size_t r = rows.empty() ? k : rows[k];
      const auto x = data.logits.row(r);
      const std::size_t y = data.labels[r];
      const std::vector<double> f = forward(model, x, &cache);
      const double mx = *std::max_element(f.begin(), f.end());
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) sum += (grad_out[j] = std::exp(f[j] - mx));
      loss += mx + std::log(sum) - f[y];
      for (std::size_t j = 0; j < n; ++j) grad_out[j] *= inv_count / sum;
      grad_out[y] -= inv_count;
      backward(model, x, cache, grad_out, g);
    }
    chunk_loss[c] = loss;
  });

  LossAndGrad out;
  out.grad.assign(n_params, 0.0);
  double loss = 0.0;
  for (std::size_t c = 0; c < chunks; ++c) {
    loss += chunk_loss[c];
    for (std::size_t i = 0; i < n_params; ++i) out.grad[i] += chunk_grad[c][i];
  }
  out.loss = loss * inv_count + regularizer(model, lambda);
  add_regularizer_grad(model, lambda, out.grad);
  return out;
}

double objective(const CalibratorModel& model, const LogitDataset& data, double lambda) {
  check_data(model, data);
  double loss = 0.0;
  for (std::size_t r = 0; r < data.size(); ++r) {
    loss += nll_loss(forward(model, data.logits.row(r)), data.labels[r]);
  }
  return loss / static_cast<double>(data.size()) + regularizer(model, lambda);
}

std::vector<double> grad(const CalibratorModel& model, const LogitDataset& data, double lambda) {
  return objective_and_grad(model, data, lambda).grad;
}

double mean_nll(const CalibratorModel& model, const LogitDataset& data) {
  return objective(model, data, 0.0);
}

Matrix apply(const CalibratorModel& model, const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto f = forward(model, logits.row(r));
    std::copy(f.begin(), f.end(), out.row(r).begin());
  }
  return out;
}

CalibratorModel initial_model(Method method, std::size_t n_classes, const MlpSpec& arch,
                              std::uint64_t seed, std::size_t quadrature_points) {
  std::mt19937_64 rng(seed);
  switch (method) {
    case Method::ts:
      return CalibratorModel::temperature(n_classes, 1.0);
    case Method::ms:
      return CalibratorModel::matrix_scaling(n_classes);
    case Method::dir:
      return CalibratorModel::dirichlet(n_classes);
    case Method::diag: {
      MonotoneNetSpec spec;
      spec.derivative_net = arch;
      spec.derivative_net.positive_outputs = {true};
      spec.quadrature_points = quadrature_points;
      validate(spec);
      std::vector<double> params = init_network(spec.derivative_net, true, rng);
      params.push_back(0.0);
      return CalibratorModel::diagonal(n_classes, std::move(spec), std::move(params));
    }
    case Method::op:
    case Method::oi: {
      MlpSpec net = arch;
      net.positive_outputs = order_preserving_mask(n_classes);
      validate(net);
      std::vector<double> params = init_network(net, true, rng);
      return CalibratorModel::network(method, n_classes, std::move(net), std::move(params));
    }
    case Method::unconstrained: {
      MlpSpec net = arch;
      net.positive_outputs.clear();
      validate(net);
      std::vector<double> params = init_network(net, false, rng);
      return CalibratorModel::network(method, n_classes, std::move(net), std::move(params));
    }
  }
  fail(ErrorKind::invalid_input, "initial_model: unknown method");
}

FitReport fit(const CalibratorModel& model, const LogitDataset& data, const TrainConfig& config,
              const LogitDataset* validation) {
  config.validate();
  check_data(model, data);
  const std::size_t threads = resolve_threads(config.threads);
  const bool early_stop = config.early_stop_patience > 0 && validation != nullptr;

  std::vector<double> params = model.params();
  std::vector<double> m(params.size(), 0.0), v(params.size(), 0.0);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch =
      config.batch_size == 0 ? data.size() : std::min(config.batch_size, data.size());

  FitReport report{model, 0.0, 0.0, 0};
  CalibratorModel current = model;
  double best_objective = std::numeric_limits<double>::infinity();
  double best_validation = std::numeric_limits<double>::infinity();
  std::size_t since_improvement = 0;
  std::size_t step = 0;

  auto consider = [&](const CalibratorModel& candidate, double train_objective) {
    if (!early_stop && train_objective < best_objective) {
      best_objective = train_objective;
      report.model = candidate;
    }
  };

  const double initial = objective_and_grad(model, data, config.lambda, {}, threads).loss;
  if (!std::isfinite(initial)) throw TrainingDiverged(0, "initial objective is not finite");
  report.initial_objective = initial;
  consider(model, initial);
  if (early_stop) {
    best_validation = mean_nll(model, *validation);
    report.model = model;
  }

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (batch < data.size()) std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < data.size(); start += batch) {
      const std::size_t stop = std::min(data.size(), start + batch);
      const std::span<const std::size_t> rows =
          batch == data.size() ? std::span<const std::size_t>{}
                               : std::span<const std::size_t>(order).subspan(start, stop - start);
      const LossAndGrad lg = objective_and_grad(current, data, config.lambda, rows, threads);
      if (!std::isfinite(lg.loss)) {
        throw TrainingDiverged(step, "objective became non-finite at iteration " +
                                         std::to_string(step));
      }
      if (rows.empty()) consider(current, lg.loss);

      ++step;
      const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step));
      for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = lg.grad[i];
        m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g;
        v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g * g;
        params[i] -= config.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + kAdamEps);
      }
      project(current, params);
      current = current.with_params(params);
    }
    report.epochs_run = epoch + 1;

    if (batch < data.size()) {
      const double full = objective_and_grad(current, data, config.lambda, {}, threads).loss;
      if (!std::isfinite(full)) {
        throw TrainingDiverged(step, "objective became non-finite at iteration " +
                                         std::to_string(step));
      }
      consider(current, full);
    }
    if (early_stop) {
      const double val = mean_nll(current, *validation);
      if (val < best_validation) {
        best_validation = val;
        report.model = current;
        since_improvement = 0;
      } else if (++since_improvement >= config.early_stop_patience) {
        break;
      }
    }
  }

  if (batch == data.size() && config.epochs > 0) {
    const double last = objective_and_grad(current, data, config.lambda, {}, threads).loss;
    if (!std::isfinite(last)) {
      throw TrainingDiverged(step, "objective became non-finite at iteration " +
                                       std::to_string(step));
    }
    consider(current, last);
  }
  report.final_objective = objective_and_grad(report.model, data, config.lambda, {}, threads).loss;
  return report;
}

// ---------------------------------------------------------------------------

Ensemble::Ensemble(std::vector<CalibratorModel> members) : members_(std::move(members)) {
  if (members_.empty()) fail(ErrorKind::invalid_input, "ensemble: need at least one member");
  for (const auto& m : members_) {
    if (m.n_classes() != members_.front().n_classes()) {
      fail(ErrorKind::invalid_input, "ensemble: members disagree on n_classes");
    }
  }
}

std::vector<double> Ensemble::predict_proba(std::span<const double> logits) const {
  if (members_.empty()) fail(ErrorKind::invalid_input, "ensemble: no members");
  std::vector<double> out(logits.size(), 0.0);
  for (const auto& member : members_) {
    const auto p = softmax(forward(member, logits));
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += p[j];
  }
  const double inv = 1.0 / static_cast<double>(members_.size());
  for (double& v : out) v *= inv;
  return out;
}

Matrix Ensemble::predict_proba(const Matrix& logits) const {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto p = predict_proba(logits.row(r));
    std::copy(p.begin(), p.end(), out.row(r).begin());
  }
  return out;
}

CrossValidationResult cross_validate(Method method, std::span<const GridPoint> grid,
                                     const LogitDataset& data, const TrainConfig& config) {
  config.validate();
  if (grid.empty()) fail(ErrorKind::invalid_config, "cross_validate: empty grid");
  data.validate();
  const FoldSplit split = kfold_split(data.size(), config.folds, config.seed);
  const std::size_t k = split.folds.size();
  const std::size_t tasks = grid.size() * k;
  const std::size_t threads = resolve_threads(config.threads);
  const std::size_t outer = std::min(threads, tasks);

  std::vector<std::optional<CalibratorModel>> models(tasks);
  std::vector<double> val_nll(tasks, 0.0);
  parallel_for(tasks, outer, [&](std::size_t task) {
    const std::size_t g = task / k;
    const std::size_t f = task % k;
    const LogitDataset train = data.subset(split.folds[f].train);
    const LogitDataset val = data.subset(split.folds[f].validation);
    TrainConfig local = config;
    local.lambda = grid[g].lambda;
    local.seed = derive_seed(config.seed, task);
    local.threads = outer > 1 ? 1 : threads;
    const CalibratorModel init = initial_model(method, data.n_classes, grid[g].arch, local.seed);
    FitReport fitted = fit(init, train, local, &val);
    val_nll[task] = mean_nll(fitted.model, val);
    models[task] = std::move(fitted.model);
  });

  CrossValidationResult result;
  result.mean_validation_nll.assign(grid.size(), 0.0);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double sum = 0.0;
    for (std::size_t f = 0; f < k; ++f) sum += val_nll[g * k + f];
    result.mean_validation_nll[g] = sum / static_cast<double>(k);
  }
  // Non-finite validation scores never win.
  std::size_t best = grid.size();
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double v = result.mean_validation_nll[g];
    if (!std::isfinite(v)) continue;
    if (best == grid.size() || v < result.mean_validation_nll[best]) best = g;
  }
  if (best == grid.size()) {
    throw TrainingDiverged(0, "cross_validate: no grid point produced a finite validation NLL");
  }
  result.best_index = best;
  result.best = grid[best];
  std::vector<CalibratorModel> members;
  for (std::size_t f = 0; f < k; ++f) members.push_back(*models[best * k + f]);
  result.ensemble = Ensemble(std::move(members));
  return result;
}

}  // namespace iopcal
