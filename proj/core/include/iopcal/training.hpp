#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "iopcal/calibrators.hpp"
#include "iopcal/dataset.hpp"
#include "iopcal/matrix.hpp"

namespace iopcal {

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t epochs = 300;
  std::size_t batch_size = 0;  // 0 = full batch
  double lambda = 0.0;
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  std::size_t early_stop_patience = 0;  // 0 = off
  std::size_t threads = 0;              // 0 = default_thread_count()

  void validate() const;
};

/// Optimizer settings tuned per method: full-batch Adam for every method
/// except diag, whose quadrature-based forward pass is costly enough that it
/// trains on minibatches of 500 for fewer epochs.
TrainConfig default_train_config(Method method);

/// -log softmax(logits)[label], via log-sum-exp.
double nll_loss(std::span<const double> logits, std::size_t label);

/// lambda/2 * ||params||^2, or for ms/dir the off-diagonal penalty with
/// lambda on both the off-diagonal weights and the bias.
double regularizer(const CalibratorModel& model, double lambda);

/// Mean NLL of the calibrated logits plus the regularizer.
double objective(const CalibratorModel& model, const LogitDataset& data, double lambda);

/// Exact gradient of objective() with respect to model.params().
std::vector<double> grad(const CalibratorModel& model, const LogitDataset& data, double lambda);

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Objective and gradient over the rows listed in `rows` (all rows when
/// empty). Work is chunked in a fixed pattern, so results are bit-identical
/// for any thread count.
LossAndGrad objective_and_grad(const CalibratorModel& model, const LogitDataset& data,
                               double lambda, std::span<const std::size_t> rows = {},
                               std::size_t threads = 1);

/// Mean unregularized NLL of the calibrated logits.
double mean_nll(const CalibratorModel& model, const LogitDataset& data);

/// Calibrated logits for every row.
Matrix apply(const CalibratorModel& model, const Matrix& logits);

/// Initial model for a method: identity for ts/ms/dir; for diag/op/oi,
/// seeded fan-in-scaled hidden layers with a zero output layer whose bias
/// makes the calibrator the identity map; fully random for unconstrained.
/// `arch` supplies the widths for network methods (positivity masks are
/// set here) and is ignored for ts/ms/dir.
CalibratorModel initial_model(Method method, std::size_t n_classes, const MlpSpec& arch,
                              std::uint64_t seed,
                              std::size_t quadrature_points = kDefaultQuadraturePoints);

struct FitReport {
  CalibratorModel model;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  std::size_t epochs_run = 0;
};

/// Adam (beta1 0.9, beta2 0.999, eps 1e-8) on objective(). Returns the
/// parameters with the lowest training objective seen, or with early
/// stopping on, the lowest validation NLL. Throws TrainingDiverged when the
/// objective becomes non-finite.
FitReport fit(const CalibratorModel& model, const LogitDataset& data, const TrainConfig& config,
              const LogitDataset* validation = nullptr);

/// Averages member softmax outputs.
class Ensemble {
 public:
  Ensemble() = default;
  explicit Ensemble(std::vector<CalibratorModel> members);

  const std::vector<CalibratorModel>& members() const noexcept { return members_; }
  bool empty() const noexcept { return members_.empty(); }

  std::vector<double> predict_proba(std::span<const double> logits) const;
  Matrix predict_proba(const Matrix& logits) const;

 private:
  std::vector<CalibratorModel> members_;
};

struct GridPoint {
  MlpSpec arch;
  double lambda = 0.0;
};

struct CrossValidationResult {
  std::size_t best_index = 0;
  GridPoint best;
  std::vector<double> mean_validation_nll;  // one per grid point
  Ensemble ensemble;                        // the K fold models of the best point
};

/// K-fold search over `grid` (K = config.folds) selecting the lowest mean
/// validation NLL. Each (grid point, fold) fit uses a seed derived from
/// config.seed, so serial and parallel runs agree.
CrossValidationResult cross_validate(Method method, std::span<const GridPoint> grid,
                                     const LogitDataset& data, const TrainConfig& config);

}  // namespace iopcal
