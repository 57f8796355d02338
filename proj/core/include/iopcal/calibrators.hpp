#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "iopcal/matrix.hpp"
#include "iopcal/mlp.hpp"
#include "iopcal/monotone.hpp"
#include "iopcal/order.hpp"

namespace iopcal {

enum class Method { ts, ms, dir, diag, oi, op, unconstrained };

inline constexpr Method kAllMethods[] = {Method::ts,  Method::ms, Method::dir,
                                         Method::diag, Method::oi, Method::op,
                                         Method::unconstrained};

std::string_view to_string(Method method) noexcept;
/// Accepts the lower-case CLI names (ts, ms, dir, diag, oi, op, unconstrained).
std::optional<Method> parse_method(std::string_view name) noexcept;

/// True for the families whose output always shares the ranking of its input.
bool is_rank_preserving(Method method) noexcept;

/// An immutable calibration function: a method tag, its architecture and a
/// flat parameter vector.
///
/// Parameter layouts:
///   ts            [t]
///   ms, dir       [W (n x n, row-major), b (n)]
///   diag          [derivative-net params..., f(0)]
///   op, oi        MLP (n, hidden..., n); softplus on outputs 0..n-2
///   unconstrained MLP (n, hidden..., n); no positivity
class CalibratorModel {
 public:
  static CalibratorModel temperature(std::size_t n_classes, double t = 1.0);
  static CalibratorModel matrix_scaling(std::size_t n_classes);
  static CalibratorModel dirichlet(std::size_t n_classes);
  static CalibratorModel diagonal(std::size_t n_classes, MonotoneNetSpec spec,
                                  std::vector<double> params);
  /// For op/oi/unconstrained. `net` must map n -> n.
  static CalibratorModel network(Method method, std::size_t n_classes, MlpSpec net,
                                 std::vector<double> params);
  /// Generic constructor used by deserialization; validates everything.
  CalibratorModel(Method method, std::size_t n_classes, MlpSpec net,
                  std::size_t quadrature_points, std::vector<double> params);

  Method method() const noexcept { return method_; }
  std::size_t n_classes() const noexcept { return n_classes_; }
  const std::vector<double>& params() const noexcept { return params_; }
  /// The network spec (empty widths for ts/ms/dir).
  const MlpSpec& net() const noexcept { return net_; }
  std::size_t quadrature_points() const noexcept { return quadrature_points_; }
  MonotoneNetSpec monotone_spec() const { return {net_, quadrature_points_}; }

  CalibratorModel with_params(std::vector<double> params) const;

  /// Parameter count implied by the architecture alone.
  static std::size_t expected_param_count(Method method, std::size_t n_classes,
                                          const MlpSpec& net);

 private:
  void validate() const;

  Method method_ = Method::ts;
  std::size_t n_classes_ = 0;
  MlpSpec net_;
  std::size_t quadrature_points_ = kDefaultQuadraturePoints;
  std::vector<double> params_;
};

/// Softplus mask for the op/oi networks: every output but the last.
std::vector<bool> order_preserving_mask(std::size_t n_classes);
/// MLP spec (n, hidden..., n) with the op/oi positivity mask.
MlpSpec order_preserving_net(std::size_t n_classes, std::vector<std::size_t> hidden);
/// MLP spec (n, hidden..., n) with no positivity.
MlpSpec unconstrained_net(std::size_t n_classes, std::vector<std::size_t> hidden);

std::vector<double> forward_temp(double t, std::span<const double> x);
std::vector<double> forward_matrix(const Matrix& w, std::span<const double> b,
                                   std::span<const double> x);
std::vector<double> forward_dirichlet(const Matrix& w, std::span<const double> b,
                                      std::span<const double> x);
double off_diagonal_penalty(const Matrix& w, std::span<const double> b, double lambda_od,
                            double lambda_b);

std::vector<double> log_softmax(std::span<const double> x);
std::vector<double> softmax(std::span<const double> x);

std::vector<double> forward_op(const CalibratorModel& model, std::span<const double> x);
std::vector<double> forward_oi(const CalibratorModel& model, std::span<const double> x);
std::vector<double> forward_diag(const CalibratorModel& model, std::span<const double> x);

/// Values recorded by a forward pass and consumed by `backward`.
struct ForwardCache {
  SortResult sort;
  MlpTrace trace;
  std::vector<double> gaps;  // per-position multipliers of m in the sorted frame
  std::vector<double> features;  // linear-model input (x or log softmax x)
};

/// Dispatches on the model's method.
std::vector<double> forward(const CalibratorModel& model, std::span<const double> x,
                            ForwardCache* cache = nullptr);

/// Accumulates grad_out . d f(x) / d params into grad_params. `cache` must
/// come from forward() on the same model and input. The sort permutation and
/// sorted values are constants along the parameter path.
void backward(const CalibratorModel& model, std::span<const double> x,
              const ForwardCache& cache, std::span<const double> grad_out,
              std::span<double> grad_params);

}  // namespace iopcal
