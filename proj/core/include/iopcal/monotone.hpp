#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "iopcal/mlp.hpp"

namespace iopcal {

/// Clenshaw-Curtis rule on [-1, 1] with `points` nodes (cos(k*pi/(points-1))).
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Rules are computed once per point count and cached; safe to call from any thread.
const QuadratureRule& clenshaw_curtis(std::size_t points);

inline constexpr std::size_t kDefaultQuadraturePoints = 50;

/// Increasing scalar function f(x) = integral_0^x g(t) dt + f(0), where g is a
/// scalar network with a softplus output. The parameter vector is the
/// network's parameters followed by one trailing entry holding f(0).
struct MonotoneNetSpec {
  MlpSpec derivative_net;
  std::size_t quadrature_points = kDefaultQuadraturePoints;

  friend bool operator==(const MonotoneNetSpec&, const MonotoneNetSpec&) = default;
};

/// Builds a derivative network spec (1, hidden..., 1) with a positive output.
MonotoneNetSpec make_monotone_spec(std::vector<std::size_t> hidden,
                                   std::size_t quadrature_points = kDefaultQuadraturePoints);

void validate(const MonotoneNetSpec& spec);
std::size_t param_count(const MonotoneNetSpec& spec);

double monotone_eval(const MonotoneNetSpec& spec, std::span<const double> params, double x);

/// Evaluates one monotone net at many points. Validates once at
/// construction; `params` must outlive the evaluator.
///
/// The rectifier network is affine in t between its kinks, so the integration
/// range is cut at 0, at every kink, and wherever the softplus argument spans
/// more than a few units; each piece gets its own Clenshaw-Curtis rule. Where
/// the argument exceeds 36 softplus equals it to double precision and the
/// piece is integrated exactly; below -36 the integrand counts as zero.
class MonotoneEvaluator {
 public:
  MonotoneEvaluator(const MonotoneNetSpec& spec, std::span<const double> params);

  /// One interval on which the output pre-activation equals slope * t + intercept.
  struct Piece {
    double t0 = 0.0;
    double t1 = 0.0;
    double slope = 0.0;
    double intercept = 0.0;
    enum class Kind { quadrature, linear, negligible } kind = Kind::quadrature;
  };

  /// Pieces covering [lo, hi] (lo <= 0 <= hi) in increasing order.
  const std::vector<Piece>& pieces(double lo, double hi);

  double value(double x);
  void values(std::span<const double> xs, std::span<double> out);

  /// Accumulates upstream * df(x)/dparams into grad_params.
  void gradient(double x, double upstream, std::span<double> grad_params);
  /// Accumulates sum_i upstream[i] * df(xs[i])/dparams into grad_params.
  void gradients(std::span<const double> xs, std::span<const double> upstream,
                 std::span<double> grad_params);

 private:
  struct Segment {
    double integral = 0.0;
    double mass = 0.0;  // integral of sigmoid(z) over the segment
    double centre = 0.0;
  };

  void check_inputs(std::span<const double> xs) const;
  void prepare(std::span<const double> xs);
  std::size_t locate(double x) const;
  Segment integrate(const Piece& p, double a, double b, bool need_mass) const;
  double value_prepared(double x) const;
  void descend(std::size_t layer, double t0, double t1);
  void emit(double t0, double t1, double slope, double intercept);
  void backprop_at(double t, double delta, double* grad_net);

  const MlpSpec* net_;
  std::span<const double> params_;
  const QuadratureRule* rule_;
  std::vector<std::size_t> offsets_;
  std::vector<std::vector<double>> in_slope_, in_icpt_, pre_slope_, pre_icpt_, roots_;
  std::vector<std::vector<double>> acts_;
  std::vector<double> delta_, next_;
  std::vector<Piece> pieces_;
  std::size_t split_ = 0;  // first piece at or above 0
  std::vector<Segment> full_;
  std::vector<double> towards_zero_;  // integral between each piece and 0
  std::vector<double> coeff_;
};

/// Returns f(x) and accumulates upstream * df/dparams into grad_params.
double monotone_eval_backward(const MonotoneNetSpec& spec, std::span<const double> params,
                              double x, double upstream, std::span<double> grad_params);

}  // namespace iopcal
