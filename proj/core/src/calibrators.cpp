#include "iopcal/calibrators.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "iopcal/error.hpp"

namespace iopcal {

namespace {

void require_length(std::span<const double> x, std::size_t n, const char* what) {
  if (x.size() != n) {
    fail(ErrorKind::invalid_input, std::string(what) + ": expected length " +
                                       std::to_string(n) + ", got " + std::to_string(x.size()));
  }
}

void require_method(const CalibratorModel& model, Method method, const char* what) {
  if (model.method() != method) {
    fail(ErrorKind::invalid_input, std::string(what) + ": model is " +
                                       std::string(to_string(model.method())));
  }
}

Matrix weight_block(const CalibratorModel& model) {
  const std::size_t n = model.n_classes();
  const auto& p = model.params();
  return Matrix(n, n, std::vector<double>(p.begin(), p.begin() + static_cast<long>(n * n)));
}

std::span<const double> bias_block(const CalibratorModel& model) {
  const std::size_t n = model.n_classes();
  return std::span<const double>(model.params()).subspan(n * n, n);
}

// Shared body of the op/oi forward pass. The network consumes x (op) or its
// sorted copy (oi); the sorted-frame increments are w_i = |y_i - y_{i+1}| m_i
// for i < n-1 and w_{n-1} = y_{n-1} m_{n-1}.
std::vector<double> order_preserving_forward(const CalibratorModel& model,
                                             std::span<const double> x, bool sorted_input,
                                             ForwardCache& cache) {
  const std::size_t n = model.n_classes();
  require_length(x, n, "forward_op");
  cache.sort = sort_descending(x);
  const std::vector<double>& y = cache.sort.sorted;
  mlp_forward(model.net(), model.params(), sorted_input ? std::span<const double>(y) : x,
              cache.trace);
  cache.gaps.resize(n);
  for (std::size_t i = 0; i + 1 < n; ++i) cache.gaps[i] = std::abs(y[i] - y[i + 1]);
  cache.gaps[n - 1] = y[n - 1];
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = cache.gaps[i] * cache.trace.output[i];
  return assemble_intra_op(cache.sort, w);
}

}  // namespace

std::string_view to_string(Method method) noexcept {
  switch (method) {
    case Method::ts: return "ts";
    case Method::ms: return "ms";
    case Method::dir: return "dir";
    case Method::diag: return "diag";
    case Method::oi: return "oi";
    case Method::op: return "op";
    case Method::unconstrained: return "unconstrained";
  }
  return "unknown";
}

std::optional<Method> parse_method(std::string_view name) noexcept {
  for (Method m : kAllMethods) {
    if (to_string(m) == name) return m;
  }
  return std::nullopt;
}

bool is_rank_preserving(Method method) noexcept {
  switch (method) {
    case Method::ts:
    case Method::diag:
    case Method::oi:
    case Method::op:
      return true;
    default:
      return false;
  }
}

std::vector<bool> order_preserving_mask(std::size_t n_classes) {
  std::vector<bool> mask(n_classes, true);
  mask.back() = false;
  return mask;
}

MlpSpec order_preserving_net(std::size_t n_classes, std::vector<std::size_t> hidden) {
  MlpSpec spec;
  spec.widths.push_back(n_classes);
  spec.widths.insert(spec.widths.end(), hidden.begin(), hidden.end());
  spec.widths.push_back(n_classes);
  spec.positive_outputs = order_preserving_mask(n_classes);
  return spec;
}

MlpSpec unconstrained_net(std::size_t n_classes, std::vector<std::size_t> hidden) {
  MlpSpec spec = order_preserving_net(n_classes, std::move(hidden));
  spec.positive_outputs.clear();
  return spec;
}

// ---------------------------------------------------------------------------
// CalibratorModel

CalibratorModel::CalibratorModel(Method method, std::size_t n_classes, MlpSpec net,
                                 std::size_t quadrature_points, std::vector<double> params)
    : method_(method),
      n_classes_(n_classes),
      net_(std::move(net)),
      quadrature_points_(quadrature_points),
      params_(std::move(params)) {
  validate();
}

CalibratorModel CalibratorModel::temperature(std::size_t n_classes, double t) {
  return CalibratorModel(Method::ts, n_classes, {}, kDefaultQuadraturePoints, {t});
}

CalibratorModel CalibratorModel::matrix_scaling(std::size_t n_classes) {
  std::vector<double> p(n_classes * n_classes + n_classes, 0.0);
  for (std::size_t i = 0; i < n_classes; ++i) p[i * n_classes + i] = 1.0;
  return CalibratorModel(Method::ms, n_classes, {}, kDefaultQuadraturePoints, std::move(p));
}

CalibratorModel CalibratorModel::dirichlet(std::size_t n_classes) {
  CalibratorModel m = matrix_scaling(n_classes);
  m.method_ = Method::dir;
  return m;
}

CalibratorModel CalibratorModel::diagonal(std::size_t n_classes, MonotoneNetSpec spec,
                                          std::vector<double> params) {
  return CalibratorModel(Method::diag, n_classes, std::move(spec.derivative_net),
                         spec.quadrature_points, std::move(params));
}

CalibratorModel CalibratorModel::network(Method method, std::size_t n_classes, MlpSpec net,
                                         std::vector<double> params) {
  return CalibratorModel(method, n_classes, std::move(net), kDefaultQuadraturePoints,
                         std::move(params));
}

CalibratorModel CalibratorModel::with_params(std::vector<double> params) const {
  CalibratorModel copy = *this;
  copy.params_ = std::move(params);
  copy.validate();
  return copy;
}

std::size_t CalibratorModel::expected_param_count(Method method, std::size_t n_classes,
                                                  const MlpSpec& net) {
  switch (method) {
    case Method::ts: return 1;
    case Method::ms:
    case Method::dir: return n_classes * n_classes + n_classes;
    case Method::diag: return param_count(net) + 1;
    case Method::oi:
    case Method::op:
    case Method::unconstrained: return param_count(net);
  }
  return 0;
}

void CalibratorModel::validate() const {
  if (n_classes_ == 0) fail(ErrorKind::invalid_input, "calibrator: n_classes must be >= 1");
  switch (method_) {
    case Method::ts:
      if (params_.size() == 1 && !(params_[0] > 0.0)) {
        fail(ErrorKind::invalid_parameter, "calibrator: temperature must be > 0");
      }
      break;
    case Method::ms:
    case Method::dir:
      break;
    case Method::diag:
      iopcal::validate(MonotoneNetSpec{net_, quadrature_points_});
      break;
    case Method::op:
    case Method::oi:
      iopcal::validate(net_);
      if (net_.input_size() != n_classes_ || net_.output_size() != n_classes_) {
        fail(ErrorKind::invalid_input, "calibrator: network must map n_classes -> n_classes");
      }
      if (net_.positive_outputs != order_preserving_mask(n_classes_)) {
        fail(ErrorKind::invalid_input,
             "calibrator: op/oi networks need softplus on every output but the last");
      }
      break;
    case Method::unconstrained:
      iopcal::validate(net_);
      if (net_.input_size() != n_classes_ || net_.output_size() != n_classes_) {
        fail(ErrorKind::invalid_input, "calibrator: network must map n_classes -> n_classes");
      }
      break;
  }
  const std::size_t expected = expected_param_count(method_, n_classes_, net_);
  if (params_.size() != expected) {
    fail(ErrorKind::invalid_input, "calibrator: expected " + std::to_string(expected) +
                                       " parameters for " + std::string(to_string(method_)) +
                                       ", got " + std::to_string(params_.size()));
  }
}

// ---------------------------------------------------------------------------
// Free forward functions

std::vector<double> log_softmax(std::span<const double> x) {
  const double mx = *std::max_element(x.begin(), x.end());
  double sum = 0.0;
  for (double v : x) sum += std::exp(v - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - lse;
  return out;
}

std::vector<double> softmax(std::span<const double> x) {
  const double mx = *std::max_element(x.begin(), x.end());
  std::vector<double> out(x.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

std::vector<double> forward_temp(double t, std::span<const double> x) {
  if (!(t > 0.0)) fail(ErrorKind::invalid_parameter, "forward_temp: t must be > 0");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] / t;
  return out;
}

std::vector<double> forward_matrix(const Matrix& w, std::span<const double> b,
                                   std::span<const double> x) {
  if (w.cols() != x.size() || w.rows() != b.size()) {
    fail(ErrorKind::invalid_input, "forward_matrix: shape mismatch");
  }
  std::vector<double> out(w.rows());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    double acc = b[i];
    const auto row = w.row(i);
    for (std::size_t j = 0; j < x.size(); ++j) acc += row[j] * x[j];
    out[i] = acc;
  }
  return out;
}

std::vector<double> forward_dirichlet(const Matrix& w, std::span<const double> b,
                                      std::span<const double> x) {
  if (w.cols() != x.size() || w.rows() != b.size() || x.empty()) {
    fail(ErrorKind::invalid_input, "forward_dirichlet: shape mismatch");
  }
  return forward_matrix(w, b, log_softmax(x));
}

double off_diagonal_penalty(const Matrix& w, std::span<const double> b, double lambda_od,
                            double lambda_b) {
  if (lambda_od < 0.0 || lambda_b < 0.0) {
    fail(ErrorKind::invalid_parameter, "off_diagonal_penalty: weights must be >= 0");
  }
  double off = 0.0;
  for (std::size_t i = 0; i < w.rows(); ++i) {
    for (std::size_t j = 0; j < w.cols(); ++j) {
      if (i != j) off += w(i, j) * w(i, j);
    }
  }
  double bias = 0.0;
  for (double v : b) bias += v * v;
  return lambda_od * off + lambda_b * bias;
}

std::vector<double> forward_op(const CalibratorModel& model, std::span<const double> x) {
  require_method(model, Method::op, "forward_op");
  ForwardCache cache;
  return order_preserving_forward(model, x, false, cache);
}

std::vector<double> forward_oi(const CalibratorModel& model, std::span<const double> x) {
  require_method(model, Method::oi, "forward_oi");
  ForwardCache cache;
  return order_preserving_forward(model, x, true, cache);
}

std::vector<double> forward_diag(const CalibratorModel& model, std::span<const double> x) {
  require_method(model, Method::diag, "forward_diag");
  require_length(x, model.n_classes(), "forward_diag");
  const MonotoneNetSpec spec = model.monotone_spec();
  MonotoneEvaluator eval(spec, model.params());
  std::vector<double> out(x.size());
  eval.values(x, out);
  return out;
}

std::vector<double> forward(const CalibratorModel& model, std::span<const double> x,
                            ForwardCache* cache) {
  const std::size_t n = model.n_classes();
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  switch (model.method()) {
    case Method::ts:
      require_length(x, n, "forward");
      return forward_temp(model.params()[0], x);
    case Method::ms:
      require_length(x, n, "forward");
      c.features.assign(x.begin(), x.end());
      return forward_matrix(weight_block(model), bias_block(model), c.features);
    case Method::dir:
      require_length(x, n, "forward");
      c.features = log_softmax(x);
      return forward_matrix(weight_block(model), bias_block(model), c.features);
    case Method::diag:
      return forward_diag(model, x);
    case Method::op:
      return order_preserving_forward(model, x, false, c);
    case Method::oi:
      return order_preserving_forward(model, x, true, c);
    case Method::unconstrained:
      require_length(x, n, "forward");
      mlp_forward(model.net(), model.params(), x, c.trace);
      return c.trace.output;
  }
  return {};
}

void backward(const CalibratorModel& model, std::span<const double> x,
              const ForwardCache& cache, std::span<const double> grad_out,
              std::span<double> grad_params) {
  const std::size_t n = model.n_classes();
  const auto& p = model.params();
  switch (model.method()) {
    case Method::ts: {
      const double t = p[0];
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc -= grad_out[i] * x[i];
      grad_params[0] += acc / (t * t);
      return;
    }
    case Method::ms:
    case Method::dir: {
      const std::vector<double>& z = cache.features;
      for (std::size_t i = 0; i < n; ++i) {
        const double g = grad_out[i];
        for (std::size_t j = 0; j < n; ++j) grad_params[i * n + j] += g * z[j];
        grad_params[n * n + i] += g;
      }
      return;
    }
    case Method::diag: {
      const MonotoneNetSpec spec = model.monotone_spec();
      MonotoneEvaluator eval(spec, p);
      eval.gradients(x, grad_out, grad_params);
      return;
    }
    case Method::op:
    case Method::oi: {
      // f = P^T U w: pull back through the scatter, then U^T (prefix sums).
      std::vector<double> grad_m(n);
      double prefix = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        prefix += grad_out[cache.sort.perm[j]];
        grad_m[j] = cache.gaps[j] * prefix;
      }
      mlp_backward(model.net(), p, cache.trace, grad_m, grad_params);
      return;
    }
    case Method::unconstrained:
      mlp_backward(model.net(), p, cache.trace, grad_out, grad_params);
      return;
  }
}

}  // namespace iopcal
