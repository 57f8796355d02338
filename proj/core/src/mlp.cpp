#include "iopcal/mlp.hpp"

#include <cmath>
#include <string>

#include "iopcal/error.hpp"

namespace iopcal {

namespace {

void check_shapes(const MlpSpec& spec, std::span<const double> params,
                  std::span<const double> input) {
  validate(spec);
  if (params.size() != param_count(spec)) {
    fail(ErrorKind::invalid_input, "mlp: expected " + std::to_string(param_count(spec)) +
                                       " parameters, got " + std::to_string(params.size()));
  }
  if (input.size() != spec.input_size()) {
    fail(ErrorKind::invalid_input, "mlp: expected input of length " +
                                       std::to_string(spec.input_size()) + ", got " +
                                       std::to_string(input.size()));
  }
}

bool is_positive(const MlpSpec& spec, std::size_t unit) {
  return !spec.positive_outputs.empty() && spec.positive_outputs[unit];
}

}  // namespace

void validate(const MlpSpec& spec) {
  if (spec.widths.size() < 2) {
    fail(ErrorKind::invalid_input, "mlp: need at least an input and an output width");
  }
  for (std::size_t w : spec.widths) {
    if (w == 0) fail(ErrorKind::invalid_input, "mlp: layer widths must be >= 1");
  }
  if (!spec.positive_outputs.empty() && spec.positive_outputs.size() != spec.output_size()) {
    fail(ErrorKind::invalid_input, "mlp: positivity mask length must equal output width");
  }
}

std::size_t param_count(const MlpSpec& spec) {
  std::size_t count = 0;
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    count += spec.widths[l] * spec.widths[l + 1] + spec.widths[l + 1];
  }
  return count;
}

std::size_t layer_offset(const MlpSpec& spec, std::size_t layer) {
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layer; ++l) {
    offset += spec.widths[l] * spec.widths[l + 1] + spec.widths[l + 1];
  }
  return offset;
}

double softplus(double a) noexcept {
  return a > 0.0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a));
}

double sigmoid(double a) noexcept {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

double softplus_inverse(double y) {
  if (!(y > 0.0)) fail(ErrorKind::invalid_parameter, "softplus_inverse: y must be > 0");
  // log(exp(y) - 1), written to stay accurate for large and small y.
  return y > 30.0 ? y + std::log1p(-std::exp(-y)) : std::log(std::expm1(y));
}

void mlp_forward(const MlpSpec& spec, std::span<const double> params,
                 std::span<const double> input, MlpTrace& trace) {
  check_shapes(spec, params, input);
  const std::size_t layers = spec.layer_count();
  trace.inputs.resize(layers);
  trace.inputs[0].assign(input.begin(), input.end());

  std::size_t offset = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = spec.widths[l];
    const std::size_t out = spec.widths[l + 1];
    const double* weights = params.data() + offset;
    const double* bias = weights + in * out;
    const std::vector<double>& x = trace.inputs[l];
    const bool last = l + 1 == layers;

    std::vector<double>& dst = last ? trace.last_pre : trace.inputs[l + 1];
    dst.resize(out);
    for (std::size_t o = 0; o < out; ++o) {
      double acc = bias[o];
      const double* row = weights + o * in;
      for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
      dst[o] = last ? acc : (acc > 0.0 ? acc : 0.0);
    }
    offset += in * out + out;
  }

  trace.output.resize(spec.output_size());
  for (std::size_t o = 0; o < spec.output_size(); ++o) {
    const double a = trace.last_pre[o];
    trace.output[o] = is_positive(spec, o) ? softplus(a) : a;
  }
}

std::vector<double> mlp_forward(const MlpSpec& spec, std::span<const double> params,
                                std::span<const double> input) {
  MlpTrace trace;
  mlp_forward(spec, params, input, trace);
  return std::move(trace.output);
}

void mlp_backward(const MlpSpec& spec, std::span<const double> params,
                  const MlpTrace& trace, std::span<const double> grad_out,
                  std::span<double> grad_params) {
  const std::size_t layers = spec.layer_count();
  std::vector<double> delta(spec.output_size());
  for (std::size_t o = 0; o < delta.size(); ++o) {
    delta[o] = is_positive(spec, o) ? grad_out[o] * sigmoid(trace.last_pre[o]) : grad_out[o];
  }

  std::vector<double> next;
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t in = spec.widths[l];
    const std::size_t out = spec.widths[l + 1];
    const std::size_t offset = layer_offset(spec, l);
    const double* weights = params.data() + offset;
    double* grad_w = grad_params.data() + offset;
    double* grad_b = grad_w + in * out;
    const std::vector<double>& x = trace.inputs[l];

    for (std::size_t o = 0; o < out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      grad_b[o] += d;
      double* row = grad_w + o * in;
      for (std::size_t i = 0; i < in; ++i) row[i] += d * x[i];
    }
    if (l == 0) break;

    // x is the rectified output of layer l - 1; the rectifier gate is x > 0.
    next.assign(in, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      const double* row = weights + o * in;
      for (std::size_t i = 0; i < in; ++i) next[i] += d * row[i];
    }
    for (std::size_t i = 0; i < in; ++i) {
      if (!(x[i] > 0.0)) next[i] = 0.0;
    }
    delta.swap(next);
  }
}

}  // namespace iopcal
