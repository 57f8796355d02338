#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace iopcal {

/// Fully connected network description. widths = (input, hidden..., output);
/// hidden layers use the rectifier. positive_outputs, when non-empty, has one
/// flag per output unit selecting softplus (true) or identity (false) on the
/// last layer.
///
/// Parameters are laid out layer by layer as W (out x in, row-major) then b.
struct MlpSpec {
  std::vector<std::size_t> widths;
  std::vector<bool> positive_outputs;

  std::size_t input_size() const { return widths.front(); }
  std::size_t output_size() const { return widths.back(); }
  std::size_t layer_count() const { return widths.size() - 1; }

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

void validate(const MlpSpec& spec);
std::size_t param_count(const MlpSpec& spec);

/// Offset of layer `layer`'s weight block inside the flat parameter vector;
/// its bias block follows immediately.
std::size_t layer_offset(const MlpSpec& spec, std::size_t layer);

double softplus(double a) noexcept;
double sigmoid(double a) noexcept;
/// Inverse of softplus for y > 0.
double softplus_inverse(double y);

/// Intermediate values kept by a traced forward pass for backpropagation.
struct MlpTrace {
  std::vector<std::vector<double>> inputs;  // input to each layer
  std::vector<double> last_pre;             // last-layer pre-activation
  std::vector<double> output;
};

std::vector<double> mlp_forward(const MlpSpec& spec, std::span<const double> params,
                                std::span<const double> input);

void mlp_forward(const MlpSpec& spec, std::span<const double> params,
                 std::span<const double> input, MlpTrace& trace);

/// Accumulates d(grad_out . output)/d(params) into grad_params.
void mlp_backward(const MlpSpec& spec, std::span<const double> params,
                  const MlpTrace& trace, std::span<const double> grad_out,
                  std::span<double> grad_params);

}  // namespace iopcal
