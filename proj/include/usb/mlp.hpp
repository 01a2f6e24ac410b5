#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "usb/matrix.hpp"
#include "usb/rng.hpp"

namespace usb {

/// Fully connected network: `depth` affine layers with leaky-ReLU between
/// them and a linear output. The time value is appended to every input row
/// as one extra feature, so the first layer sees `input_dim + 1` columns.
struct MlpSpec {
  std::size_t input_dim = 0;
  std::size_t hidden_width = 256;
  std::size_t depth = 5;
  std::size_t output_dim = 0;
  double negative_slope = 0.01;

  std::size_t net_input_dim() const { return input_dim + 1; }
  std::size_t layer_in(std::size_t layer) const;
  std::size_t layer_out(std::size_t layer) const;
  std::size_t param_count() const;
  /// Offset of layer `l`'s weight block (out x in, row-major); its bias
  /// vector follows immediately.
  std::size_t weight_offset(std::size_t layer) const;

  void validate() const;

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

/// Leaky-ReLU. The derivative at exactly 0 is taken as the negative slope.
inline double leaky_relu(double x, double slope) { return x > 0.0 ? x : slope * x; }
inline double leaky_relu_grad(double x, double slope) { return x > 0.0 ? 1.0 : slope; }

/// Values retained by a forward pass for the reverse sweep.
struct MlpTape {
  std::vector<Matrix> inputs;  // input to each layer (post-activation)
  std::vector<Matrix> pre;     // pre-activation of each hidden layer
};

Matrix mlp_forward(const MlpSpec& spec, std::span<const double> params,
                   const Matrix& x, std::span<const double> t,
                   MlpTape* tape = nullptr);

/// Parameter gradient of <upstream, f(x)>; `upstream` has the output shape.
std::vector<double> mlp_backward(const MlpSpec& spec, std::span<const double> params,
                                 const MlpTape& tape, const Matrix& upstream);

/// Kaiming-uniform weights (fan-in, leaky-ReLU gain) and uniform(+-1/sqrt(fan_in))
/// biases. `zero_output_layer` zeroes the last layer.
std::vector<double> mlp_init(const MlpSpec& spec, Rng& rng, bool zero_output_layer);

/// Spec plus a flat parameter vector.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(MlpSpec spec);
  Mlp(MlpSpec spec, std::vector<double> params);

  static Mlp initialized(const MlpSpec& spec, Rng& rng, bool zero_output_layer);

  const MlpSpec& spec() const noexcept { return spec_; }
  std::vector<double>& params() noexcept { return params_; }
  const std::vector<double>& params() const noexcept { return params_; }

  Matrix forward(const Matrix& x, std::span<const double> t,
                 MlpTape* tape = nullptr) const {
    return mlp_forward(spec_, params_, x, t, tape);
  }
  std::vector<double> backward(const MlpTape& tape, const Matrix& upstream) const {
    return mlp_backward(spec_, params_, tape, upstream);
  }

 private:
  MlpSpec spec_;
  std::vector<double> params_;
};

}  // namespace usb
