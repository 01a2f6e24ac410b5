#include "usb/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "usb/error.hpp"
#include "usb/kernels.hpp"

namespace usb {

std::size_t MlpSpec::layer_in(std::size_t layer) const {
  return layer == 0 ? net_input_dim() : hidden_width;
}

std::size_t MlpSpec::layer_out(std::size_t layer) const {
  return layer + 1 == depth ? output_dim : hidden_width;
}

std::size_t MlpSpec::weight_offset(std::size_t layer) const {
  std::size_t off = 0;
  for (std::size_t l = 0; l < layer; ++l) off += layer_out(l) * (layer_in(l) + 1);
  return off;
}

std::size_t MlpSpec::param_count() const { return weight_offset(depth); }

void MlpSpec::validate() const {
  require(depth >= 1, ErrorKind::parameter, "mlp depth must be >= 1");
  require(input_dim >= 1 && output_dim >= 1, ErrorKind::parameter,
          "mlp input/output widths must be >= 1");
  require(depth == 1 || hidden_width >= 1, ErrorKind::parameter,
          "mlp hidden width must be >= 1");
  require(std::isfinite(negative_slope), ErrorKind::parameter,
          "leaky-relu slope must be finite");
}

namespace {

void check_params(const MlpSpec& spec, std::span<const double> params) {
  spec.validate();
  require(params.size() == spec.param_count(), ErrorKind::shape,
          "parameter count " + std::to_string(params.size()) + " != " +
              std::to_string(spec.param_count()));
}

}  // namespace

Matrix mlp_forward(const MlpSpec& spec, std::span<const double> params,
                   const Matrix& x, std::span<const double> t, MlpTape* tape) {
  check_params(spec, params);
  require(x.cols() == spec.input_dim, ErrorKind::shape,
          "input has " + std::to_string(x.cols()) + " columns, network expects " +
              std::to_string(spec.input_dim));
  require(t.size() == x.rows(), ErrorKind::shape, "time vector length != batch rows");

  const std::size_t batch = x.rows();
  Matrix a(batch, spec.net_input_dim());
  for (std::size_t r = 0; r < batch; ++r) {
    std::copy_n(x.row(r).data(), spec.input_dim, a.row(r).data());
    a(r, spec.input_dim) = t[r];
  }
  if (tape != nullptr) {
    tape->inputs.clear();
    tape->pre.clear();
  }

  for (std::size_t l = 0; l < spec.depth; ++l) {
    const std::size_t in = spec.layer_in(l), out = spec.layer_out(l);
    const double* w = params.data() + spec.weight_offset(l);
    const double* b = w + out * in;
    Matrix z(batch, out);
    kernels::gemm_nt(batch, out, in, a.data(), in, w, in, z.data(), out, false);
    for (std::size_t r = 0; r < batch; ++r) {
      double* zr = z.row(r).data();
      for (std::size_t o = 0; o < out; ++o) zr[o] += b[o];
    }
    if (tape != nullptr) tape->inputs.push_back(a);
    if (l + 1 == spec.depth) return z;
    if (tape != nullptr) tape->pre.push_back(z);
    for (double& v : z.values()) v = leaky_relu(v, spec.negative_slope);
    a = std::move(z);
  }
  return a;  // unreachable: depth >= 1
}

std::vector<double> mlp_backward(const MlpSpec& spec, std::span<const double> params,
                                 const MlpTape& tape, const Matrix& upstream) {
  check_params(spec, params);
  require(tape.inputs.size() == spec.depth && tape.pre.size() + 1 == spec.depth,
          ErrorKind::shape, "tape does not match network depth");
  const std::size_t batch = tape.inputs.front().rows();
  require(upstream.rows() == batch && upstream.cols() == spec.output_dim,
          ErrorKind::shape, "upstream gradient shape mismatch");
  require(upstream.all_finite(), ErrorKind::numeric, "non-finite upstream gradient");

  std::vector<double> grad(params.size(), 0.0);
  Matrix delta = upstream;
  for (std::size_t l = spec.depth; l-- > 0;) {
    const std::size_t in = spec.layer_in(l), out = spec.layer_out(l);
    const std::size_t off = spec.weight_offset(l);
    double* gw = grad.data() + off;
    double* gb = gw + out * in;
    const Matrix& a = tape.inputs[l];
    kernels::gemm_tn_acc(out, in, batch, delta.data(), out, a.data(), in, gw, in);
    for (std::size_t r = 0; r < batch; ++r) {
      const double* dr = delta.row(r).data();
      for (std::size_t o = 0; o < out; ++o) gb[o] += dr[o];
    }
    if (l == 0) break;
    Matrix prev(batch, in);
    kernels::gemm_nn_acc(batch, in, out, delta.data(), out, params.data() + off, in,
                         prev.data(), in);
    const Matrix& z = tape.pre[l - 1];
    for (std::size_t i = 0; i < prev.size(); ++i)
      prev.data()[i] *= leaky_relu_grad(z.data()[i], spec.negative_slope);
    delta = std::move(prev);
  }
  return grad;
}

std::vector<double> mlp_init(const MlpSpec& spec, Rng& rng, bool zero_output_layer) {
  spec.validate();
  std::vector<double> p(spec.param_count(), 0.0);
  const double gain2 = 2.0 / (1.0 + spec.negative_slope * spec.negative_slope);
  for (std::size_t l = 0; l < spec.depth; ++l) {
    if (zero_output_layer && l + 1 == spec.depth) break;
    const std::size_t in = spec.layer_in(l), out = spec.layer_out(l);
    const double wb = std::sqrt(3.0 * gain2 / static_cast<double>(in));
    const double bb = 1.0 / std::sqrt(static_cast<double>(in));
    double* w = p.data() + spec.weight_offset(l);
    for (std::size_t i = 0; i < out * in; ++i) w[i] = rng.uniform(-wb, wb);
    for (std::size_t o = 0; o < out; ++o) w[out * in + o] = rng.uniform(-bb, bb);
  }
  return p;
}

Mlp::Mlp(MlpSpec spec) : spec_(spec), params_(spec.param_count(), 0.0) {
  spec_.validate();
}

Mlp::Mlp(MlpSpec spec, std::vector<double> params)
    : spec_(spec), params_(std::move(params)) {
  check_params(spec_, params_);
}

Mlp Mlp::initialized(const MlpSpec& spec, Rng& rng, bool zero_output_layer) {
  return Mlp(spec, mlp_init(spec, rng, zero_output_layer));
}

}  // namespace usb
