#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace usb {

struct AdamState {
  std::uint64_t step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<double> m;
  std::vector<double> v;

  AdamState() = default;
  explicit AdamState(std::size_t n, double lr = 1e-3) : learning_rate(lr), m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update in place; increments `state.step`.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

}  // namespace usb
