#pragma once

#include <cstddef>
#include <span>

#include "usb/matrix.hpp"

namespace usb {

struct TransportResult {
  double cost = 0.0;
  Matrix plan;  // n_a x n_b
  std::size_t pivots = 0;
};

/// Exact balanced transport by the network simplex method. Supplies and
/// demands must be nonnegative with equal totals (up to rounding; the
/// residual is absorbed by the artificial arcs and ignored).
TransportResult network_simplex(std::span<const double> supply, std::span<const double> demand,
                                const Matrix& cost);

}  // namespace usb
