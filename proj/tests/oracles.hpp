#pragma once

// Independent reference computations used by the unit and acceptance tests.
// They are deliberately naive and share no code with the library.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace oracle {

using Grid = std::vector<std::vector<double>>;

inline double oet_value(const std::vector<double>& mu0, const std::vector<double>& mu1,
                        const Grid& cost, const Grid& g, double eps) {
  const std::size_t n0 = mu0.size(), n1 = mu1.size();
  double v = 0.0;
  std::vector<double> r(n0, 0.0), c(n1, 0.0);
  for (std::size_t i = 0; i < n0; ++i)
    for (std::size_t j = 0; j < n1; ++j) {
      if (g[i][j] <= 0.0) continue;
      v += g[i][j] * cost[i][j] + eps * (g[i][j] * std::log(g[i][j]) - g[i][j]);
      r[i] += g[i][j];
      c[j] += g[i][j];
    }
  auto kl = [](double p, double q) { return p > 0.0 ? p * std::log(p / q) - p + q : q; };
  for (std::size_t i = 0; i < n0; ++i) v += kl(r[i], mu0[i]);
  for (std::size_t j = 0; j < n1; ++j) v += kl(c[j], mu1[j]);
  return v;
}

/// Cyclic coordinate descent on the entropic OET objective. Each entry is
/// minimized exactly (safeguarded Newton on ln gamma_ij) with the others
/// held fixed; mu must be positive.
inline Grid oet_coordinate_descent(const std::vector<double>& mu0, const std::vector<double>& mu1,
                                   const Grid& cost, double eps, int max_sweeps = 200000) {
  const std::size_t n0 = mu0.size(), n1 = mu1.size();
  Grid g(n0, std::vector<double>(n1, 0.0));
  for (std::size_t i = 0; i < n0; ++i)
    for (std::size_t j = 0; j < n1; ++j)
      if (std::isfinite(cost[i][j])) g[i][j] = std::sqrt(mu0[i] * mu1[j]) / double(n0 * n1);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double change = 0.0;
    for (std::size_t i = 0; i < n0; ++i)
      for (std::size_t j = 0; j < n1; ++j) {
        if (!std::isfinite(cost[i][j])) continue;
        double rest_r = 0.0, rest_c = 0.0;
        for (std::size_t k = 0; k < n1; ++k)
          if (k != j) rest_r += g[i][k];
        for (std::size_t k = 0; k < n0; ++k)
          if (k != i) rest_c += g[k][j];
        auto f = [&](double y) {
          const double e = std::exp(y);
          return cost[i][j] + std::log((rest_r + e) / mu0[i]) + std::log((rest_c + e) / mu1[j]) +
                 eps * y;
        };
        auto df = [&](double y) {
          const double e = std::exp(y);
          return e / (rest_r + e) + e / (rest_c + e) + eps;
        };
        double lo = -700.0, hi = 50.0;
        double y = g[i][j] > 0.0 ? std::log(g[i][j]) : -20.0;
        for (int it = 0; it < 200; ++it) {
          const double fy = f(y);
          if (fy > 0) hi = y; else lo = y;
          double next = y - fy / df(y);
          if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
          if (std::abs(next - y) < 1e-15 * std::max(1.0, std::abs(y))) { y = next; break; }
          y = next;
        }
        const double nv = std::exp(y);
        change = std::max(change, std::abs(nv - g[i][j]));
        g[i][j] = nv;
      }
    if (change < 1e-15) break;
  }
  return g;
}

// Minimum of <C, P> over the vertices of the transport polytope: every set
// of n0 + n1 - 1 arcs whose equality system has a unique nonnegative solution.
inline double transport_lp_vertices(const std::vector<double>& a, const std::vector<double>& b,
                                    const std::vector<std::vector<double>>& cost) {
  const std::size_t n0 = a.size(), n1 = b.size(), arcs = n0 * n1, basis = n0 + n1 - 1;
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> pick(basis);
  for (std::size_t k = 0; k < basis; ++k) pick[k] = k;
  for (;;) {
    // rows: the n0 supply constraints and the first n1 - 1 demand constraints
    std::vector<std::vector<double>> m(basis, std::vector<double>(basis + 1, 0.0));
    for (std::size_t c = 0; c < basis; ++c) {
      const std::size_t i = pick[c] / n1, j = pick[c] % n1;
      m[i][c] = 1.0;
      if (j + 1 < n1) m[n0 + j][c] = 1.0;
    }
    for (std::size_t i = 0; i < n0; ++i) m[i][basis] = a[i];
    for (std::size_t j = 0; j + 1 < n1; ++j) m[n0 + j][basis] = b[j];
    bool singular = false;
    for (std::size_t c = 0; c < basis && !singular; ++c) {
      std::size_t piv = c;
      for (std::size_t r = c; r < basis; ++r)
        if (std::abs(m[r][c]) > std::abs(m[piv][c])) piv = r;
      if (std::abs(m[piv][c]) < 1e-12) {
        singular = true;
        break;
      }
      std::swap(m[c], m[piv]);
      for (std::size_t r = 0; r < basis; ++r) {
        if (r == c) continue;
        const double f = m[r][c] / m[c][c];
        for (std::size_t k = c; k <= basis; ++k) m[r][k] -= f * m[c][k];
      }
    }
    if (!singular) {
      bool feasible = true;
      double value = 0.0;
      for (std::size_t c = 0; c < basis; ++c) {
        const double x = m[c][basis] / m[c][c];
        if (x < -1e-12) feasible = false;
        value += x * cost[pick[c] / n1][pick[c] % n1];
      }
      if (feasible) best = std::min(best, value);
    }
    // next combination
    std::size_t k = basis;
    while (k > 0 && pick[k - 1] == arcs - basis + k - 1) --k;
    if (k == 0) break;
    ++pick[k - 1];
    for (std::size_t r = k; r < basis; ++r) pick[r] = pick[r - 1] + 1;
  }
  return best;
}

}  // namespace oracle
