#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "usb/data.hpp"

namespace usb {

/// Three-gene toggle switch (mutual inhibition, self-activation, inhibition
/// by gene 3, external activation beta) with noisy Euler-Maruyama dynamics
/// and probabilistic division. None of the constants are canonical; the
/// defaults give a stationary non-growing cluster and a transitioning,
/// growing one.
struct SimGeneParams {
  using Vec3 = std::array<double, 3>;

  struct Population {
    Vec3 center{};
    std::size_t count = 0;
    double spread = 0.0;  // isotropic Gaussian jitter of the initial cells
  };

  Vec3 alpha{1.0, 1.0, 1.0};        // self-activation
  double beta = 0.3;                // external signal
  Vec3 gamma{1.0, 1.0, 1.0};        // inhibition
  Vec3 degradation{0.3, 0.3, 0.3};
  Vec3 noise{0.05, 0.05, 0.01};     // SDE noise scale per gene
  double growth_scale = 3.0;        // alpha_g; division rate is alpha_g * x2^2/(1+x2^2) percent
  double division_noise = 0.05;
  double dt = 0.01;
  std::vector<double> record_times{0.0, 8.0, 16.0, 24.0, 32.0};
  std::vector<Population> populations;

  /// Defaults plus the two standard populations (steady, transitioning).
  static SimGeneParams defaults();
  void validate() const;
  Metadata describe() const;
};

SimGeneParams::Vec3 sim_gene_drift(const SimGeneParams& p, const SimGeneParams::Vec3& x);
/// alpha_g * x2^2 / (1 + x2^2), the growth rate in percent per unit time.
double sim_gene_growth_rate(const SimGeneParams& p, double x2);
/// Fixed point of the noise-free dynamics reached from `guess`.
SimGeneParams::Vec3 sim_gene_steady_state(const SimGeneParams& p, SimGeneParams::Vec3 guess);

/// 2-D dataset of (x1, x2) recorded at `record_times`.
TimeSeriesDataset gen_sim_gene(const SimGeneParams& params, std::uint64_t seed);

struct GaussianMixtureParams {
  std::size_t dim = 10;
  std::size_t upper_start = 100;
  std::size_t lower_start = 400;
  std::size_t upper_end = 1000;
  std::size_t split_end = 200;  // per side
  double separation = 3.0;
  double stddev = 0.5;

  void validate() const;
};

/// Two-time mixture: a stationary upper cluster that grows 100 -> 1000 and a
/// lower cluster of 400 that splits into left/right clusters of 200.
TimeSeriesDataset gen_gaussian_mixture(const GaussianMixtureParams& params, std::uint64_t seed);

}  // namespace usb
