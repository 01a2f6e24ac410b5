#pragma once

#include <functional>
#include <span>
#include <vector>

#include "usb/rng.hpp"

namespace usb {

inline constexpr double kDefaultTFloor = 1e-3;

/// One draw from the Poisson-Brownian bridge between (x0, m0) and (x1, m1)
/// at in-interval time t, with its regression targets.
struct BridgeSample {
  double t = 0.0;
  std::vector<double> x;
  std::vector<double> u_target;    // probability-flow drift
  double g_target = 0.0;           // ln m1 - ln m0
  std::vector<double> eps_target;  // standard normal; the weighted score target is -eps
  double mass_weight = 1.0;        // (m1/m0)^t
};

/// eta = (1-t) x0 + t x1, x = eta + nu sqrt(t(1-t)) eps,
/// u = (1-2t)/(2t(1-t)) (x - eta) + (x1 - x0).
BridgeSample pb_bridge_at(std::span<const double> x0, std::span<const double> x1, double m0,
                          double m1, double nu, double t, std::span<const double> eps);
BridgeSample sample_pb_bridge(std::span<const double> x0, std::span<const double> x1, double m0,
                              double m1, double nu, double t, Rng& rng);

/// nu sqrt(t(1-t)), the bridge standard deviation; lambda(t) s = -eps.
double score_weight(double t, double nu);

/// Gaussian measure path with mean eta_t, isotropic std sigma_t and mass m_t.
/// Derivatives left empty are taken by central differences with step 1e-6.
struct CgmpSpec {
  std::size_t dim = 0;
  std::function<void(double, std::span<double>)> eta;
  std::function<double(double)> sigma;
  std::function<double(double)> mass;
  std::function<void(double, std::span<double>)> eta_dot;
  std::function<double(double)> sigma_dot;
  std::function<double(double)> log_mass_dot;
};

struct CgmpTargets {
  std::vector<double> u;  // (sigma'/sigma)(x - eta) + eta'
  double g = 0.0;         // d/dt ln m
  std::vector<double> s;  // -(x - eta)/sigma^2
};

CgmpTargets cgmp_targets(const CgmpSpec& spec, double t, std::span<const double> x);

/// The Poisson-Brownian bridge as a CgmpSpec (eta linear, sigma = nu
/// sqrt(t(1-t)), m = m0^(1-t) m1^t), with analytic derivatives unless
/// `numeric_derivatives` is set.
CgmpSpec pb_bridge_spec(std::span<const double> x0, std::span<const double> x1, double m0,
                        double m1, double nu, bool numeric_derivatives = false);

struct MixtureCondition {
  double weight = 1.0;
  CgmpSpec spec;
};

struct MarginalTargets {
  std::vector<double> u;
  double g = 0.0;
  std::vector<double> s;
  double density = 0.0;  // sum_z q(z) m_t(z) N(x; eta_t(z), sigma_t(z)^2 I)
  bool zero_density = false;
};

/// Posterior-weighted mixture of conditional targets, weights proportional to
/// q(z) m_t(z) N(x; eta_t(z), sigma_t(z)^2 I).
MarginalTargets marginal_targets_oracle(std::span<const MixtureCondition> conditions, double t,
                                        std::span<const double> x);

}  // namespace usb
