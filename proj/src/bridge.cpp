#include "usb/bridge.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "usb/error.hpp"

namespace usb {
namespace {

constexpr double kStep = 1e-6;

void check_time(double t) {
  require(t > 0.0 && t < 1.0, ErrorKind::domain, "bridge time must lie strictly inside (0, 1)");
}

}  // namespace

double score_weight(double t, double nu) {
  require(t >= 0.0 && t <= 1.0, ErrorKind::domain, "score weight time must lie in [0, 1]");
  return nu * std::sqrt(t * (1.0 - t));
}

BridgeSample pb_bridge_at(std::span<const double> x0, std::span<const double> x1, double m0,
                          double m1, double nu, double t, std::span<const double> eps) {
  check_time(t);
  require(x0.size() == x1.size() && eps.size() == x0.size(), ErrorKind::shape,
          "bridge endpoints and noise differ in dimension");
  require(m0 > 0.0 && m1 > 0.0, ErrorKind::domain, "bridge masses must be positive");
  require(nu > 0.0, ErrorKind::parameter, "nu must be positive");
  const std::size_t d = x0.size();
  const double sd = nu * std::sqrt(t * (1.0 - t));
  const double rate = (1.0 - 2.0 * t) / (2.0 * t * (1.0 - t));
  BridgeSample b;
  b.t = t;
  b.x.resize(d);
  b.u_target.resize(d);
  b.eps_target.assign(eps.begin(), eps.end());
  for (std::size_t c = 0; c < d; ++c) {
    const double eta = (1.0 - t) * x0[c] + t * x1[c];
    const double dev = sd * eps[c];
    b.x[c] = eta + dev;
    b.u_target[c] = rate * dev + (x1[c] - x0[c]);
  }
  b.g_target = std::log(m1) - std::log(m0);
  b.mass_weight = std::exp(t * b.g_target);
  return b;
}

BridgeSample sample_pb_bridge(std::span<const double> x0, std::span<const double> x1, double m0,
                              double m1, double nu, double t, Rng& rng) {
  std::vector<double> eps(x0.size());
  for (double& e : eps) e = rng.normal();
  return pb_bridge_at(x0, x1, m0, m1, nu, t, eps);
}

CgmpTargets cgmp_targets(const CgmpSpec& spec, double t, std::span<const double> x) {
  const std::size_t d = spec.dim;
  require(x.size() == d, ErrorKind::shape, "point dimension does not match the path");
  require(spec.eta && spec.sigma && spec.mass, ErrorKind::parameter,
          "path needs eta, sigma and mass");
  const double sigma = spec.sigma(t);
  require(std::isfinite(sigma) && sigma > 0.0, ErrorKind::numeric,
          "path standard deviation vanishes (singular targets)");

  std::vector<double> eta(d), eta_dot(d);
  spec.eta(t, eta);
  if (spec.eta_dot) {
    spec.eta_dot(t, eta_dot);
  } else {
    std::vector<double> hi(d), lo(d);
    spec.eta(t + kStep, hi);
    spec.eta(t - kStep, lo);
    for (std::size_t c = 0; c < d; ++c) eta_dot[c] = (hi[c] - lo[c]) / (2.0 * kStep);
  }
  const double sigma_dot = spec.sigma_dot
                               ? spec.sigma_dot(t)
                               : (spec.sigma(t + kStep) - spec.sigma(t - kStep)) / (2.0 * kStep);
  CgmpTargets out;
  out.g = spec.log_mass_dot ? spec.log_mass_dot(t)
                            : (std::log(spec.mass(t + kStep)) - std::log(spec.mass(t - kStep))) /
                                  (2.0 * kStep);
  out.u.resize(d);
  out.s.resize(d);
  const double ratio = sigma_dot / sigma;
  for (std::size_t c = 0; c < d; ++c) {
    const double dev = x[c] - eta[c];
    out.u[c] = ratio * dev + eta_dot[c];
    out.s[c] = -dev / (sigma * sigma);
  }
  return out;
}

CgmpSpec pb_bridge_spec(std::span<const double> x0, std::span<const double> x1, double m0,
                        double m1, double nu, bool numeric_derivatives) {
  require(x0.size() == x1.size(), ErrorKind::shape, "bridge endpoints differ in dimension");
  require(m0 > 0.0 && m1 > 0.0 && nu > 0.0, ErrorKind::parameter,
          "bridge masses and nu must be positive");
  CgmpSpec s;
  s.dim = x0.size();
  std::vector<double> a(x0.begin(), x0.end()), b(x1.begin(), x1.end());
  const double lm0 = std::log(m0), lm1 = std::log(m1);
  s.eta = [a, b](double t, std::span<double> out) {
    for (std::size_t c = 0; c < a.size(); ++c) out[c] = (1.0 - t) * a[c] + t * b[c];
  };
  s.sigma = [nu](double t) { return nu * std::sqrt(t * (1.0 - t)); };
  s.mass = [lm0, lm1](double t) { return std::exp((1.0 - t) * lm0 + t * lm1); };
  if (!numeric_derivatives) {
    s.eta_dot = [a, b](double, std::span<double> out) {
      for (std::size_t c = 0; c < a.size(); ++c) out[c] = b[c] - a[c];
    };
    s.sigma_dot = [nu](double t) { return nu * (1.0 - 2.0 * t) / (2.0 * std::sqrt(t * (1.0 - t))); };
    s.log_mass_dot = [lm0, lm1](double) { return lm1 - lm0; };
  }
  return s;
}

MarginalTargets marginal_targets_oracle(std::span<const MixtureCondition> conditions, double t,
                                        std::span<const double> x) {
  require(!conditions.empty(), ErrorKind::parameter, "mixture needs at least one condition");
  const std::size_t d = x.size();
  std::vector<double> logw(conditions.size());
  std::vector<CgmpTargets> targets;
  targets.reserve(conditions.size());
  for (std::size_t k = 0; k < conditions.size(); ++k) {
    const auto& spec = conditions[k].spec;
    require(spec.dim == d, ErrorKind::shape, "mixture condition dimension mismatch");
    require(conditions[k].weight >= 0.0, ErrorKind::domain, "mixture weights must be >= 0");
    std::vector<double> eta(d);
    spec.eta(t, eta);
    const double sigma = spec.sigma(t);
    double sq = 0.0;
    for (std::size_t c = 0; c < d; ++c) sq += (x[c] - eta[c]) * (x[c] - eta[c]);
    logw[k] = std::log(conditions[k].weight) + std::log(spec.mass(t)) -
              0.5 * sq / (sigma * sigma) -
              static_cast<double>(d) * (std::log(sigma) + 0.5 * std::log(2.0 * std::numbers::pi));
    targets.push_back(cgmp_targets(spec, t, x));
  }
  MarginalTargets out;
  out.u.assign(d, 0.0);
  out.s.assign(d, 0.0);
  const double mx = *std::max_element(logw.begin(), logw.end());
  if (!std::isfinite(mx)) {
    out.zero_density = true;
    return out;
  }
  double z = 0.0;
  for (double lw : logw) z += std::exp(lw - mx);
  out.density = std::exp(mx) * z;
  out.zero_density = out.density == 0.0;
  for (std::size_t k = 0; k < conditions.size(); ++k) {
    const double w = std::exp(logw[k] - mx) / z;
    out.g += w * targets[k].g;
    for (std::size_t c = 0; c < d; ++c) {
      out.u[c] += w * targets[k].u[c];
      out.s[c] += w * targets[k].s[c];
    }
  }
  return out;
}

}  // namespace usb
