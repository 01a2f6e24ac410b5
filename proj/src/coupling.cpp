#include "usb/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <thread>

#include "usb/error.hpp"
#include "usb/kernels.hpp"

namespace usb {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<std::size_t> subsample(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (k >= n) return idx;
  // partial Fisher-Yates
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.index(n - i)]);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<double> rescaled_weights(const Snapshot& s, const std::vector<std::size_t>& idx) {
  std::vector<double> w(idx.size());
  double sub = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k) sub += (w[k] = s.weights[idx[k]]);
  require(sub > 0.0, ErrorKind::numeric, "mini-batch sub-cloud has zero mass");
  const double f = s.total_mass() / sub;
  for (double& x : w) x *= f;
  return w;
}

BatchCoupling solve_batch(const Snapshot& s0, const Snapshot& s1, std::vector<std::size_t> idx0,
                          std::vector<std::size_t> idx1, const CouplingParams& params) {
  BatchCoupling out;
  const bool full0 = idx0.size() == s0.size();
  const bool full1 = idx1.size() == s1.size();
  const Matrix x0 = full0 ? s0.points : s0.points.gather_rows(idx0);
  const Matrix x1 = full1 ? s1.points : s1.points.gather_rows(idx1);
  const auto w0 = full0 ? s0.weights : rescaled_weights(s0, idx0);
  const auto w1 = full1 ? s1.weights : rescaled_weights(s1, idx1);
  const Matrix cost = wfr_cost_matrix(x0, x1, params.delta);
  const OetSolution sol = solve_oet(w0, w1, cost, params.oet);
  out.semi = semi_coupling_from_oet(sol.gamma, w0, w1);
  out.epsilon = sol.epsilon;
  out.iterations = sol.iterations;
  out.converged = sol.converged;
  out.objective = sol.objective;
  out.idx0 = std::move(idx0);
  out.idx1 = std::move(idx1);
  return out;
}

}  // namespace

PenaltyParams PenaltyParams::from_nu_delta(double nu, double delta) {
  require(nu > 0.0 && delta > 0.0, ErrorKind::parameter, "nu and delta must be positive");
  return {nu, delta, nu / (2.0 * delta * delta)};
}

PenaltyParams PenaltyParams::from_nu_lambda(double nu, double lambda_branch) {
  require(nu > 0.0 && lambda_branch > 0.0, ErrorKind::parameter,
          "nu and lambda must be positive");
  return {nu, std::sqrt(nu / (2.0 * lambda_branch)), lambda_branch};
}

PenaltyParams PenaltyParams::from_delta_lambda(double delta, double lambda_branch) {
  require(delta > 0.0 && lambda_branch > 0.0, ErrorKind::parameter,
          "delta and lambda must be positive");
  return {2.0 * lambda_branch * delta * delta, delta, lambda_branch};
}

Matrix wfr_cost_matrix(const Matrix& x0, const Matrix& x1, double delta) {
  require(delta > 0.0 && std::isfinite(delta), ErrorKind::parameter,
          "growth penalty delta must be positive");
  require(x0.cols() == x1.cols(), ErrorKind::shape, "point clouds differ in dimension");
  const std::size_t d = x0.cols();
  Matrix c(x0.rows(), x1.rows());
  constexpr double half_pi = std::numbers::pi / 2.0;
  for (std::size_t i = 0; i < x0.rows(); ++i) {
    const double* a = x0.data() + i * d;
    for (std::size_t j = 0; j < x1.rows(); ++j) {
      const double angle = std::sqrt(kernels::sq_dist(a, x1.data() + j * d, d)) / (2.0 * delta);
      c(i, j) = angle >= half_pi ? kInf : -2.0 * std::log(std::cos(angle));
    }
  }
  return c;
}

double SemiCoupling::mass_ratio(std::size_t i, std::size_t j) const {
  const double g0 = gamma0(i, j);
  if (!(g0 > 0.0)) return kMassRatioMin;
  return std::clamp(gamma1(i, j) / g0, kMassRatioMin, kMassRatioMax);
}

SemiCoupling semi_coupling_from_oet(const Matrix& gamma, std::span<const double> mu0,
                                    std::span<const double> mu1) {
  const std::size_t n0 = gamma.rows(), n1 = gamma.cols();
  require(mu0.size() == n0 && mu1.size() == n1, ErrorKind::shape,
          "semi-coupling weights do not match the plan");
  require(n0 > 0 && n1 > 0, ErrorKind::shape, "semi-coupling needs a non-empty plan");
  const auto r = row_sums(gamma);
  const auto c = col_sums(gamma);
  SemiCoupling s;
  s.gamma0 = Matrix(n0, n1);
  s.gamma1 = Matrix(n0, n1);
  for (std::size_t i = 0; i < n0; ++i) {
    if (r[i] > 0.0) {
      const double f = mu0[i] / r[i];
      for (std::size_t j = 0; j < n1; ++j) s.gamma0(i, j) = gamma(i, j) * f;
    } else {
      // pure destruction: all of mu0(i) goes to one column and receives nothing
      s.gamma0(i, i * n1 / n0) = mu0[i];
    }
  }
  for (std::size_t j = 0; j < n1; ++j) {
    if (c[j] > 0.0) {
      const double f = mu1[j] / c[j];
      for (std::size_t i = 0; i < n0; ++i) s.gamma1(i, j) = gamma(i, j) * f;
    } else {
      // pure creation: mu1(j) appears from nowhere, on a row that sends nothing here
      std::size_t i = j * n0 / n1;
      for (std::size_t k = 0; k < n0 && s.gamma0(i, j) > 0.0; ++k) i = (j * n0 / n1 + k) % n0;
      s.gamma1(i, j) = mu1[j];
    }
  }
  double total = 0.0;
  for (double v : s.gamma0.values()) total += v;
  s.support_threshold = 1e-300 * std::max(total, 1.0);
  return s;
}

double penalty_psi(double g, double nu, double lambda_branch) {
  require(lambda_branch > 0.0, ErrorKind::parameter, "branching rate must be positive");
  const double x = g / lambda_branch;
  const double r = std::hypot(1.0, x);
  // 1 - sqrt(1+x^2) = -x^2/(1+sqrt(1+x^2)) avoids cancellation near 0
  return nu * lambda_branch * (x * std::asinh(x) - x * x / (1.0 + r));
}

double penalty_psi_dual(double h, double nu, double lambda_branch) {
  require(lambda_branch > 0.0 && nu > 0.0, ErrorKind::parameter,
          "penalty parameters must be positive");
  const double y = h / nu;
  // cosh(y) - 1 = 2 sinh^2(y/2)
  const double s = std::sinh(0.5 * y);
  return nu * lambda_branch * 2.0 * s * s;
}

void CouplingParams::validate() const {
  require(delta > 0.0 && std::isfinite(delta), ErrorKind::config, "coupling delta must be > 0");
  require(oet.tol > 0.0 && oet.max_iter > 0, ErrorKind::config,
          "coupling tol and max_iter must be positive");
  require(oet.epsilon >= 0.0, ErrorKind::config, "entropic epsilon must be >= 0");
  require(threads >= 1, ErrorKind::config, "threads must be >= 1");
}

bool IntervalCoupling::all_converged() const {
  return std::all_of(batches.begin(), batches.end(), [](const auto& b) { return b.converged; });
}

IntervalCoupling couple_snapshots(const Snapshot& s0, const Snapshot& s1,
                                  const CouplingParams& params, Rng& rng) {
  params.validate();
  const Rng stream = rng.split(0x636f75706c65ULL);
  rng.uniform();  // advance so that consecutive intervals get distinct streams
  if (params.minibatch > 0 && params.minibatch < std::max(s0.size(), s1.size()))
    return minibatch_semi_coupling(s0, s1, params.minibatch, params, stream);
  IntervalCoupling out;
  std::vector<std::size_t> i0(s0.size()), i1(s1.size());
  std::iota(i0.begin(), i0.end(), std::size_t{0});
  std::iota(i1.begin(), i1.end(), std::size_t{0});
  out.batches.push_back(solve_batch(s0, s1, std::move(i0), std::move(i1), params));
  return out;
}

IntervalCoupling minibatch_semi_coupling(const Snapshot& s0, const Snapshot& s1,
                                         std::size_t batch_size, const CouplingParams& params,
                                         const Rng& rng) {
  params.validate();
  require(batch_size > 0, ErrorKind::parameter, "batch size must be positive");
  s0.validate();
  s1.validate();
  const std::size_t n = std::max(s0.size(), s1.size());
  const bool full = batch_size >= s0.size() && batch_size >= s1.size();
  const std::size_t n_batches =
      full ? 1 : (params.n_batches > 0 ? params.n_batches : (n + batch_size - 1) / batch_size);

  IntervalCoupling out;
  out.batches.resize(n_batches);
  auto work = [&](std::size_t b) {
    Rng r = rng.split(b);
    auto idx0 = subsample(s0.size(), batch_size, r);
    auto idx1 = subsample(s1.size(), batch_size, r);
    out.batches[b] = solve_batch(s0, s1, std::move(idx0), std::move(idx1), params);
  };
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(std::max(1u, params.threads), n_batches));
  if (workers <= 1) {
    for (std::size_t b = 0; b < n_batches; ++b) work(b);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        try {
          for (std::size_t b = w; b < n_batches; b += workers) work(b);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return out;
}

PairSampler::PairSampler(const SemiCoupling& semi) {
  IntervalCoupling c;
  BatchCoupling b;
  b.semi = semi;
  b.idx0.resize(semi.rows());
  b.idx1.resize(semi.cols());
  std::iota(b.idx0.begin(), b.idx0.end(), std::size_t{0});
  std::iota(b.idx1.begin(), b.idx1.end(), std::size_t{0});
  c.batches.push_back(std::move(b));
  *this = PairSampler(c);
}

PairSampler::PairSampler(const IntervalCoupling& coupling) {
  double acc = 0.0;
  for (const auto& b : coupling.batches) {
    const auto& s = b.semi;
    for (std::size_t i = 0; i < s.rows(); ++i)
      for (std::size_t j = 0; j < s.cols(); ++j) {
        if (!s.in_support(i, j)) continue;
        acc += s.gamma0(i, j);
        cumulative_.push_back(acc);
        entries_.push_back({b.idx0[i], b.idx1[j], 1.0, s.mass_ratio(i, j)});
      }
  }
  require(acc > 0.0, ErrorKind::numeric, "semi-coupling has no mass to sample from");
}

CouplingPair PairSampler::sample(Rng& rng) const {
  const double u = rng.uniform() * cumulative_.back();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  if (it == cumulative_.end()) --it;
  return entries_[static_cast<std::size_t>(it - cumulative_.begin())];
}

std::vector<CouplingPair> PairSampler::sample(std::size_t n, Rng& rng) const {
  std::vector<CouplingPair> out(n);
  for (auto& p : out) p = sample(rng);
  return out;
}

void write_coupling_csv(std::ostream& out, const std::vector<IntervalCoupling>& couplings) {
  out << "interval,batch,i,j,gamma0,gamma1\n";
  for (std::size_t k = 0; k < couplings.size(); ++k)
    for (std::size_t b = 0; b < couplings[k].batches.size(); ++b) {
      const auto& bc = couplings[k].batches[b];
      for (std::size_t i = 0; i < bc.semi.rows(); ++i)
        for (std::size_t j = 0; j < bc.semi.cols(); ++j) {
          const double g0 = bc.semi.gamma0(i, j), g1 = bc.semi.gamma1(i, j);
          if (g0 < 1e-12 && g1 < 1e-12) continue;
          out << k << ',' << b << ',' << bc.idx0[i] << ',' << bc.idx1[j] << ','
              << format_double(g0) << ',' << format_double(g1) << '\n';
        }
    }
}

void save_coupling_csv(const std::vector<IntervalCoupling>& couplings,
                       const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  write_coupling_csv(f, couplings);
  if (!f) fail(ErrorKind::io, "write failed for '" + path.string() + "'");
}

}  // namespace usb
