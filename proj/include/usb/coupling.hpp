#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "usb/data.hpp"
#include "usb/matrix.hpp"
#include "usb/rng.hpp"

namespace usb {

/// Diffusion nu, growth penalty delta and branching rate lambda, tied by
/// delta = sqrt(nu / (2 lambda)).
struct PenaltyParams {
  double nu = 0.0;
  double delta = 0.0;
  double lambda_branch = 0.0;

  static PenaltyParams from_nu_delta(double nu, double delta);
  static PenaltyParams from_nu_lambda(double nu, double lambda_branch);
  static PenaltyParams from_delta_lambda(double delta, double lambda_branch);
};

/// -2 ln cos(min(|x-y| / (2 delta), pi/2)); +inf once the angle reaches pi/2.
Matrix wfr_cost_matrix(const Matrix& x0, const Matrix& x1, double delta);

enum class OetDomain { automatic, standard, stabilized };

struct OetOptions {
  double epsilon = 0.0;  // <= 0 selects 0.01 * median finite cost
  std::size_t max_iter = 100000;
  double tol = 1e-9;     // sup-norm change of the log-scalings
  OetDomain domain = OetDomain::automatic;
  double relaxation = 0.0;  // over-relaxation factor in [1, 2); 0 adapts it
};

struct OetSolution {
  Matrix gamma;
  double objective = 0.0;              // <C,gamma> + KL(row||mu0) + KL(col||mu1)
  double regularized_objective = 0.0;  // objective + eps * sum(gamma ln gamma - gamma)
  double epsilon = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  bool stabilized = false;
  double last_change = 0.0;
};

double default_entropic_epsilon(const Matrix& cost);

/// Unbalanced entropic transport with KL marginal penalties (weight 1),
/// solved by generalized Sinkhorn scaling.
OetSolution solve_oet(std::span<const double> mu0, std::span<const double> mu1,
                      const Matrix& cost, const OetOptions& options = {});

/// OET objective terms evaluated at an arbitrary plan.
double oet_objective(std::span<const double> mu0, std::span<const double> mu1,
                     const Matrix& cost, const Matrix& gamma);
double oet_regularized_objective(std::span<const double> mu0, std::span<const double> mu1,
                                 const Matrix& cost, const Matrix& gamma, double epsilon);

struct SemiCoupling {
  Matrix gamma0;  // row sums equal mu0
  Matrix gamma1;  // column sums equal mu1
  double support_threshold = 0.0;

  std::size_t rows() const noexcept { return gamma0.rows(); }
  std::size_t cols() const noexcept { return gamma0.cols(); }
  bool in_support(std::size_t i, std::size_t j) const {
    return gamma0(i, j) > support_threshold;
  }
  /// gamma1/gamma0 clipped to [1e-8, 1e8].
  double mass_ratio(std::size_t i, std::size_t j) const;
};

inline constexpr double kMassRatioMin = 1e-8;
inline constexpr double kMassRatioMax = 1e8;

SemiCoupling semi_coupling_from_oet(const Matrix& gamma, std::span<const double> mu0,
                                    std::span<const double> mu1);

/// Psi_{nu,lambda}(g) = nu lambda Psi(g / lambda) with
/// Psi(x) = 1 - sqrt(1 + x^2) + x asinh(x).
double penalty_psi(double g, double nu, double lambda_branch);
/// Legendre dual nu lambda (cosh(h / nu) - 1).
double penalty_psi_dual(double h, double nu, double lambda_branch);

struct CouplingParams {
  double delta = 1.0;
  OetOptions oet;
  std::size_t minibatch = 0;  // 0 disables mini-batching
  std::size_t n_batches = 0;  // 0 picks ceil(max(n0, n1) / minibatch)
  unsigned threads = 1;

  void validate() const;
};

/// Semi-coupling over sub-clouds; idx0/idx1 map batch rows/cols to snapshot
/// points. Sub-cloud weights are rescaled to the full cloud's total mass.
struct BatchCoupling {
  std::vector<std::size_t> idx0;
  std::vector<std::size_t> idx1;
  SemiCoupling semi;
  double epsilon = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  double objective = 0.0;
};

struct IntervalCoupling {
  std::vector<BatchCoupling> batches;
  bool all_converged() const;
};

IntervalCoupling couple_snapshots(const Snapshot& s0, const Snapshot& s1,
                                  const CouplingParams& params, Rng& rng);

/// Independent uniform sub-cloud pairs, each solved separately. Batch b uses
/// rng.split(b), so the result does not depend on the thread count.
IntervalCoupling minibatch_semi_coupling(const Snapshot& s0, const Snapshot& s1,
                                         std::size_t batch_size, const CouplingParams& params,
                                         const Rng& rng);

struct CouplingPair {
  std::size_t i = 0;
  std::size_t j = 0;
  double m0 = 1.0;
  double m1 = 1.0;
};

/// Draws (i, j) proportionally to gamma0 with m0 = 1 and m1 = gamma1/gamma0.
class PairSampler {
 public:
  explicit PairSampler(const SemiCoupling& semi);
  explicit PairSampler(const IntervalCoupling& coupling);

  CouplingPair sample(Rng& rng) const;
  std::vector<CouplingPair> sample(std::size_t n, Rng& rng) const;
  double total_mass() const { return cumulative_.empty() ? 0.0 : cumulative_.back(); }

 private:
  std::vector<double> cumulative_;
  std::vector<CouplingPair> entries_;
};

/// Long-format dump `interval,batch,i,j,gamma0,gamma1`, entries below 1e-12 omitted.
void write_coupling_csv(std::ostream& out, const std::vector<IntervalCoupling>& couplings);
void save_coupling_csv(const std::vector<IntervalCoupling>& couplings,
                       const std::filesystem::path& path);

}  // namespace usb
