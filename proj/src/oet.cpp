#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "usb/coupling.hpp"
#include "usb/error.hpp"
#include "usb/kernels.hpp"

namespace usb {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Scalings are absorbed into the potentials once |ln a| exceeds this.
constexpr double kAbsorbAt = 30.0;
// max finite C/eps above which the kernel would underflow.
constexpr double kStandardDomainLimit = 200.0;

double kl_term(double p, double q) {
  if (p <= 0.0) return q;
  if (q <= 0.0) return kInf;
  return p * std::log(p / q) - p + q;
}

double log_sum_exp(const double* v, std::size_t n) {
  double mx = -kInf;
  for (std::size_t k = 0; k < n; ++k) mx = std::max(mx, v[k]);
  if (mx == -kInf) return -kInf;
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += std::exp(v[k] - mx);
  return mx + std::log(s);
}

void check_inputs(std::span<const double> mu0, std::span<const double> mu1, const Matrix& cost) {
  require(cost.rows() == mu0.size() && cost.cols() == mu1.size(), ErrorKind::shape,
          "OET cost must be n0 x n1");
  for (double m : mu0)
    require(std::isfinite(m) && m >= 0.0, ErrorKind::domain, "OET weights must be >= 0");
  for (double m : mu1)
    require(std::isfinite(m) && m >= 0.0, ErrorKind::domain, "OET weights must be >= 0");
  for (double c : cost.values())
    require(!std::isnan(c) && c != -kInf, ErrorKind::domain, "OET cost must not be NaN or -inf");
}

// Scaling iterations on gamma = diag(e^u a) K diag(e^v b) with the absorbed
// log-potentials u, v folded into the working kernel.
class Scaler {
 public:
  Scaler(std::span<const double> mu0, std::span<const double> mu1, const Matrix& cost,
         double eps, bool stabilized, double relaxation)
      : mu0_(mu0), mu1_(mu1), cost_(cost), eps_(eps), kappa_(1.0 / (1.0 + eps)),
        omega_(relaxation), stabilized_(stabilized), n0_(mu0.size()), n1_(mu1.size()),
        u_(n0_, 0.0), v_(n1_, 0.0), la_(n0_, 0.0), lb_(n1_, 0.0),
        a_(n0_, 1.0), b_(n1_, 1.0), live0_(n0_), live1_(n1_) {
    for (std::size_t i = 0; i < n0_; ++i) {
      bool any = false;
      for (std::size_t j = 0; j < n1_; ++j) any = any || (cost(i, j) < kInf && mu1[j] > 0.0);
      live0_[i] = any && mu0[i] > 0.0;
    }
    for (std::size_t j = 0; j < n1_; ++j) {
      bool any = false;
      for (std::size_t i = 0; i < n0_; ++i) any = any || (cost(i, j) < kInf && live0_[i]);
      live1_[j] = any && mu1[j] > 0.0;
    }
    rebuild_kernel();
  }

  // One a-update, one b-update and the gauge translation; returns the sup
  // change of the log-scalings.
  double iterate() {
    const std::vector<double> prev_la = la_, prev_lb = lb_;
    bool fallback = false;

    std::vector<double> kb(n0_, 0.0);
    multiply(b_, kb);
    for (std::size_t i = 0; i < n0_; ++i) {
      if (!live0_[i]) continue;
      if (kb[i] > 1e-280 && std::isfinite(kb[i])) {
        const double target = kappa_ * (std::log(mu0_[i]) - std::log(kb[i])) - (1.0 - kappa_) * u_[i];
        la_[i] += omega_ * (target - la_[i]);
      } else {
        la_[i] = row_log_update(i) - u_[i];
        fallback = true;
      }
      a_[i] = std::exp(la_[i]);
    }
    std::vector<double> kta(n1_, 0.0);
    multiply_transposed(a_, kta);
    for (std::size_t j = 0; j < n1_; ++j) {
      if (!live1_[j]) continue;
      if (kta[j] > 1e-280 && std::isfinite(kta[j])) {
        const double target = kappa_ * (std::log(mu1_[j]) - std::log(kta[j])) - (1.0 - kappa_) * v_[j];
        lb_[j] += omega_ * (target - lb_[j]);
      } else {
        lb_[j] = col_log_update(j) - v_[j];
        fallback = true;
      }
      b_[j] = std::exp(lb_[j]);
    }
    translate();

    double change = 0.0, largest = 0.0;
    for (std::size_t i = 0; i < n0_; ++i)
      if (live0_[i]) {
        change = std::max(change, std::abs(la_[i] - prev_la[i]));
        largest = std::max(largest, std::abs(la_[i]));
      }
    for (std::size_t j = 0; j < n1_; ++j)
      if (live1_[j]) {
        change = std::max(change, std::abs(lb_[j] - prev_lb[j]));
        largest = std::max(largest, std::abs(lb_[j]));
      }
    if (stabilized_) {
      if (fallback || largest > kAbsorbAt) absorb();
    } else if (fallback || largest > 600.0) {
      overflowed_ = true;
    }
    return change;
  }

  // Warm start at a new entropic parameter, keeping the potentials
  // eps * (u + ln a) fixed in cost units.
  void set_epsilon(double eps) {
    for (std::size_t i = 0; i < n0_; ++i) u_[i] = (u_[i] + la_[i]) * eps_ / eps;
    for (std::size_t j = 0; j < n1_; ++j) v_[j] = (v_[j] + lb_[j]) * eps_ / eps;
    std::fill(la_.begin(), la_.end(), 0.0);
    std::fill(lb_.begin(), lb_.end(), 0.0);
    eps_ = eps;
    kappa_ = 1.0 / (1.0 + eps);
    rebuild_kernel();
  }

  void set_relaxation(double w) { omega_ = w; }
  bool overflowed() const { return overflowed_; }

  Matrix plan() const {
    Matrix g(n0_, n1_);
    for (std::size_t i = 0; i < n0_; ++i) {
      if (!live0_[i]) continue;
      for (std::size_t j = 0; j < n1_; ++j) {
        if (!live1_[j] || !(cost_(i, j) < kInf)) continue;
        g(i, j) = std::exp(u_[i] + la_[i] + v_[j] + lb_[j] - cost_(i, j) / eps_);
      }
    }
    return g;
  }

 private:
  void multiply(const std::vector<double>& x, std::vector<double>& out) const {
    for (std::size_t i = 0; i < n0_; ++i)
      out[i] = kernels::dot(kernel_.data() + i * n1_, x.data(), n1_);
  }

  void multiply_transposed(const std::vector<double>& x, std::vector<double>& out) const {
    for (std::size_t i = 0; i < n0_; ++i)
      if (x[i] != 0.0) kernels::axpy(x[i], kernel_.data() + i * n1_, out.data(), n1_);
  }

  // The plan is invariant under (ln A + t, ln B - t) but the scaling updates
  // damp that direction only by a factor (1+eps)^-2 per sweep. Move straight
  // to the optimal t, which maximizes the dual along the direction.
  void translate() {
    std::vector<double> p0, p1;
    for (std::size_t i = 0; i < n0_; ++i)
      if (live0_[i]) p0.push_back(std::log(mu0_[i]) - eps_ * (u_[i] + la_[i]));
    for (std::size_t j = 0; j < n1_; ++j)
      if (live1_[j]) p1.push_back(std::log(mu1_[j]) - eps_ * (v_[j] + lb_[j]));
    if (p0.empty() || p1.empty()) return;
    const double t =
        0.5 * (log_sum_exp(p0.data(), p0.size()) - log_sum_exp(p1.data(), p1.size())) / eps_;
    if (!std::isfinite(t)) return;
    for (std::size_t i = 0; i < n0_; ++i)
      if (live0_[i]) a_[i] = std::exp(la_[i] += t);
    for (std::size_t j = 0; j < n1_; ++j)
      if (live1_[j]) b_[j] = std::exp(lb_[j] -= t);
  }

  // Exact log-domain update: ln A_i = kappa (ln mu0_i - LSE_j(ln B_j - C_ij/eps)).
  double row_log_update(std::size_t i) const {
    std::vector<double> t(n1_, -kInf);
    for (std::size_t j = 0; j < n1_; ++j)
      if (live1_[j] && cost_(i, j) < kInf) t[j] = v_[j] + lb_[j] - cost_(i, j) / eps_;
    return kappa_ * (std::log(mu0_[i]) - log_sum_exp(t.data(), n1_));
  }
  double col_log_update(std::size_t j) const {
    std::vector<double> t(n0_, -kInf);
    for (std::size_t i = 0; i < n0_; ++i)
      if (live0_[i] && cost_(i, j) < kInf) t[i] = u_[i] + la_[i] - cost_(i, j) / eps_;
    return kappa_ * (std::log(mu1_[j]) - log_sum_exp(t.data(), n0_));
  }

  void absorb() {
    for (std::size_t i = 0; i < n0_; ++i) u_[i] += la_[i];
    for (std::size_t j = 0; j < n1_; ++j) v_[j] += lb_[j];
    std::fill(la_.begin(), la_.end(), 0.0);
    std::fill(lb_.begin(), lb_.end(), 0.0);
    rebuild_kernel();
  }

  void rebuild_kernel() {
    for (std::size_t i = 0; i < n0_; ++i) a_[i] = live0_[i] ? std::exp(la_[i]) : 0.0;
    for (std::size_t j = 0; j < n1_; ++j) b_[j] = live1_[j] ? std::exp(lb_[j]) : 0.0;
    auto entry = [&](std::size_t i, std::size_t j) {
      const double c = cost_(i, j);
      return (live0_[i] && live1_[j] && c < kInf) ? std::exp(u_[i] + v_[j] - c / eps_) : 0.0;
    };
    kernel_ = Matrix(n0_, n1_);
    for (std::size_t i = 0; i < n0_; ++i)
      for (std::size_t j = 0; j < n1_; ++j) kernel_(i, j) = entry(i, j);
  }

  std::span<const double> mu0_, mu1_;
  const Matrix& cost_;
  double eps_, kappa_, omega_;
  bool stabilized_;
  std::size_t n0_, n1_;
  std::vector<double> u_, v_, la_, lb_, a_, b_;
  std::vector<char> live0_, live1_;
  Matrix kernel_;
  bool overflowed_ = false;
};

}  // namespace

double default_entropic_epsilon(const Matrix& cost) {
  std::vector<double> finite;
  finite.reserve(cost.size());
  for (double c : cost.values())
    if (std::isfinite(c)) finite.push_back(c);
  if (finite.empty()) return 0.01;
  const auto mid = finite.begin() + static_cast<std::ptrdiff_t>(finite.size() / 2);
  std::nth_element(finite.begin(), mid, finite.end());
  double median = *mid;
  if (finite.size() % 2 == 0) {
    const double lower = *std::max_element(finite.begin(), mid);
    median = 0.5 * (median + lower);
  }
  return median > 0.0 ? 0.01 * median : 0.01;
}

double oet_objective(std::span<const double> mu0, std::span<const double> mu1,
                     const Matrix& cost, const Matrix& gamma) {
  check_inputs(mu0, mu1, cost);
  require(gamma.rows() == cost.rows() && gamma.cols() == cost.cols(), ErrorKind::shape,
          "plan and cost differ in shape");
  double transport = 0.0;
  for (std::size_t k = 0; k < gamma.size(); ++k) {
    const double g = gamma.values()[k];
    if (g > 0.0) transport += g * cost.values()[k];
  }
  const auto r = row_sums(gamma);
  const auto c = col_sums(gamma);
  double kl = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) kl += kl_term(r[i], mu0[i]);
  for (std::size_t j = 0; j < c.size(); ++j) kl += kl_term(c[j], mu1[j]);
  return transport + kl;
}

double oet_regularized_objective(std::span<const double> mu0, std::span<const double> mu1,
                                 const Matrix& cost, const Matrix& gamma, double epsilon) {
  double ent = 0.0;
  for (double g : gamma.values())
    if (g > 0.0) ent += g * std::log(g) - g;
  return oet_objective(mu0, mu1, cost, gamma) + epsilon * ent;
}

OetSolution solve_oet(std::span<const double> mu0, std::span<const double> mu1,
                      const Matrix& cost, const OetOptions& options) {
  check_inputs(mu0, mu1, cost);
  require(options.tol > 0.0 && options.max_iter > 0, ErrorKind::parameter,
          "OET needs tol > 0 and max_iter > 0");
  require(options.relaxation == 0.0 || (options.relaxation >= 1.0 && options.relaxation < 2.0),
          ErrorKind::parameter, "OET relaxation must be 0 (adaptive) or lie in [1, 2)");
  OetSolution sol;
  sol.epsilon = options.epsilon > 0.0 ? options.epsilon : default_entropic_epsilon(cost);

  double max_finite = 0.0;
  bool any_finite = false;
  for (double c : cost.values())
    if (std::isfinite(c)) {
      any_finite = true;
      max_finite = std::max(max_finite, std::abs(c));
    }
  if (!any_finite || mu0.empty() || mu1.empty()) {
    sol.gamma = Matrix(mu0.size(), mu1.size());
    sol.objective = sum(mu0) + sum(mu1);
    sol.regularized_objective = sol.objective;
    sol.converged = true;
    return sol;
  }

  bool stabilized = options.domain == OetDomain::stabilized ||
                    (options.domain == OetDomain::automatic &&
                     max_finite / sol.epsilon > kStandardDomainLimit);
  const bool adaptive = options.relaxation == 0.0;
  for (int attempt = 0; attempt < 2; ++attempt) {
    // In the stabilized domain, anneal from a large entropic parameter down to
    // the target; each coarse stage is solved loosely and warm-starts the next.
    std::vector<double> schedule;
    if (stabilized)
      for (double e = max_finite; e > 4.0 * sol.epsilon; e *= 0.25) schedule.push_back(e);
    std::optional<Scaler> scaler;
    scaler.emplace(mu0, mu1, cost, schedule.empty() ? sol.epsilon : schedule.front(), stabilized,
                   1.0);
    sol.converged = false;
    sol.iterations = 0;
    for (std::size_t stage = 0; stage < schedule.size(); ++stage) {
      if (stage > 0) scaler->set_epsilon(schedule[stage]);
      for (std::size_t it = 0; it < 1000 && sol.iterations < options.max_iter; ++it) {
        ++sol.iterations;
        if (scaler->iterate() < 1e-4) break;
      }
    }
    if (!schedule.empty()) scaler->set_epsilon(sol.epsilon);
    if (!adaptive) scaler->set_relaxation(options.relaxation);

    // Adaptive over-relaxation: estimate the plain contraction rate theta over
    // a probe window, then use omega = 2 / (1 + sqrt(1 - theta)). A snapshot
    // taken at the switch is restored with a smaller omega whenever progress
    // degrades.
    enum class Phase { probe, relaxed, plain } phase = adaptive ? Phase::probe : Phase::plain;
    std::vector<double> history;
    std::optional<Scaler> backup;
    double omega = 1.0, checkpoint = 0.0, backup_change = 0.0;
    std::size_t since_checkpoint = 0;
    auto back_off = [&] {
      scaler.reset();
      scaler.emplace(*backup);
      omega = 1.0 + 0.5 * (omega - 1.0);
      if (omega < 1.05) omega = 1.0, phase = Phase::plain;
      scaler->set_relaxation(omega);
      checkpoint = backup_change;
      since_checkpoint = 0;
    };
    while (sol.iterations < options.max_iter) {
      sol.last_change = scaler->iterate();
      ++sol.iterations;
      const bool broken = scaler->overflowed() || !std::isfinite(sol.last_change);
      if (phase == Phase::relaxed) {
        ++since_checkpoint;
        if (broken || sol.last_change > 100.0 * checkpoint) {
          back_off();
          continue;
        }
        if (since_checkpoint == 2000) {
          if (!(sol.last_change < checkpoint)) {
            back_off();
            continue;
          }
          checkpoint = sol.last_change;
          since_checkpoint = 0;
        }
      }
      if (broken) break;
      if (sol.last_change < options.tol) {
        sol.converged = true;
        break;
      }
      if (phase == Phase::probe) {
        history.push_back(sol.last_change);
        if (history.size() == 200) {
          const double theta = std::pow(history[199] / history[99], 0.01);
          omega = theta < 1.0 ? std::min(1.8, 2.0 / (1.0 + std::sqrt(1.0 - theta))) : 1.0;
          history.clear();  // no clear geometric rate yet: probe again
          if (omega > 1.05) {
            backup.emplace(*scaler);
            backup_change = checkpoint = sol.last_change;
            scaler->set_relaxation(omega);
            since_checkpoint = 0;
            phase = Phase::relaxed;
          }
        }
      }
    }
    if ((scaler->overflowed() || !std::isfinite(sol.last_change)) && !stabilized) {
      stabilized = true;  // the plain kernel left floating-point range; retry
      continue;
    }
    sol.gamma = scaler->plan();
    sol.stabilized = stabilized;
    break;
  }
  require(sol.gamma.all_finite(), ErrorKind::numeric, "OET produced a non-finite plan");
  sol.objective = oet_objective(mu0, mu1, cost, sol.gamma);
  sol.regularized_objective =
      oet_regularized_objective(mu0, mu1, cost, sol.gamma, sol.epsilon);
  return sol;
}

}  // namespace usb
