// End-to-end acceptance suite: one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "usb/bridge.hpp"
#include "usb/coupling.hpp"
#include "usb/eval.hpp"
#include "usb/generators.hpp"
#include "usb/inference.hpp"
#include "usb/mlp.hpp"
#include "usb/training.hpp"

using namespace usb;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
int failures = 0;

void report(int id, const char* name, bool ok, const std::string& detail, double seconds) {
  std::printf("%s %2d %-28s %s (%.1f s)\n", ok ? "PASS" : "FAIL", id, name, detail.c_str(), seconds);
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

oracle::Grid to_grid(const Matrix& m) {
  oracle::Grid g(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) g[i][j] = m(i, j);
  return g;
}

std::vector<double> random_vec(Rng& rng, std::size_t d) {
  std::vector<double> v(d);
  for (double& x : v) x = rng.normal();
  return v;
}

Matrix random_points(Rng& rng, std::size_t n, std::size_t d) {
  Matrix m(n, d);
  for (double& v : m.values()) v = rng.normal();
  return m;
}

double marginal_error(const SemiCoupling& s, std::span<const double> mu0, std::span<const double> mu1) {
  const auto r = row_sums(s.gamma0);
  const auto c = col_sums(s.gamma1);
  double worst = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) worst = std::max(worst, std::abs(r[i] - mu0[i]));
  for (std::size_t j = 0; j < c.size(); ++j) worst = std::max(worst, std::abs(c[j] - mu1[j]));
  return worst;
}

void oet_oracle() {
  Timer timer;
  Rng rng(1);
  double worst = 0.0;
  bool converged = true;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n0 = 1 + rng.index(3), n1 = 1 + rng.index(3);
    std::vector<double> mu0(n0), mu1(n1);
    for (double& v : mu0) v = rng.uniform(0.2, 2.0);
    for (double& v : mu1) v = rng.uniform(0.2, 2.0);
    Matrix cost(n0, n1);
    for (double& v : cost.values()) v = rng.uniform() < 0.1 ? kInf : rng.uniform(0.0, 3.0);
    const auto sol = solve_oet(mu0, mu1, cost);
    converged = converged && sol.converged;
    const auto g = oracle::oet_coordinate_descent(mu0, mu1, to_grid(cost), sol.epsilon);
    worst = std::max(worst, std::abs(sol.regularized_objective -
                                     oracle::oet_value(mu0, mu1, to_grid(cost), g, sol.epsilon)));
  }
  const double s = timer.seconds();
  report(1, "oet oracle equivalence", converged && worst < 1e-4 && s < 60,
         fmt("200 instances, worst |diff| %.2e (< 1e-4)", worst), s);
}

double marginal_exactness(const std::vector<IntervalCoupling>& sim_gene, const TimeSeriesDataset& ds) {
  Rng rng(2);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n0 = 1 + rng.index(30), n1 = 1 + rng.index(30);
    const auto x0 = random_points(rng, n0, 2), x1 = random_points(rng, n1, 2);
    std::vector<double> mu0(n0), mu1(n1);
    for (double& v : mu0) v = rng.uniform(0.1, 3.0);
    for (double& v : mu1) v = rng.uniform(0.1, 3.0);
    const auto sol = solve_oet(mu0, mu1, wfr_cost_matrix(x0, x1, rng.uniform(0.2, 3.0)));
    worst = std::max(worst, marginal_error(semi_coupling_from_oet(sol.gamma, mu0, mu1), mu0, mu1));
  }
  for (std::size_t k = 0; k < sim_gene.size(); ++k)
    for (const auto& b : sim_gene[k].batches) {
      std::vector<double> mu0, mu1;
      for (std::size_t i : b.idx0) mu0.push_back(ds.snapshots[k].weights[i]);
      for (std::size_t j : b.idx1) mu1.push_back(ds.snapshots[k + 1].weights[j]);
      worst = std::max(worst, marginal_error(b.semi, mu0, mu1));
    }
  return worst;
}

void balanced_limit() {
  Timer timer;
  Rng rng(3);
  const auto x0 = random_points(rng, 10, 2), x1 = random_points(rng, 10, 2);
  const std::vector<double> mu(10, 0.1);
  const auto sol = solve_oet(mu, mu, wfr_cost_matrix(x0, x1, 100.0));
  const auto semi = semi_coupling_from_oet(sol.gamma, mu, mu);
  double worst = 0.0;
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = 0; j < 10; ++j)
      if (semi.gamma0(i, j) > 1e-12) worst = std::max(worst, std::abs(semi.mass_ratio(i, j) - 1.0));
  report(3, "balanced limit", worst < 1e-3, fmt("max |ratio - 1| %.2e (< 1e-3)", worst), timer.seconds());
}

void gradient_check() {
  Timer timer;
  const MlpSpec spec{.input_dim = 3, .hidden_width = 8, .depth = 3, .output_dim = 2};
  const double h = 1e-5;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(500 + seed);
    Mlp net = Mlp::initialized(spec, rng, false);
    const Matrix x = random_points(rng, 5, 3);
    std::vector<double> t(5);
    for (double& v : t) v = rng.uniform();
    const Matrix w = random_points(rng, 5, 2);
    auto loss = [&](std::span<const double> p) {
      const Matrix y = mlp_forward(spec, p, x, t);
      double s = 0.0;
      for (std::size_t i = 0; i < y.values().size(); ++i) s += w.values()[i] * y.values()[i];
      return s;
    };
    MlpTape tape;
    net.forward(x, t, &tape);
    const auto g = net.backward(tape, w);
    auto p = net.params();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double keep = p[i];
      p[i] = keep + h;
      const double lp = loss(p);
      p[i] = keep - h;
      const double lm = loss(p);
      p[i] = keep;
      const double fd = (lp - lm) / (2 * h);
      worst = std::max(worst, std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), 1e-6}));
    }
  }
  report(4, "mlp gradient check", worst < 1e-4, fmt("20 seeds, worst relative error %.2e (< 1e-4)", worst),
         timer.seconds());
}

void conditional_targets() {
  Timer timer;
  Rng rng(5);
  double worst = 0.0, worst_eps = 0.0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t d = 3;
    const double nu = rng.uniform(0.05, 2.0), t = rng.uniform(0.01, 0.99);
    const double m0 = rng.uniform(0.2, 3.0), m1 = rng.uniform(0.2, 3.0);
    const auto x0 = random_vec(rng, d), x1 = random_vec(rng, d), x = random_vec(rng, d);
    // generic measure path assembled by hand
    CgmpSpec spec;
    spec.dim = d;
    spec.eta = [&](double s, std::span<double> out) {
      for (std::size_t c = 0; c < d; ++c) out[c] = (1 - s) * x0[c] + s * x1[c];
    };
    spec.eta_dot = [&](double, std::span<double> out) {
      for (std::size_t c = 0; c < d; ++c) out[c] = x1[c] - x0[c];
    };
    spec.sigma = [&](double s) { return nu * std::sqrt(s * (1 - s)); };
    spec.sigma_dot = [&](double s) { return nu * (1 - 2 * s) / (2 * std::sqrt(s * (1 - s))); };
    spec.mass = [&](double s) { return std::pow(m0, 1 - s) * std::pow(m1, s); };
    spec.log_mass_dot = [&](double) { return std::log(m1 / m0); };
    for (const auto& tg : {cgmp_targets(spec, t, x), cgmp_targets(pb_bridge_spec(x0, x1, m0, m1, nu), t, x)}) {
      worst = std::max(worst, std::abs(tg.g - std::log(m1 / m0)));
      for (std::size_t c = 0; c < d; ++c) {
        const double eta = (1 - t) * x0[c] + t * x1[c];
        const double u = (1 - 2 * t) / (2 * t * (1 - t)) * (x[c] - eta) + (x1[c] - x0[c]);
        const double s = (eta - x[c]) / (nu * nu * t * (1 - t));
        worst = std::max(worst, std::abs(tg.u[c] - u) / (1 + std::abs(u)));
        worst = std::max(worst, std::abs(tg.s[c] - s) / (1 + std::abs(s)));
      }
    }
    const auto b = sample_pb_bridge(x0, x1, m0, m1, nu, t, rng);
    const auto tb = cgmp_targets(pb_bridge_spec(x0, x1, m0, m1, nu), t, b.x);
    for (std::size_t c = 0; c < d; ++c)
      worst_eps = std::max(worst_eps, std::abs(score_weight(t, nu) * tb.s[c] + b.eps_target[c]) /
                                          (1 + std::abs(b.eps_target[c])));
  }
  report(5, "conditional target identities", worst < 1e-10 && worst_eps < 1e-10,
         fmt("targets %.2e, lambda s + eps %.2e (< 1e-10)", worst, worst_eps), timer.seconds());
}

void marginal_residual() {
  Timer timer;
  Rng rng(6);
  const double nu = 0.8;
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    struct Cond {
      std::vector<double> x0, x1;
      double m1, q;
    };
    const std::vector<Cond> cs{{random_vec(rng, 2), random_vec(rng, 2), rng.uniform(0.3, 3.0), 0.35},
                               {random_vec(rng, 2), random_vec(rng, 2), rng.uniform(0.3, 3.0), 0.65}};
    auto density = [&](double t, const std::vector<double>& x) {
      double rho = 0.0;
      const double var = nu * nu * t * (1 - t);
      for (const auto& c : cs) {
        double sq = 0.0;
        for (int j = 0; j < 2; ++j) {
          const double e = (1 - t) * c.x0[j] + t * c.x1[j];
          sq += (x[j] - e) * (x[j] - e);
        }
        rho += c.q * std::pow(c.m1, t) * std::exp(-0.5 * sq / var) / (2 * std::numbers::pi * var);
      }
      return rho;
    };
    std::vector<MixtureCondition> conds;
    for (const auto& c : cs) conds.push_back({c.q, pb_bridge_spec(c.x0, c.x1, 1.0, c.m1, nu)});
    const double t = rng.uniform(0.1, 0.9);
    const auto& c0 = cs[rng.index(2)];
    std::vector<double> x(2);
    for (int j = 0; j < 2; ++j) x[j] = (1 - t) * c0.x0[j] + t * c0.x1[j] + nu * std::sqrt(t * (1 - t)) * rng.normal();
    const double h = 1e-4;
    const double drho = (density(t + h, x) - density(t - h, x)) / (2 * h);
    double div = 0.0;
    for (int j = 0; j < 2; ++j) {
      auto xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      div += (marginal_targets_oracle(conds, t, xp).u[j] * density(t, xp) -
              marginal_targets_oracle(conds, t, xm).u[j] * density(t, xm)) / (2 * h);
    }
    const auto m = marginal_targets_oracle(conds, t, x);
    const double source = m.g * density(t, x);
    const double scale = std::abs(drho) + std::abs(div) + std::abs(source);
    worst = std::max(worst, std::abs(drho + div - source) / scale);
  }
  report(6, "marginalization residual", worst < 1e-4, fmt("worst relative residual %.2e (< 1e-4)", worst),
         timer.seconds());
}

void branching_mean() {
  Timer timer;
  ConstantDynamics dyn({0.0, 0.0}, 0.5, {0.0, 0.0}, 0.1);
  Rng rng(7);
  BranchingOptions opt;
  opt.record_paths = false;
  const std::size_t roots = 10000;
  const auto r = branching_inference(dyn, Matrix(roots, 2), 0.0, 1.0, opt, rng);
  const double mean = static_cast<double>(r.survivors.size()) / roots;
  const double rel = std::abs(mean / std::exp(0.5) - 1.0);
  const double s = timer.seconds();
  report(7, "branching mean", rel < 0.05 && s < 60, fmt("mean %.4f vs e^0.5 = %.4f, rel %.3f (< 0.05)", mean, std::exp(0.5), rel), s);
}

// ---- sim-gene runs -------------------------------------------------------

TrainConfig sim_gene_config(double delta, bool product, std::size_t steps) {
  TrainConfig c;
  c.delta = delta;
  c.nu = 0.001;
  c.epochs = steps;
  c.batch_per_pair = 256;
  c.learning_rate = 1e-3;
  c.schedule = LrSchedule::cosine;
  c.hidden_width = 64;
  c.depth = 4;
  c.seed = 0;
  c.product_coupling = product;
  return c;
}

struct Arm {
  TrainResult trained;
  EvalReport report;
  double seconds = 0.0;
};

Arm run_arm(const TimeSeriesDataset& ds, const TrainConfig& cfg) {
  Timer timer;
  Arm a;
  a.trained = train(ds, cfg);
  a.report = evaluate_model(a.trained.model, ds, EvalOptions{});
  a.seconds = timer.seconds();
  std::printf("     arm delta=%.2f%s: mean W1 %.4f, mean RME %.4f (%.1f s)\n", cfg.delta,
              cfg.product_coupling ? " product" : "", a.report.mean_w1, a.report.mean_rme, a.seconds);
  std::fflush(stdout);
  return a;
}

}  // namespace

int main() {
  oet_oracle();
  balanced_limit();
  gradient_check();
  conditional_targets();
  marginal_residual();
  branching_mean();

  const auto ds = gen_sim_gene(SimGeneParams::defaults(), 7);
  constexpr std::size_t kSteps = 4000;

  const Arm full = run_arm(ds, sim_gene_config(1.3, false, kSteps));
  {
    Timer timer;
    const double worst = marginal_exactness(full.trained.couplings, ds);
    report(2, "semi-coupling marginals", worst < 1e-10,
           fmt("random and sim-gene couplings, worst %.2e (< 1e-10)", worst), timer.seconds());
  }

  const Arm ablation = run_arm(ds, sim_gene_config(1.3, true, kSteps));
  {
    const auto& f = full.report;
    const auto& p = ablation.report;
    const double s = full.seconds + ablation.seconds;
    const bool ok = f.mean_w1 <= 0.05 && f.mean_rme <= 0.02 && f.mean_w1 < p.mean_w1 &&
                    f.mean_rme < p.mean_rme && s <= 900;
    report(8, "sim-gene end to end", ok,
           fmt("W1 %.4f (<= 0.05, ablation %.4f), RME %.4f (<= 0.02, ablation %.4f)", f.mean_w1, p.mean_w1,
               f.mean_rme, p.mean_rme),
           s);
  }

  {
    Timer timer;
    SimGeneParams params = SimGeneParams::defaults();
    const Snapshot& probe = ds.snapshots.back();
    std::vector<double> g;
    for (std::size_t i = 0; i < probe.size(); ++i)
      g.push_back(params.growth_scale * probe.points(i, 1) * probe.points(i, 1) /
                  (1 + probe.points(i, 1) * probe.points(i, 1)));
    const auto r = growth_correlation(full.trained.model, probe.points, double(ds.intervals()), g);
    report(9, "growth recovery", r && *r >= 0.9, fmt("Pearson %.4f (>= 0.9)", r ? *r : 0.0), timer.seconds());
  }

  {
    Timer timer;
    const ModelDynamics dyn(full.trained.model);
    const std::size_t roots = 10000;
    Rng rng(10);
    const Snapshot& s0 = ds.snapshots.front();
    Matrix start(roots, ds.dim());
    for (std::size_t i = 0; i < roots; ++i) {
      const std::size_t k = rng.index(s0.size());
      for (std::size_t c = 0; c < ds.dim(); ++c) start(i, c) = s0.points(k, c);
    }
    const double t1 = double(ds.intervals());
    Rng rc = rng.split(1), rb = rng.split(2);
    const auto cont = continuous_inference(dyn, start, std::vector<double>(roots, 0.0), 0.0, {{t1}}, 0.01, rc);
    const double mass = cont.clouds.back().total_mass();
    BranchingOptions opt;
    opt.record_paths = false;
    const auto br = branching_inference(dyn, start, 0.0, t1, opt, rb);
    const double pop = double(br.survivors.size());
    const double rel = std::abs(pop / mass - 1.0);
    report(10, "inference mode equivalence", !br.truncated && rel < 0.05,
           fmt("continuous mass %.1f, branching population %.0f, rel %.4f (< 0.05)", mass, pop, rel),
           timer.seconds());
  }

  {
    const Arm lo = run_arm(ds, sim_gene_config(0.5, false, kSteps));
    const Arm hi = run_arm(ds, sim_gene_config(2.5, false, kSteps));
    const double w = full.report.mean_w1;
    report(11, "delta sensitivity", w <= lo.report.mean_w1 && w <= hi.report.mean_w1,
           fmt("W1 delta=0.5 %.4f, 1.3 %.4f, 2.5 %.4f", lo.report.mean_w1, w, hi.report.mean_w1),
           lo.seconds + hi.seconds);
  }

  {
    Timer timer;
    const auto f = hold_one_out_all(ds, sim_gene_config(1.3, false, kSteps), EvalOptions{});
    const auto p = hold_one_out_all(ds, sim_gene_config(1.3, true, kSteps), EvalOptions{});
    bool ok = f.w1.size() == ds.snapshots.size() - 2 && p.w1.size() == f.w1.size();
    std::string values;
    for (std::size_t i = 0; i < f.w1.size() && ok; ++i) {
      ok = ok && std::isfinite(f.w1[i]) && f.w1[i] < p.w1[i];
      values += fmt("%s%.4f/%.4f", i ? " " : "", f.w1[i], p.w1[i]);
    }
    ok = ok && std::isfinite(f.mean_w1) && f.mean_w1 < p.mean_w1;
    report(12, "hold-one-out", ok,
           fmt("W1 full/ablation %s, mean %.4f vs %.4f", values.c_str(), f.mean_w1, p.mean_w1), timer.seconds());
  }

  std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
