#include "usb/generators.hpp"

#include <cmath>
#include <string>

#include "usb/error.hpp"
#include "usb/rng.hpp"

namespace usb {

using Vec3 = SimGeneParams::Vec3;

SimGeneParams SimGeneParams::defaults() {
  SimGeneParams p;
  const Vec3 steady = sim_gene_steady_state(p, {3.0, 0.1, 0.0});
  p.populations = {{steady, 200, 0.05}, {{0.3, 0.6, 0.0}, 200, 0.05}};
  return p;
}

void SimGeneParams::validate() const {
  auto nonneg = [](const Vec3& v) { return v[0] >= 0 && v[1] >= 0 && v[2] >= 0; };
  require(nonneg(alpha) && nonneg(gamma) && nonneg(degradation) && nonneg(noise) &&
              beta >= 0 && growth_scale >= 0 && division_noise >= 0,
          ErrorKind::parameter, "sim-gene rates must be nonnegative");
  require(dt > 0, ErrorKind::parameter, "sim-gene dt must be positive");
  require(record_times.size() >= 2, ErrorKind::parameter, "sim-gene needs >= 2 record times");
  for (std::size_t i = 0; i < record_times.size(); ++i) {
    require(record_times[i] >= 0, ErrorKind::parameter, "record times must be >= 0");
    if (i > 0)
      require(record_times[i] > record_times[i - 1], ErrorKind::parameter,
              "record times must increase");
  }
  require(!populations.empty(), ErrorKind::parameter, "sim-gene needs an initial population");
}

Metadata SimGeneParams::describe() const {
  auto v3 = [](const Vec3& v) {
    return format_double(v[0]) + " " + format_double(v[1]) + " " + format_double(v[2]);
  };
  Metadata m{{"generator", "sim-gene"},
             {"alpha", v3(alpha)},
             {"beta", format_double(beta)},
             {"gamma", v3(gamma)},
             {"degradation", v3(degradation)},
             {"noise", v3(noise)},
             {"growth_scale", format_double(growth_scale)},
             {"division_noise", format_double(division_noise)},
             {"dt", format_double(dt)}};
  for (std::size_t i = 0; i < populations.size(); ++i)
    m.emplace_back("population" + std::to_string(i),
                   v3(populations[i].center) + " n=" + std::to_string(populations[i].count) +
                       " spread=" + format_double(populations[i].spread));
  return m;
}

Vec3 sim_gene_drift(const SimGeneParams& p, const Vec3& x) {
  const double x1 = x[0] * x[0], x2 = x[1] * x[1], x3 = x[2] * x[2];
  const auto& a = p.alpha;
  const auto& g = p.gamma;
  const auto& d = p.degradation;
  return {
      (a[0] * x1 + p.beta) / (1 + a[0] * x1 + g[1] * x2 + g[2] * x3 + p.beta) - d[0] * x[0],
      (a[1] * x2 + p.beta) / (1 + g[0] * x1 + a[1] * x2 + g[2] * x3 + p.beta) - d[1] * x[1],
      (a[2] * x3) / (1 + a[2] * x3) - d[2] * x[2],
  };
}

double sim_gene_growth_rate(const SimGeneParams& p, double x2) {
  return p.growth_scale * x2 * x2 / (1.0 + x2 * x2);
}

Vec3 sim_gene_steady_state(const SimGeneParams& p, Vec3 guess) {
  // Damped fixed-point flow; the attracting states of interest are stable.
  for (int it = 0; it < 2'000'000; ++it) {
    const Vec3 f = sim_gene_drift(p, guess);
    double change = 0.0;
    for (int i = 0; i < 3; ++i) {
      guess[i] += 0.05 * f[i];
      change = std::max(change, std::abs(f[i]));
    }
    if (change < 1e-15) break;
  }
  return guess;
}

TimeSeriesDataset gen_sim_gene(const SimGeneParams& params, std::uint64_t seed) {
  params.validate();
  Rng rng(seed);
  std::vector<Vec3> cells;
  for (const auto& pop : params.populations)
    for (std::size_t i = 0; i < pop.count; ++i) {
      Vec3 c = pop.center;
      for (double& v : c) v += pop.spread * rng.normal();
      cells.push_back(c);
    }

  TimeSeriesDataset ds;
  ds.metadata = params.describe();
  ds.metadata.emplace_back("seed", std::to_string(seed));
  auto record = [&](double t) {
    Matrix pts(cells.size(), 2);
    for (std::size_t i = 0; i < cells.size(); ++i) {
      pts(i, 0) = cells[i][0];
      pts(i, 1) = cells[i][1];
    }
    ds.snapshots.push_back(Snapshot::uniform(t, std::move(pts)));
  };

  const double sqdt = std::sqrt(params.dt);
  double t = 0.0;
  std::size_t next = 0;
  // A record time is hit when the clock is within half a step of it.
  while (next < params.record_times.size()) {
    if (t >= params.record_times[next] - 0.5 * params.dt) {
      record(params.record_times[next]);
      ++next;
      continue;
    }
    std::vector<Vec3> born;
    for (auto& c : cells) {
      const Vec3 f = sim_gene_drift(params, c);
      const double p_div = sim_gene_growth_rate(params, c[1]) / 100.0 * params.dt;
      for (int i = 0; i < 3; ++i) c[i] += f[i] * params.dt + params.noise[i] * sqdt * rng.normal();
      if (p_div > 0.0 && rng.uniform() < p_div) {
        Vec3 child = c;
        for (int i = 0; i < 3; ++i) {
          c[i] += params.division_noise * rng.normal();
          child[i] += params.division_noise * rng.normal();
        }
        born.push_back(child);
      }
    }
    cells.insert(cells.end(), born.begin(), born.end());
    t += params.dt;
  }
  return ds;
}

void GaussianMixtureParams::validate() const {
  require(dim >= 2, ErrorKind::parameter, "gaussian mixture needs dim >= 2");
  require(stddev > 0 && separation > 0, ErrorKind::parameter,
          "gaussian mixture spread/separation must be positive");
  require(upper_start > 0 && lower_start > 0, ErrorKind::parameter,
          "gaussian mixture populations must be nonempty");
}

TimeSeriesDataset gen_gaussian_mixture(const GaussianMixtureParams& params, std::uint64_t seed) {
  params.validate();
  Rng rng(seed);
  const std::size_t d = params.dim;
  const double s = params.separation;
  auto sample = [&](Matrix& m, std::size_t n, double cx, double cy) {
    std::vector<double> row(d);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < d; ++c) row[c] = params.stddev * rng.normal();
      row[0] += cx;
      row[1] += cy;
      m.append_row(row);
    }
  };
  Matrix x0(0, d), x1(0, d);
  sample(x0, params.upper_start, 0.0, s);
  sample(x0, params.lower_start, 0.0, -s);
  sample(x1, params.upper_end, 0.0, s);
  sample(x1, params.split_end, -s, -s);
  sample(x1, params.split_end, s, -s);

  TimeSeriesDataset ds;
  ds.metadata = {{"generator", "gaussian"},
                 {"dim", std::to_string(d)},
                 {"separation", format_double(s)},
                 {"stddev", format_double(params.stddev)},
                 {"seed", std::to_string(seed)}};
  ds.snapshots.push_back(Snapshot::uniform(0.0, std::move(x0)));
  ds.snapshots.push_back(Snapshot::uniform(1.0, std::move(x1)));
  return ds;
}

}  // namespace usb
