#include "usb/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "usb/emd.hpp"
#include "usb/error.hpp"

namespace usb {
namespace {

struct Normalized {
  Matrix points;
  std::vector<double> weights;
};

Normalized normalize(const WeightedCloud& c) {
  require(c.size() > 0, ErrorKind::shape, "W1 of an empty cloud is undefined");
  require(c.log_weights.size() == c.size(), ErrorKind::shape, "one log weight per point required");
  double top = -std::numeric_limits<double>::infinity();
  for (double lw : c.log_weights) top = std::max(top, lw);
  require(std::isfinite(top), ErrorKind::domain, "cloud has no positive mass");
  Normalized out;
  out.points = Matrix(0, c.points.cols());
  double total = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double w = std::exp(c.log_weights[i] - top);
    if (w <= 0.0) continue;
    out.points.append_row(c.points.row(i));
    out.weights.push_back(w);
    total += w;
  }
  for (double& w : out.weights) w /= total;
  return out;
}

Matrix distance_matrix(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) {
        const double d = a(i, k) - b(j, k);
        s += d * d;
      }
      c(i, j) = std::sqrt(s);
    }
  return c;
}

double lse(const double* v, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i]);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

// Balanced log-domain Sinkhorn with eps-scaling; returns <C, P>.
double entropic_w1(const std::vector<double>& a, const std::vector<double>& b,
                   const Matrix& pa, const Matrix& pb, double eps, const W1Options& opt) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<float> cost(n * m);
  double cmax = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < pa.cols(); ++k) {
        const double d = pa(i, k) - pb(j, k);
        s += d * d;
      }
      cost[i * m + j] = static_cast<float>(std::sqrt(s));
      cmax = std::max(cmax, std::sqrt(s));
    }
  std::vector<double> la(n), lb(m), f(n, 0.0), g(m, 0.0), tmp(std::max(n, m));
  for (std::size_t i = 0; i < n; ++i) la[i] = std::log(a[i]);
  for (std::size_t j = 0; j < m; ++j) lb[j] = std::log(b[j]);

  double e = std::max(eps, cmax);
  for (;;) {
    for (std::size_t it = 0; it < opt.max_iter; ++it) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) tmp[j] = (g[j] - cost[i * m + j]) / e + lb[j];
        f[i] = -e * lse(tmp.data(), m);
      }
      double err = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t i = 0; i < n; ++i) tmp[i] = (f[i] - cost[i * m + j]) / e + la[i];
        const double ng = -e * lse(tmp.data(), n);
        err = std::max(err, std::abs(ng - g[j]));
        g[j] = ng;
      }
      if (err < opt.tol * std::max(1.0, cmax)) break;
    }
    if (e <= eps) break;
    e = std::max(eps, e * 0.5);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      total += a[i] * b[j] * std::exp((f[i] + g[j] - cost[i * m + j]) / e) * cost[i * m + j];
  return total;
}

double median_distance(const Matrix& pa, const Matrix& pb) {
  const std::size_t total = pa.rows() * pb.rows();
  const std::size_t stride = std::max<std::size_t>(1, total / 200000);
  std::vector<double> d;
  for (std::size_t e = 0; e < total; e += stride) {
    const std::size_t i = e / pb.rows(), j = e % pb.rows();
    double s = 0.0;
    for (std::size_t k = 0; k < pa.cols(); ++k) s += (pa(i, k) - pb(j, k)) * (pa(i, k) - pb(j, k));
    d.push_back(std::sqrt(s));
  }
  std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
  return d[d.size() / 2];
}

WeightedCloud standardized(const WeightedCloud& c, const Standardizer* st) {
  if (!st) return c;
  WeightedCloud out = c;
  out.points = st->apply(c.points);
  return out;
}

WeightedCloud cloud_of(const Snapshot& s) { return WeightedCloud::from_snapshot(s); }

// Simulated cloud at internal time `t` from the first snapshot.
std::vector<WeightedCloud> simulate(const ModelTriple& model, const Snapshot& start,
                                    std::span<const double> internal_times,
                                    const EvalOptions& opt) {
  ModelDynamics dyn(model, opt.nu);
  Rng rng = Rng(opt.seed).split(0x51a);
  std::vector<WeightedCloud> out;
  const WeightedCloud s0 = WeightedCloud::from_snapshot(start);
  if (opt.mode == InferenceMode::continuous) {
    return continuous_inference(dyn, s0.points, s0.log_weights, 0.0, internal_times, opt.dt, rng)
        .clouds;
  }
  BranchingOptions bo;
  bo.dt = opt.dt;
  bo.max_population = opt.max_population;
  bo.record_paths = false;
  for (std::size_t k = 0; k < internal_times.size(); ++k) {
    Rng r = rng.split(k);
    auto res = branching_inference(dyn, s0.points, 0.0, internal_times[k], bo, r);
    WeightedCloud c = std::move(res.survivors);
    // each survivor carries the mass of the root it descends from
    for (std::size_t i = 0; i < res.survivor_ids.size(); ++i) {
      std::int64_t id = res.survivor_ids[i];
      while (res.tree.nodes[id].parent != kNoParent) id = res.tree.nodes[id].parent;
      c.log_weights[i] = s0.log_weights[id];
    }
    c.time = internal_times[k];
    out.push_back(std::move(c));
  }
  return out;
}

std::string describe(const TrainConfig& c) {
  std::ostringstream s;
  s.precision(17);
  s << c.delta << ' ' << c.nu << ' ' << c.epochs << ' ' << c.batch_per_pair << ' '
    << c.learning_rate << ' ' << static_cast<int>(c.schedule) << ' ' << c.seed << ' '
    << c.minibatch_ot_size << ' ' << c.t_floor << ' ' << c.hidden_width << ' ' << c.depth << ' '
    << c.product_coupling << ' ' << c.oet.epsilon << ' ' << c.oet.max_iter << ' ' << c.oet.tol;
  return s.str();
}

}  // namespace

W1Result w1_detailed(const WeightedCloud& a, const WeightedCloud& b, const W1Options& options) {
  require(a.points.cols() == b.points.cols(), ErrorKind::shape, "W1 clouds differ in dimension");
  const Normalized na = normalize(a), nb = normalize(b);
  W1Result r;
  if (na.weights.size() * nb.weights.size() <= options.exact_threshold) {
    const Matrix c = distance_matrix(na.points, nb.points);
    r.value = network_simplex(na.weights, nb.weights, c).cost;
    return r;
  }
  r.exact = false;
  const double med = median_distance(na.points, nb.points);
  r.epsilon = options.entropic_factor * (med > 0.0 ? med : 1.0);
  r.value = entropic_w1(na.weights, nb.weights, na.points, nb.points, r.epsilon, options);
  return r;
}

double w1(const WeightedCloud& a, const WeightedCloud& b, const W1Options& options) {
  return w1_detailed(a, b, options).value;
}

double rme(double mass_pred, double mass_true) {
  require(mass_true > 0.0, ErrorKind::domain, "RME needs a positive true mass");
  return std::abs(mass_pred - mass_true) / mass_true;
}

double rme(const WeightedCloud& pred, const WeightedCloud& truth) {
  return rme(pred.total_mass(), truth.total_mass());
}

std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorKind::shape, "correlation inputs differ in length");
  const std::size_t n = a.size();
  if (n < 2) return std::nullopt;
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::optional<double> growth_correlation(const ModelTriple& model, const Matrix& probe,
                                         double t_probe, std::span<const double> true_g) {
  require(true_g.size() == probe.rows(), ErrorKind::shape, "one true growth value per probe point");
  const std::vector<double> t(probe.rows(), t_probe);
  const Matrix g = model.g_net.forward(probe, t);
  return pearson(g.values(), true_g);
}

void EvalReport::finalize() {
  mean_w1 = 0.0;
  mean_rme = 0.0;
  for (double v : w1) mean_w1 += v;
  for (double v : rme) mean_rme += v;
  if (!w1.empty()) mean_w1 /= static_cast<double>(w1.size());
  if (!rme.empty()) mean_rme /= static_cast<double>(rme.size());
}

EvalReport evaluate_model(const ModelTriple& model, const TimeSeriesDataset& dataset,
                          const EvalOptions& options) {
  const auto t_start = std::chrono::steady_clock::now();
  dataset.validate();
  require(model.dim() == dataset.dim(), ErrorKind::shape,
          "model dimension does not match the dataset");
  require(options.dt > 0.0, ErrorKind::config, "dt must be > 0");
  std::optional<Standardizer> st;
  if (options.standardize) st = Standardizer::fit(dataset);

  std::vector<double> internal;
  for (std::size_t k = 1; k < dataset.snapshots.size(); ++k) internal.push_back(static_cast<double>(k));
  const auto pred = simulate(model, dataset.snapshots.front(), internal, options);

  EvalReport r;
  r.seed = options.seed;
  for (std::size_t k = 1; k < dataset.snapshots.size(); ++k) {
    const WeightedCloud truth = cloud_of(dataset.snapshots[k]);
    const WeightedCloud& p = pred[k - 1];
    r.times.push_back(dataset.snapshots[k].time);
    r.predicted_mass.push_back(p.total_mass());
    r.true_mass.push_back(truth.total_mass());
    r.rme.push_back(rme(p, truth));
    if (p.size() == 0) {
      r.w1.push_back(std::numeric_limits<double>::infinity());
      r.w1_exact.push_back(true);
      continue;
    }
    const auto w = w1_detailed(standardized(p, st ? &*st : nullptr),
                               standardized(truth, st ? &*st : nullptr), options.w1);
    r.w1.push_back(w.value);
    r.w1_exact.push_back(w.exact);
    r.w1_epsilon = std::max(r.w1_epsilon, w.epsilon);
  }
  r.finalize();
  r.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return r;
}

EvalReport hold_one_out(const TimeSeriesDataset& dataset, const TrainConfig& config,
                        std::size_t held, const EvalOptions& options) {
  const auto t_start = std::chrono::steady_clock::now();
  dataset.validate();
  const std::size_t K = dataset.intervals();
  require(K >= 2, ErrorKind::protocol, "hold-one-out needs at least 3 snapshots");
  require(held >= 1 && held < K, ErrorKind::protocol,
          "held-out index must be interior (1.." + std::to_string(K - 1) + ")");
  const TimeSeriesDataset reduced = without_snapshot(dataset, held);
  const TrainResult trained = train(reduced, config);
  const double t_internal = reduced.to_internal(dataset.snapshots[held].time);

  std::optional<Standardizer> st;
  if (options.standardize) st = Standardizer::fit(dataset);
  const double times[] = {t_internal};
  const auto pred = simulate(trained.model, dataset.snapshots.front(), times, options);
  const WeightedCloud truth = cloud_of(dataset.snapshots[held]);

  EvalReport r;
  r.seed = options.seed;
  r.held_out = {held};
  r.times = {dataset.snapshots[held].time};
  r.predicted_mass = {pred[0].total_mass()};
  r.true_mass = {truth.total_mass()};
  r.rme = {rme(pred[0], truth)};
  if (pred[0].size() == 0) {
    r.w1 = {std::numeric_limits<double>::infinity()};
    r.w1_exact = {true};
  } else {
    const auto w = w1_detailed(standardized(pred[0], st ? &*st : nullptr),
                               standardized(truth, st ? &*st : nullptr), options.w1);
    r.w1 = {w.value};
    r.w1_exact = {w.exact};
    r.w1_epsilon = w.epsilon;
  }
  r.config_hash = hash_hex(describe(config));
  r.finalize();
  r.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return r;
}

EvalReport hold_one_out_all(const TimeSeriesDataset& dataset, const TrainConfig& config,
                            const EvalOptions& options) {
  const auto t_start = std::chrono::steady_clock::now();
  const std::size_t K = dataset.intervals();
  require(K >= 2, ErrorKind::protocol, "hold-one-out needs at least 3 snapshots");
  EvalReport all;
  all.seed = options.seed;
  for (std::size_t i = 1; i < K; ++i) {
    const EvalReport r = hold_one_out(dataset, config, i, options);
    all.held_out.push_back(i);
    all.times.push_back(r.times[0]);
    all.w1.push_back(r.w1[0]);
    all.rme.push_back(r.rme[0]);
    all.predicted_mass.push_back(r.predicted_mass[0]);
    all.true_mass.push_back(r.true_mass[0]);
    all.w1_exact.push_back(r.w1_exact[0]);
    all.w1_epsilon = std::max(all.w1_epsilon, r.w1_epsilon);
    all.config_hash = r.config_hash;
  }
  all.finalize();
  all.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return all;
}

std::string report_to_json(const EvalReport& r) {
  using nlohmann::json;
  auto finite_or_null = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json rows = json::array();
  for (std::size_t k = 0; k < r.times.size(); ++k) {
    json row{{"time", r.times[k]},
             {"w1", finite_or_null(r.w1[k])},
             {"rme", finite_or_null(r.rme[k])},
             {"predicted_mass", r.predicted_mass[k]},
             {"true_mass", r.true_mass[k]},
             {"w1_exact", static_cast<bool>(r.w1_exact[k])}};
    if (!r.held_out.empty()) row["held_out_index"] = r.held_out[k];
    rows.push_back(row);
  }
  json j{{"per_time", rows},
         {"mean_w1", finite_or_null(r.mean_w1)},
         {"mean_rme", finite_or_null(r.mean_rme)},
         {"w1_entropic_epsilon", r.w1_epsilon},
         {"growth_pearson", r.growth_pearson ? json(*r.growth_pearson) : json(nullptr)},
         {"runtime_seconds", r.runtime_seconds},
         {"config_hash", r.config_hash},
         {"seed", r.seed}};
  return j.dump(2);
}

void write_report_csv(std::ostream& out, const EvalReport& r) {
  out << "time,w1,rme,predicted_mass,true_mass,w1_exact\n";
  for (std::size_t k = 0; k < r.times.size(); ++k)
    out << format_double(r.times[k]) << ',' << format_double(r.w1[k]) << ','
        << format_double(r.rme[k]) << ',' << format_double(r.predicted_mass[k]) << ','
        << format_double(r.true_mass[k]) << ',' << (r.w1_exact[k] ? 1 : 0) << '\n';
}

void save_report(const EvalReport& report, const std::filesystem::path& json_path,
                 const std::filesystem::path& csv_path) {
  {
    std::ofstream f(json_path, std::ios::binary);
    if (!f) fail(ErrorKind::io, "cannot open '" + json_path.string() + "' for writing");
    f << report_to_json(report) << '\n';
    if (!f) fail(ErrorKind::io, "write failed for '" + json_path.string() + "'");
  }
  std::ofstream f(csv_path, std::ios::binary);
  if (!f) fail(ErrorKind::io, "cannot open '" + csv_path.string() + "' for writing");
  write_report_csv(f, report);
  if (!f) fail(ErrorKind::io, "write failed for '" + csv_path.string() + "'");
}

std::string hash_hex(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace usb
