#include "usb/training.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <ostream>
#include <string>

#include "usb/adam.hpp"
#include "usb/error.hpp"

namespace usb {

ModelTriple ModelTriple::create(std::size_t dim, std::size_t hidden_width, std::size_t depth,
                                double nu, Rng& rng) {
  require(nu > 0.0, ErrorKind::parameter, "nu must be positive");
  MlpSpec vec{dim, hidden_width, depth, dim, 0.01};
  MlpSpec scalar{dim, hidden_width, depth, 1, 0.01};
  ModelTriple m;
  Rng rv = rng.split(1), rg = rng.split(2), rs = rng.split(3);
  m.v_net = Mlp::initialized(vec, rv, false);
  m.g_net = Mlp::initialized(scalar, rg, true);
  m.s_net = Mlp::initialized(vec, rs, true);
  m.nu = nu;
  return m;
}

void ModelTriple::validate() const {
  const std::size_t d = dim();
  require(d >= 1, ErrorKind::format, "model has zero dimension");
  require(v_net.spec().output_dim == d && s_net.spec().output_dim == d &&
              g_net.spec().output_dim == 1,
          ErrorKind::format, "model network outputs do not match (d, 1, d)");
  require(g_net.spec().input_dim == d && s_net.spec().input_dim == d, ErrorKind::format,
          "model networks disagree on the input dimension");
  for (const Mlp* n : {&v_net, &g_net, &s_net}) {
    n->spec().validate();
    require(n->params().size() == n->spec().param_count(), ErrorKind::format,
            "model parameter count does not match its network shape");
  }
  require(nu > 0.0 && std::isfinite(nu), ErrorKind::format, "model nu must be positive");
}

FieldValues evaluate_fields(const ModelTriple& model, const Matrix& x, std::span<const double> t) {
  FieldValues f;
  f.v = model.v_net.forward(x, t);
  f.s = model.s_net.forward(x, t);
  const Matrix g = model.g_net.forward(x, t);
  f.g.assign(g.values().begin(), g.values().end());
  return f;
}

CusmBatch CusmBatch::from_samples(std::span<const BridgeSample> samples,
                                  std::span<const double> global_t, double nu) {
  require(samples.size() == global_t.size(), ErrorKind::shape,
          "one global time per bridge sample is required");
  require(!samples.empty(), ErrorKind::shape, "empty training batch");
  const std::size_t n = samples.size(), d = samples.front().x.size();
  CusmBatch b;
  b.x = Matrix(n, d);
  b.u = Matrix(n, d);
  b.eps = Matrix(n, d);
  b.time.assign(global_t.begin(), global_t.end());
  b.lambda.resize(n);
  b.g.resize(n);
  b.weight.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = samples[i];
    require(s.x.size() == d, ErrorKind::shape, "bridge samples differ in dimension");
    for (std::size_t c = 0; c < d; ++c) {
      b.x(i, c) = s.x[c];
      b.u(i, c) = s.u_target[c];
      b.eps(i, c) = s.eps_target[c];
    }
    b.lambda[i] = score_weight(s.t, nu);
    b.g[i] = s.g_target;
    b.weight[i] = s.mass_weight;
  }
  return b;
}

LossTerms cusm_loss(const ModelTriple& model, const CusmBatch& batch, ModelGradients* grads) {
  const std::size_t n = batch.size(), d = model.dim();
  require(n > 0, ErrorKind::shape, "empty training batch");
  require(batch.x.cols() == d && batch.u.cols() == d && batch.eps.cols() == d &&
              batch.u.rows() == n && batch.eps.rows() == n && batch.time.size() == n &&
              batch.lambda.size() == n && batch.g.size() == n && batch.weight.size() == n,
          ErrorKind::shape, "training batch does not match the model dimension");
  MlpTape tv, tg, ts;
  const Matrix v = model.v_net.forward(batch.x, batch.time, grads ? &tv : nullptr);
  const Matrix g = model.g_net.forward(batch.x, batch.time, grads ? &tg : nullptr);
  const Matrix s = model.s_net.forward(batch.x, batch.time, grads ? &ts : nullptr);

  Matrix dv(n, d), dg(n, 1), ds(n, d);
  LossTerms L;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = batch.weight[i];
    const double lam = batch.lambda[i];
    double lv = 0.0, ls = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double rv = v(i, c) - batch.u(i, c);
      const double rs = lam * s(i, c) + batch.eps(i, c);
      lv += rv * rv;
      ls += rs * rs;
      dv(i, c) = 2.0 * w * rv * inv_n;
      ds(i, c) = 2.0 * w * lam * rs * inv_n;
    }
    const double rg = g(i, 0) - batch.g[i];
    dg(i, 0) = 2.0 * w * rg * inv_n;
    const double li = w * (lv + rg * rg + ls);
    if (!std::isfinite(li))
      fail(ErrorKind::numeric, "non-finite loss at batch sample " + std::to_string(i) +
                                   " (t=" + std::to_string(batch.time[i]) +
                                   ", weight=" + std::to_string(w) + ")");
    L.v += w * lv * inv_n;
    L.g += w * rg * rg * inv_n;
    L.s += w * ls * inv_n;
  }
  L.total = L.v + L.g + L.s;
  if (grads) {
    grads->v = model.v_net.backward(tv, dv);
    grads->g = model.g_net.backward(tg, dg);
    grads->s = model.s_net.backward(ts, ds);
  }
  return L;
}

LossTerms cusm_loss(const ModelTriple& model, std::span<const BridgeSample> samples,
                    std::span<const double> global_t, ModelGradients* grads) {
  return cusm_loss(model, CusmBatch::from_samples(samples, global_t, model.nu), grads);
}

void TrainConfig::validate() const {
  require(delta > 0.0 && std::isfinite(delta), ErrorKind::config, "delta must be > 0");
  require(nu > 0.0 && std::isfinite(nu), ErrorKind::config, "nu must be > 0");
  require(epochs >= 1, ErrorKind::config, "epochs must be >= 1");
  require(batch_per_pair >= 1, ErrorKind::config, "batch_per_pair must be >= 1");
  require(learning_rate > 0.0 && std::isfinite(learning_rate), ErrorKind::config,
          "learning_rate must be > 0");
  require(t_floor > 0.0 && t_floor < 0.5, ErrorKind::config, "t_floor must lie in (0, 0.5)");
  require(depth >= 1 && hidden_width >= 1, ErrorKind::config, "network depth/width must be >= 1");
  require(threads >= 1, ErrorKind::config, "threads must be >= 1");
}

TrainConfig TrainConfig::defaults_for_dim(std::size_t d) {
  TrainConfig c;
  if (d >= 50) {
    c.epochs = 3000;
    c.schedule = LrSchedule::cosine;
  }
  return c;
}

IntervalCoupling product_coupling(const Snapshot& s0, const Snapshot& s1) {
  const double m0 = s0.total_mass(), m1 = s1.total_mass();
  BatchCoupling b;
  b.semi.gamma0 = Matrix(s0.size(), s1.size());
  b.semi.gamma1 = Matrix(s0.size(), s1.size());
  for (std::size_t i = 0; i < s0.size(); ++i)
    for (std::size_t j = 0; j < s1.size(); ++j) {
      const double p = s0.weights[i] * s1.weights[j];
      b.semi.gamma0(i, j) = p / m1;
      b.semi.gamma1(i, j) = p / m0;
    }
  b.idx0.resize(s0.size());
  b.idx1.resize(s1.size());
  for (std::size_t i = 0; i < s0.size(); ++i) b.idx0[i] = i;
  for (std::size_t j = 0; j < s1.size(); ++j) b.idx1[j] = j;
  b.converged = true;
  IntervalCoupling c;
  c.batches.push_back(std::move(b));
  return c;
}

std::vector<IntervalCoupling> compute_couplings(const TimeSeriesDataset& dataset,
                                                const TrainConfig& config) {
  dataset.validate();
  config.validate();
  std::vector<IntervalCoupling> out;
  CouplingParams p;
  p.delta = config.delta;
  p.oet = config.oet;
  p.minibatch = config.minibatch_ot_size;
  p.threads = config.threads;
  Rng rng = Rng(config.seed).split(0xc0);
  for (std::size_t k = 0; k + 1 < dataset.snapshots.size(); ++k) {
    const auto& a = dataset.snapshots[k];
    const auto& b = dataset.snapshots[k + 1];
    out.push_back(config.product_coupling ? product_coupling(a, b)
                                          : couple_snapshots(a, b, p, rng));
  }
  return out;
}

CusmBatch draw_training_batch(const TimeSeriesDataset& dataset,
                              const std::vector<PairSampler>& samplers, const TrainConfig& config,
                              Rng& rng) {
  const std::size_t d = dataset.dim();
  const std::size_t per = config.batch_per_pair;
  const std::size_t n = per * samplers.size();
  CusmBatch b;
  b.x = Matrix(n, d);
  b.u = Matrix(n, d);
  b.eps = Matrix(n, d);
  b.time.resize(n);
  b.lambda.resize(n);
  b.g.resize(n);
  b.weight.resize(n);
  std::vector<double> eps(d);
  std::size_t row = 0;
  for (std::size_t k = 0; k < samplers.size(); ++k) {
    const auto& p0 = dataset.snapshots[k].points;
    const auto& p1 = dataset.snapshots[k + 1].points;
    for (std::size_t r = 0; r < per; ++r, ++row) {
      const auto pair = samplers[k].sample(rng);
      const double t = rng.uniform(config.t_floor, 1.0 - config.t_floor);
      for (double& e : eps) e = rng.normal();
      const auto s = pb_bridge_at(p0.row(pair.i), p1.row(pair.j), pair.m0, pair.m1, config.nu, t, eps);
      for (std::size_t c = 0; c < d; ++c) {
        b.x(row, c) = s.x[c];
        b.u(row, c) = s.u_target[c];
        b.eps(row, c) = eps[c];
      }
      b.time[row] = static_cast<double>(k) + t;
      b.lambda[row] = score_weight(t, config.nu);
      b.g[row] = s.g_target;
      b.weight[row] = s.mass_weight;
    }
  }
  return b;
}

TrainResult train(const TimeSeriesDataset& dataset, const TrainConfig& config) {
  return train_with_couplings(dataset, compute_couplings(dataset, config), config);
}

TrainResult train_with_couplings(const TimeSeriesDataset& dataset,
                                 std::vector<IntervalCoupling> couplings,
                                 const TrainConfig& config) {
  dataset.validate();
  config.validate();
  require(couplings.size() == dataset.intervals(), ErrorKind::shape,
          "need one coupling per consecutive snapshot pair");
  std::vector<PairSampler> samplers;
  for (const auto& c : couplings) samplers.emplace_back(c);

  TrainResult out;
  Rng root(config.seed);
  Rng init = root.split(0x1417);
  out.model = ModelTriple::create(dataset.dim(), config.hidden_width, config.depth, config.nu, init);
  out.model.delta = config.delta;
  out.model.seed = config.seed;
  out.model.data_hash = dataset_hash(dataset);
  out.model.original_times = dataset.original_times();

  auto& m = out.model;
  AdamState av(m.v_net.params().size(), config.learning_rate);
  AdamState ag(m.g_net.params().size(), config.learning_rate);
  AdamState as(m.s_net.params().size(), config.learning_rate);
  Rng rng = root.split(0xba7c);
  out.loss_log.reserve(config.epochs);
  ModelGradients grads;
  for (std::size_t step = 0; step < config.epochs; ++step) {
    double lr = config.learning_rate;
    if (config.schedule == LrSchedule::cosine)
      lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) /
                                  static_cast<double>(config.epochs)));
    av.learning_rate = ag.learning_rate = as.learning_rate = lr;
    const CusmBatch batch = draw_training_batch(dataset, samplers, config, rng);
    out.loss_log.push_back(cusm_loss(m, batch, &grads));
    adam_step(av, m.v_net.params(), grads.v);
    adam_step(ag, m.g_net.params(), grads.g);
    adam_step(as, m.s_net.params(), grads.s);
  }
  out.couplings = std::move(couplings);
  return out;
}

void write_loss_log(std::ostream& out, const std::vector<LossTerms>& log) {
  out << "step,loss,loss_v,loss_g,loss_s\n";
  for (std::size_t k = 0; k < log.size(); ++k)
    out << k << ',' << format_double(log[k].total) << ',' << format_double(log[k].v) << ','
        << format_double(log[k].g) << ',' << format_double(log[k].s) << '\n';
}

void save_loss_log(const std::vector<LossTerms>& log, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  write_loss_log(f, log);
  if (!f) fail(ErrorKind::io, "write failed for '" + path.string() + "'");
}

}  // namespace usb
