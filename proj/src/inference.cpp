#include "usb/inference.hpp"

#include <algorithm>
#include <cmath>

#include "usb/error.hpp"

namespace usb {
namespace {

std::size_t steps_for(double span, double dt) {
  if (span <= 0.0) return 0;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(span / dt - 1e-9)));
}

bool finite_row(std::span<const double> r) {
  return std::all_of(r.begin(), r.end(), [](double v) { return std::isfinite(v); });
}

// One Euler-Maruyama move of row i, noise drawn coordinate by coordinate.
void move_row(const Matrix& x, const Matrix& v, const Matrix& s, std::size_t i, double nu,
              double h, Rng& rng, std::span<double> out) {
  const double half_nu2 = 0.5 * nu * nu;
  const double noise = nu * std::sqrt(h);
  for (std::size_t c = 0; c < x.cols(); ++c)
    out[c] = x(i, c) + (v(i, c) + half_nu2 * s(i, c)) * h + noise * rng.normal();
}

}  // namespace

ModelDynamics::ModelDynamics(const ModelTriple& model, double nu)
    : model_(&model), nu_(nu > 0.0 ? nu : model.nu) {
  model.validate();
}

void ModelDynamics::evaluate(const Matrix& x, double t, Matrix& v, std::vector<double>& g,
                             Matrix& s) const {
  const std::vector<double> tt(x.rows(), t);
  v = model_->v_net.forward(x, tt);
  s = model_->s_net.forward(x, tt);
  const Matrix gm = model_->g_net.forward(x, tt);
  g.assign(gm.values().begin(), gm.values().end());
}

ConstantDynamics::ConstantDynamics(std::vector<double> v, double g, std::vector<double> s,
                                   double nu)
    : v_(std::move(v)), g_(g), s_(std::move(s)), nu_(nu) {
  require(!v_.empty() && s_.size() == v_.size(), ErrorKind::shape,
          "constant drift and score must have the same nonzero length");
  require(nu_ >= 0.0, ErrorKind::parameter, "nu must be >= 0");
}

void ConstantDynamics::evaluate(const Matrix& x, double, Matrix& v, std::vector<double>& g,
                                Matrix& s) const {
  const std::size_t n = x.rows(), d = v_.size();
  v = Matrix(n, d);
  s = Matrix(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) {
      v(i, c) = v_[c];
      s(i, c) = s_[c];
    }
  g.assign(n, g_);
}

ContinuousResult continuous_inference(const Dynamics& dyn, const Matrix& start,
                                      std::span<const double> start_log_weights, double t0,
                                      std::span<const double> times, double dt, Rng& rng) {
  require(dt > 0.0 && std::isfinite(dt), ErrorKind::parameter, "dt must be > 0");
  require(start.cols() == dyn.dim(), ErrorKind::shape,
          "start cloud dimension does not match the model");
  require(start_log_weights.size() == start.rows(), ErrorKind::shape,
          "one log weight per start particle is required");
  for (std::size_t k = 0; k < times.size(); ++k)
    require(times[k] >= (k ? times[k - 1] : t0), ErrorKind::parameter,
            "inference times must be non-decreasing and >= the start time");

  Matrix x = start;
  std::vector<double> lw(start_log_weights.begin(), start_log_weights.end());
  ContinuousResult out;
  Matrix v, s;
  std::vector<double> g;
  std::vector<double> next(x.cols());
  const double nu = dyn.nu();
  double t = t0;
  for (double target : times) {
    const std::size_t n_steps = steps_for(target - t, dt);
    const double h = n_steps ? (target - t) / static_cast<double>(n_steps) : 0.0;
    for (std::size_t k = 0; k < n_steps; ++k) {
      const double tk = t + static_cast<double>(k) * h;
      dyn.evaluate(x, tk, v, g, s);
      Matrix moved(0, x.cols());
      std::vector<double> kept;
      kept.reserve(lw.size());
      for (std::size_t i = 0; i < x.rows(); ++i) {
        move_row(x, v, s, i, nu, h, rng, next);
        const double w = lw[i] + g[i] * h;
        if (!finite_row(next) || !std::isfinite(w)) {
          ++out.excluded;
          continue;
        }
        moved.append_row(next);
        kept.push_back(w);
      }
      x = std::move(moved);
      lw = std::move(kept);
    }
    t = target;
    WeightedCloud c;
    c.time = target;
    c.points = x;
    c.log_weights = lw;
    out.clouds.push_back(std::move(c));
  }
  return out;
}

WeightedCloud continuous_inference(const Dynamics& dyn, const Snapshot& start, double t0,
                                   double t1, double dt, Rng& rng) {
  const std::vector<double> lw(start.size(), 0.0);
  const double times[] = {t1};
  auto r = continuous_inference(dyn, start.points, lw, t0, times, dt, rng);
  return std::move(r.clouds.front());
}

BranchingResult branching_inference(const Dynamics& dyn, const Matrix& roots, double t0,
                                    double t1, const BranchingOptions& options, Rng& rng) {
  require(options.dt > 0.0 && std::isfinite(options.dt), ErrorKind::parameter,
          "dt must be > 0");
  require(t1 >= t0, ErrorKind::parameter, "end time precedes start time");
  require(options.max_population >= 1, ErrorKind::parameter, "max_population must be >= 1");
  require(roots.cols() == dyn.dim(), ErrorKind::shape,
          "root cloud dimension does not match the model");
  const std::size_t d = roots.cols();

  BranchingResult out;
  auto& nodes = out.tree.nodes;
  auto new_node = [&](std::int64_t parent, double t, std::span<const double> x) {
    LineageNode n;
    n.id = static_cast<std::int64_t>(nodes.size());
    n.parent = parent;
    n.birth_time = t;
    n.path = Matrix(0, d);
    n.birth_position.assign(x.begin(), x.end());
    if (options.record_paths) {
      n.times.push_back(t);
      n.path.append_row(x);
    }
    nodes.push_back(std::move(n));
    return nodes.back().id;
  };

  Matrix x = roots;
  std::vector<std::int64_t> alive;
  for (std::size_t i = 0; i < roots.rows(); ++i) alive.push_back(new_node(kNoParent, t0, roots.row(i)));

  const std::size_t n_steps = steps_for(t1 - t0, options.dt);
  const double h = n_steps ? (t1 - t0) / static_cast<double>(n_steps) : 0.0;
  const double nu = dyn.nu();
  Matrix v, s;
  std::vector<double> g;
  std::vector<double> moved(d);
  double t = t0;
  for (std::size_t k = 0; k < n_steps && !alive.empty(); ++k) {
    dyn.evaluate(x, t, v, g, s);
    const double t_next = t0 + static_cast<double>(k + 1) * h;
    Matrix nx(0, d);
    std::vector<std::int64_t> next;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      move_row(x, v, s, i, nu, h, rng, moved);
      const double alpha = rng.uniform();
      LineageNode* node = &nodes[alive[i]];
      if (options.record_paths) {
        node->times.push_back(t_next);
        node->path.append_row(moved);
      }
      if (!finite_row(moved) || !std::isfinite(g[i])) {
        ++out.excluded;
        node->event = TerminalEvent::death;
        node->end_time = t_next;
        node->end_position.assign(moved.begin(), moved.end());
        continue;
      }
      double p = std::abs(g[i]) * h;
      if (p > 1.0) {
        ++out.clipped;
        p = 1.0;
      }
      if (alpha < p) {
        node->end_time = t_next;
        node->end_position.assign(moved.begin(), moved.end());
        if (g[i] >= 0.0) {
          node->event = TerminalEvent::division;
          const auto id = node->id;
          for (int c = 0; c < 2; ++c) {
            const auto child = new_node(id, t_next, moved);
            nodes[id].children.push_back(child);
            next.push_back(child);
            nx.append_row(moved);
          }
        } else {
          node->event = TerminalEvent::death;
        }
      } else {
        next.push_back(alive[i]);
        nx.append_row(moved);
      }
    }
    x = std::move(nx);
    alive = std::move(next);
    t = t_next;
    if (alive.size() > options.max_population) {
      out.truncated = true;
      break;
    }
  }
  out.end_time = t;
  for (std::size_t i = 0; i < alive.size(); ++i) {
    LineageNode& n = nodes[alive[i]];
    n.event = TerminalEvent::survived;
    n.end_time = t;
    n.end_position.assign(x.row(i).begin(), x.row(i).end());
  }
  out.survivors.time = t;
  out.survivors.points = std::move(x);
  out.survivors.log_weights.assign(alive.size(), 0.0);
  out.survivor_ids = std::move(alive);
  return out;
}

}  // namespace usb
