#include "usb/emd.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "usb/error.hpp"

namespace usb {
namespace {

// Spanning-tree network simplex on the bipartite transport graph, following
// the thread/successor tree representation of LEMON's implementation with a
// block-search pivot rule. Non-tree arcs are uncapacitated and sit at zero.
class Simplex {
 public:
  Simplex(std::span<const double> supply, std::span<const double> demand, const Matrix& cost)
      : na_(supply.size()), nb_(demand.size()), cost_in_(cost) {
    node_num_ = static_cast<int>(na_ + nb_);
    arc_num_ = static_cast<std::int64_t>(na_ * nb_);
    root_ = node_num_;
    const std::size_t all = static_cast<std::size_t>(arc_num_) + node_num_;
    flow_.assign(all, 0.0);
    state_.assign(all, kLower);
    art_source_.assign(node_num_, 0);
    art_target_.assign(node_num_, 0);
    art_cost_.assign(node_num_, 0.0);

    supply_.resize(node_num_ + 1);
    for (std::size_t i = 0; i < na_; ++i) supply_[i] = supply[i];
    for (std::size_t j = 0; j < nb_; ++j) supply_[na_ + j] = -demand[j];

    double max_cost = 0.0;
    for (double c : cost.values()) max_cost = std::max(max_cost, c);
    big_ = (max_cost + 1.0) * node_num_;
    eps_ = 1e-12 * std::max(1.0, max_cost);

    const int n = node_num_ + 1;
    parent_.assign(n, 0);
    pred_.assign(n, 0);
    thread_.assign(n, 0);
    rev_thread_.assign(n, 0);
    succ_num_.assign(n, 0);
    last_succ_.assign(n, 0);
    dir_.assign(n, 0);
    pi_.assign(n, 0.0);

    parent_[root_] = -1;
    pred_[root_] = -1;
    thread_[root_] = 0;
    rev_thread_[0] = root_;
    succ_num_[root_] = n;
    last_succ_[root_] = root_ - 1;
    pi_[root_] = 0.0;
    for (int u = 0; u < node_num_; ++u) {
      const std::int64_t e = arc_num_ + u;
      parent_[u] = root_;
      pred_[u] = e;
      thread_[u] = u + 1;
      rev_thread_[u + 1] = u;
      succ_num_[u] = 1;
      last_succ_[u] = u;
      state_[e] = kTree;
      if (supply_[u] >= 0.0) {
        dir_[u] = kUp;
        pi_[u] = 0.0;
        art_source_[u] = u;
        art_target_[u] = root_;
        flow_[e] = supply_[u];
        art_cost_[u] = 0.0;
      } else {
        dir_[u] = kDown;
        pi_[u] = big_;
        art_source_[u] = root_;
        art_target_[u] = u;
        flow_[e] = -supply_[u];
        art_cost_[u] = big_;
      }
    }
    block_ = std::max<std::int64_t>(10, static_cast<std::int64_t>(std::sqrt(double(arc_num_))));
  }

  std::size_t run() {
    std::size_t pivots = 0;
    while (find_entering()) {
      find_join();
      find_leaving();
      change_flow();
      update_tree();
      update_potential();
      ++pivots;
    }
    return pivots;
  }

  double flow(std::size_t i, std::size_t j) const { return flow_[i * nb_ + j]; }

 private:
  static constexpr signed char kLower = 1, kTree = 0;
  static constexpr int kUp = 1, kDown = -1;

  int source(std::int64_t e) const {
    return e < arc_num_ ? static_cast<int>(e / static_cast<std::int64_t>(nb_))
                        : art_source_[e - arc_num_];
  }
  int target(std::int64_t e) const {
    return e < arc_num_ ? static_cast<int>(na_ + e % static_cast<std::int64_t>(nb_))
                        : art_target_[e - arc_num_];
  }
  double cost(std::int64_t e) const {
    return e < arc_num_ ? cost_in_.data()[e] : art_cost_[e - arc_num_];
  }
  double reduced(std::int64_t e) const {
    const std::size_t i = static_cast<std::size_t>(e) / nb_, j = static_cast<std::size_t>(e) % nb_;
    return state_[e] * (cost_in_.data()[e] + pi_[i] - pi_[na_ + j]);
  }

  bool find_entering() {
    double best = -eps_;
    std::int64_t cnt = block_;
    bool found = false;
    std::int64_t e = next_arc_;
    for (std::int64_t k = 0; k < arc_num_; ++k) {
      const double c = reduced(e);
      if (c < best) {
        best = c;
        in_arc_ = e;
        found = true;
      }
      if (++e == arc_num_) e = 0;
      if (--cnt == 0) {
        if (found) break;
        cnt = block_;
      }
    }
    next_arc_ = e;
    return found;
  }

  void find_join() {
    int u = source(in_arc_), v = target(in_arc_);
    while (u != v) {
      if (succ_num_[u] < succ_num_[v])
        u = parent_[u];
      else
        v = parent_[v];
    }
    join_ = u;
  }

  void find_leaving() {
    // entering arcs are always at their lower bound
    const int first = source(in_arc_), second = target(in_arc_);
    delta_ = std::numeric_limits<double>::infinity();
    int result = 0;
    for (int u = first; u != join_; u = parent_[u]) {
      if (dir_[u] != kUp) continue;
      const double d = flow_[pred_[u]];
      if (d < delta_) {
        delta_ = d;
        u_out_ = u;
        result = 1;
      }
    }
    for (int u = second; u != join_; u = parent_[u]) {
      if (dir_[u] != kDown) continue;
      const double d = flow_[pred_[u]];
      if (d <= delta_) {
        delta_ = d;
        u_out_ = u;
        result = 2;
      }
    }
    if (result == 0) fail(ErrorKind::numeric, "transport problem is unbounded");
    if (result == 1) {
      u_in_ = first;
      v_in_ = second;
    } else {
      u_in_ = second;
      v_in_ = first;
    }
  }

  void change_flow() {
    if (delta_ > 0.0) {
      flow_[in_arc_] += delta_;
      for (int u = source(in_arc_); u != join_; u = parent_[u]) flow_[pred_[u]] -= dir_[u] * delta_;
      for (int u = target(in_arc_); u != join_; u = parent_[u]) flow_[pred_[u]] += dir_[u] * delta_;
    }
    state_[in_arc_] = kTree;
    flow_[pred_[u_out_]] = 0.0;
    state_[pred_[u_out_]] = kLower;
  }

  void update_tree() {
    const int old_rev_thread = rev_thread_[u_out_];
    const int old_succ_num = succ_num_[u_out_];
    const int old_last_succ = last_succ_[u_out_];
    v_out_ = parent_[u_out_];

    if (u_in_ == u_out_) {
      parent_[u_in_] = v_in_;
      pred_[u_in_] = in_arc_;
      dir_[u_in_] = u_in_ == source(in_arc_) ? kUp : kDown;
      if (thread_[v_in_] != u_out_) {
        int after = thread_[old_last_succ];
        thread_[old_rev_thread] = after;
        rev_thread_[after] = old_rev_thread;
        after = thread_[v_in_];
        thread_[v_in_] = u_out_;
        rev_thread_[u_out_] = v_in_;
        thread_[old_last_succ] = after;
        rev_thread_[after] = old_last_succ;
      }
    } else {
      const int thread_continue = old_rev_thread == v_in_ ? thread_[old_last_succ] : thread_[v_in_];
      int stem = u_in_, par_stem = v_in_, next_stem;
      int last = last_succ_[u_in_];
      int before, after = thread_[last];
      thread_[v_in_] = u_in_;
      dirty_.clear();
      dirty_.push_back(v_in_);
      while (stem != u_out_) {
        next_stem = parent_[stem];
        thread_[last] = next_stem;
        dirty_.push_back(last);
        before = rev_thread_[stem];
        thread_[before] = after;
        rev_thread_[after] = before;
        parent_[stem] = par_stem;
        par_stem = stem;
        stem = next_stem;
        last = last_succ_[stem] == last_succ_[par_stem] ? rev_thread_[par_stem] : last_succ_[stem];
        after = thread_[last];
      }
      parent_[u_out_] = par_stem;
      thread_[last] = thread_continue;
      rev_thread_[thread_continue] = last;
      last_succ_[u_out_] = last;
      if (old_rev_thread != v_in_) {
        thread_[old_rev_thread] = after;
        rev_thread_[after] = old_rev_thread;
      }
      for (int u : dirty_) rev_thread_[thread_[u]] = u;

      int tmp_sc = 0;
      const int tmp_ls = last_succ_[u_out_];
      for (int u = u_out_, p = parent_[u]; u != u_in_; u = p, p = parent_[u]) {
        pred_[u] = pred_[p];
        dir_[u] = -dir_[p];
        tmp_sc += succ_num_[u] - succ_num_[p];
        succ_num_[u] = tmp_sc;
        last_succ_[p] = tmp_ls;
      }
      pred_[u_in_] = in_arc_;
      dir_[u_in_] = u_in_ == source(in_arc_) ? kUp : kDown;
      succ_num_[u_in_] = old_succ_num;
    }

    const int up_limit_out = last_succ_[join_] == v_in_ ? join_ : -1;
    const int last_succ_out = last_succ_[u_out_];
    for (int u = v_in_; u != -1 && last_succ_[u] == v_in_; u = parent_[u])
      last_succ_[u] = last_succ_out;
    if (join_ != old_rev_thread && v_in_ != old_rev_thread) {
      for (int u = v_out_; u != up_limit_out && last_succ_[u] == old_last_succ; u = parent_[u])
        last_succ_[u] = old_rev_thread;
    } else if (last_succ_out != old_last_succ) {
      for (int u = v_out_; u != up_limit_out && last_succ_[u] == old_last_succ; u = parent_[u])
        last_succ_[u] = last_succ_out;
    }
    for (int u = v_in_; u != join_; u = parent_[u]) succ_num_[u] += old_succ_num;
    for (int u = v_out_; u != join_; u = parent_[u]) succ_num_[u] -= old_succ_num;
  }

  void update_potential() {
    const double sigma = pi_[v_in_] - pi_[u_in_] - dir_[u_in_] * cost(in_arc_);
    const int end = thread_[last_succ_[u_in_]];
    for (int u = u_in_; u != end; u = thread_[u]) pi_[u] += sigma;
  }

  std::size_t na_, nb_;
  const Matrix& cost_in_;
  int node_num_ = 0, root_ = 0;
  std::int64_t arc_num_ = 0, block_ = 10, next_arc_ = 0, in_arc_ = 0;
  double big_ = 0.0, eps_ = 0.0, delta_ = 0.0;
  int join_ = 0, u_in_ = 0, v_in_ = 0, u_out_ = 0, v_out_ = 0;
  std::vector<double> supply_, flow_, art_cost_, pi_;
  std::vector<signed char> state_;
  std::vector<int> art_source_, art_target_;
  std::vector<int> parent_, thread_, rev_thread_, succ_num_, last_succ_, dir_;
  std::vector<std::int64_t> pred_;
  std::vector<int> dirty_;
};

}  // namespace

TransportResult network_simplex(std::span<const double> supply, std::span<const double> demand,
                                const Matrix& cost) {
  require(!supply.empty() && !demand.empty(), ErrorKind::shape, "transport needs nonempty marginals");
  require(cost.rows() == supply.size() && cost.cols() == demand.size(), ErrorKind::shape,
          "cost matrix does not match the marginals");
  require(supply.size() + demand.size() < static_cast<std::size_t>(std::numeric_limits<int>::max()),
          ErrorKind::shape, "transport problem too large");
  double sa = 0.0, sb = 0.0;
  for (double v : supply) {
    require(v >= 0.0 && std::isfinite(v), ErrorKind::domain, "supplies must be finite and >= 0");
    sa += v;
  }
  for (double v : demand) {
    require(v >= 0.0 && std::isfinite(v), ErrorKind::domain, "demands must be finite and >= 0");
    sb += v;
  }
  require(std::abs(sa - sb) <= 1e-9 * std::max(sa, sb), ErrorKind::domain,
          "supply and demand totals differ");
  for (double c : cost.values())
    require(std::isfinite(c), ErrorKind::domain, "transport costs must be finite");

  Simplex s(supply, demand, cost);
  TransportResult out;
  out.pivots = s.run();
  out.plan = Matrix(supply.size(), demand.size());
  for (std::size_t i = 0; i < supply.size(); ++i)
    for (std::size_t j = 0; j < demand.size(); ++j) {
      out.plan(i, j) = s.flow(i, j);
      out.cost += out.plan(i, j) * cost(i, j);
    }
  return out;
}

}  // namespace usb
