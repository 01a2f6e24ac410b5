#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "svg.hpp"
#include "usb/coupling.hpp"
#include "usb/error.hpp"
#include "usb/eval.hpp"
#include "usb/generators.hpp"
#include "usb/inference.hpp"
#include "usb/training.hpp"

namespace usb::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Resolved settings for every command. Optional fields fall back to a
// derived default (global seed, dimension-dependent schedule, ...).
struct RunConfig {
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;

  struct {
    std::string path;
    std::string generator = "sim-gene";
    std::size_t dim = 10;
    std::optional<std::uint64_t> seed;
    std::string output = "data.csv";
  } data;

  struct {
    double delta = 1.0;
    double eps_entropic = 0.0;
    std::size_t minibatch = 0;
    std::size_t max_iter = 100000;
    double tol = 1e-9;
    bool allow_unconverged = false;
    std::string dump = "coupling.csv";
  } coupling;

  struct {
    double nu = 0.001;
    std::optional<std::size_t> epochs;
    std::size_t batch_per_pair = 256;
    double learning_rate = 1e-3;
    std::optional<std::string> schedule;
    std::size_t hidden_width = 256;
    std::size_t depth = 5;
    double t_floor = kDefaultTFloor;
    bool product_coupling = false;
    std::optional<std::uint64_t> seed;
    std::string model = "model.json";
    std::string loss_log = "loss.csv";
  } train;

  struct {
    std::string mode = "continuous";
    double dt = 0.01;
    std::size_t n_roots = 0;
    std::size_t repeats = 1;
    std::size_t max_population = 1000000;
    std::optional<std::uint64_t> seed;
    double nu = 0.0;
    std::vector<double> times;
    std::string model;
  } inference;

  struct {
    std::string holdout = "none";
    bool probe_growth = false;
    bool standardize = true;
  } eval;

  struct {
    std::string directory = ".";
    bool plot = false;
  } output;
};

[[noreturn]] void config_error(const std::string& what) { fail(ErrorKind::config, what); }

template <class T>
T get_as(const json& v, const std::string& where) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) config_error(where + " must be a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) config_error(where + " must be a string");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer() || (v.is_number_integer() && v.get<long long>() < 0 && !v.is_number_unsigned()))
        config_error(where + " must be a nonnegative integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) config_error(where + " must be a number");
    }
    return v.get<T>();
  } catch (const json::exception& e) {
    config_error(where + ": " + e.what());
  }
}

using Setter = std::function<void(const json&, const std::string&)>;

template <class T>
Setter set(T& target) {
  return [&target](const json& v, const std::string& where) { target = get_as<T>(v, where); };
}
template <class T>
Setter set(std::optional<T>& target) {
  return [&target](const json& v, const std::string& where) { target = get_as<T>(v, where); };
}

void apply_section(const json& obj, const std::string& name, const std::map<std::string, Setter>& keys) {
  if (!obj.is_object()) config_error("section '" + name + "' must be an object");
  for (const auto& [k, v] : obj.items()) {
    const auto it = keys.find(k);
    if (it == keys.end()) config_error("unknown key '" + k + "' in section '" + name + "'");
    it->second(v, name + "." + k);
  }
}

void apply_json(RunConfig& c, const json& j) {
  if (!j.is_object()) config_error("config file must hold a JSON object");
  for (const auto& [section, body] : j.items()) {
    if (section == "seed") {
      c.seed = get_as<std::uint64_t>(body, "seed");
    } else if (section == "threads") {
      c.threads = get_as<unsigned>(body, "threads");
    } else if (section == "data") {
      apply_section(body, section,
                    {{"path", set(c.data.path)},
                     {"generator", set(c.data.generator)},
                     {"dim", set(c.data.dim)},
                     {"seed", set(c.data.seed)},
                     {"output", set(c.data.output)}});
    } else if (section == "coupling") {
      apply_section(body, section,
                    {{"delta", set(c.coupling.delta)},
                     {"eps_entropic", set(c.coupling.eps_entropic)},
                     {"minibatch", set(c.coupling.minibatch)},
                     {"max_iter", set(c.coupling.max_iter)},
                     {"tol", set(c.coupling.tol)},
                     {"allow_unconverged", set(c.coupling.allow_unconverged)},
                     {"dump", set(c.coupling.dump)}});
    } else if (section == "train") {
      apply_section(body, section,
                    {{"nu", set(c.train.nu)},
                     {"epochs", set(c.train.epochs)},
                     {"batch_per_pair", set(c.train.batch_per_pair)},
                     {"learning_rate", set(c.train.learning_rate)},
                     {"schedule", set(c.train.schedule)},
                     {"hidden_width", set(c.train.hidden_width)},
                     {"depth", set(c.train.depth)},
                     {"t_floor", set(c.train.t_floor)},
                     {"product_coupling", set(c.train.product_coupling)},
                     {"seed", set(c.train.seed)},
                     {"model", set(c.train.model)},
                     {"loss_log", set(c.train.loss_log)}});
    } else if (section == "inference") {
      apply_section(body, section,
                    {{"mode", set(c.inference.mode)},
                     {"dt", set(c.inference.dt)},
                     {"n_roots", set(c.inference.n_roots)},
                     {"repeats", set(c.inference.repeats)},
                     {"max_population", set(c.inference.max_population)},
                     {"seed", set(c.inference.seed)},
                     {"nu", set(c.inference.nu)},
                     {"model", set(c.inference.model)},
                     {"times", [&](const json& v, const std::string& where) {
                        if (!v.is_array()) config_error(where + " must be an array of numbers");
                        c.inference.times.clear();
                        for (const auto& t : v) c.inference.times.push_back(get_as<double>(t, where));
                      }}});
    } else if (section == "eval") {
      apply_section(body, section,
                    {{"holdout", [&](const json& v, const std::string& where) {
                        if (v.is_number_integer())
                          c.eval.holdout = std::to_string(get_as<std::size_t>(v, where));
                        else
                          c.eval.holdout = get_as<std::string>(v, where);
                      }},
                     {"probe_growth", set(c.eval.probe_growth)},
                     {"standardize", set(c.eval.standardize)}});
    } else if (section == "output") {
      apply_section(body, section, {{"directory", set(c.output.directory)}, {"plot", set(c.output.plot)}});
    } else {
      config_error("unknown config section '" + section + "'");
    }
  }
}

std::uint64_t global_seed(const RunConfig& c) {
  if (c.seed) return *c.seed;
  if (const char* env = std::getenv("USB_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    config_error(std::string("USB_SEED is not an unsigned integer: '") + env + "'");
  }
  return 0;
}

json resolved_json(const RunConfig& c, std::size_t dim) {
  const std::uint64_t g = global_seed(c);
  const TrainConfig defaults = TrainConfig::defaults_for_dim(dim);
  auto opt = [](const std::optional<std::uint64_t>& v, std::uint64_t fallback) { return v ? *v : fallback; };
  return {
      {"seed", g},
      {"threads", c.threads},
      {"data",
       {{"path", c.data.path},
        {"generator", c.data.generator},
        {"dim", c.data.dim},
        {"seed", opt(c.data.seed, g)},
        {"output", c.data.output}}},
      {"coupling",
       {{"delta", c.coupling.delta},
        {"eps_entropic", c.coupling.eps_entropic},
        {"minibatch", c.coupling.minibatch},
        {"max_iter", c.coupling.max_iter},
        {"tol", c.coupling.tol},
        {"allow_unconverged", c.coupling.allow_unconverged},
        {"dump", c.coupling.dump}}},
      {"train",
       {{"nu", c.train.nu},
        {"epochs", c.train.epochs.value_or(defaults.epochs)},
        {"batch_per_pair", c.train.batch_per_pair},
        {"learning_rate", c.train.learning_rate},
        {"schedule", c.train.schedule.value_or(defaults.schedule == LrSchedule::cosine ? "cosine" : "constant")},
        {"hidden_width", c.train.hidden_width},
        {"depth", c.train.depth},
        {"t_floor", c.train.t_floor},
        {"product_coupling", c.train.product_coupling},
        {"seed", opt(c.train.seed, g)},
        {"model", c.train.model},
        {"loss_log", c.train.loss_log}}},
      {"inference",
       {{"mode", c.inference.mode},
        {"dt", c.inference.dt},
        {"n_roots", c.inference.n_roots},
        {"repeats", c.inference.repeats},
        {"max_population", c.inference.max_population},
        {"seed", opt(c.inference.seed, g)},
        {"nu", c.inference.nu},
        {"times", c.inference.times},
        {"model", c.inference.model}}},
      {"eval",
       {{"holdout", c.eval.holdout},
        {"probe_growth", c.eval.probe_growth},
        {"standardize", c.eval.standardize}}},
      {"output", {{"directory", c.output.directory}, {"plot", c.output.plot}}}};
}

TrainConfig train_config(const RunConfig& c, std::size_t dim) {
  TrainConfig t = TrainConfig::defaults_for_dim(dim);
  t.delta = c.coupling.delta;
  t.nu = c.train.nu;
  if (c.train.epochs) t.epochs = *c.train.epochs;
  if (c.train.schedule) {
    if (*c.train.schedule == "constant")
      t.schedule = LrSchedule::constant;
    else if (*c.train.schedule == "cosine")
      t.schedule = LrSchedule::cosine;
    else
      config_error("train.schedule must be 'constant' or 'cosine'");
  }
  t.batch_per_pair = c.train.batch_per_pair;
  t.learning_rate = c.train.learning_rate;
  t.seed = c.train.seed.value_or(global_seed(c));
  t.minibatch_ot_size = c.coupling.minibatch;
  t.t_floor = c.train.t_floor;
  t.hidden_width = c.train.hidden_width;
  t.depth = c.train.depth;
  t.product_coupling = c.train.product_coupling;
  t.oet.epsilon = c.coupling.eps_entropic;
  t.oet.max_iter = c.coupling.max_iter;
  t.oet.tol = c.coupling.tol;
  t.threads = c.threads;
  require(c.coupling.eps_entropic >= 0.0, ErrorKind::config, "coupling.eps_entropic must be >= 0");
  require(c.coupling.tol > 0.0, ErrorKind::config, "coupling.tol must be > 0");
  t.validate();
  return t;
}

fs::path out_path(const RunConfig& c, const std::string& name) {
  const fs::path p(name);
  return p.is_absolute() ? p : fs::path(c.output.directory) / p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) fail(ErrorKind::io, "write failed for '" + path.string() + "'");
}

void write_run_json(const RunConfig& c, const std::string& command, std::size_t dim) {
  json j{{"command", command},
         {"version", USB_VERSION},
         {"config", resolved_json(c, dim)}};
  write_text(out_path(c, "run.json"), j.dump(2) + "\n");
}

TimeSeriesDataset load_data(const RunConfig& c) {
  if (c.data.path.empty()) config_error("data.path (or --data) is required");
  return load_snapshots(c.data.path);
}

// Piecewise-linear maps between original and internal (snapshot index) time.
double to_internal(const std::vector<double>& times, double t) {
  require(times.size() >= 2, ErrorKind::format, "model has no time grid");
  std::size_t k = 0;
  while (k + 2 < times.size() && t > times[k + 1]) ++k;
  return static_cast<double>(k) + (t - times[k]) / (times[k + 1] - times[k]);
}

double to_original(const std::vector<double>& times, double s) {
  require(times.size() >= 2, ErrorKind::format, "model has no time grid");
  const double kmax = static_cast<double>(times.size() - 2);
  const double k = std::clamp(std::floor(s), 0.0, kmax);
  const auto i = static_cast<std::size_t>(k);
  return times[i] + (s - k) * (times[i + 1] - times[i]);
}

void check_couplings(const std::vector<IntervalCoupling>& couplings, bool allow, std::ostream& out) {
  for (std::size_t k = 0; k < couplings.size(); ++k) {
    const auto& c = couplings[k];
    std::size_t iters = 0;
    double eps = 0.0;
    for (const auto& b : c.batches) {
      iters = std::max(iters, b.iterations);
      eps = std::max(eps, b.epsilon);
    }
    out << "interval " << k << ": " << c.batches.size() << " batch(es), eps " << eps
        << ", max iterations " << iters << (c.all_converged() ? ", converged" : ", NOT converged")
        << '\n';
  }
  if (allow) return;
  for (std::size_t k = 0; k < couplings.size(); ++k)
    if (!couplings[k].all_converged())
      fail(ErrorKind::numeric, "coupling for interval " + std::to_string(k) +
                                   " did not converge (raise coupling.max_iter or set "
                                   "coupling.allow_unconverged)");
}

// ---------------------------------------------------------------- commands

int cmd_gen_data(RunConfig& c, std::ostream& out) {
  const std::uint64_t seed = c.data.seed.value_or(global_seed(c));
  TimeSeriesDataset ds;
  if (c.data.generator == "sim-gene") {
    ds = gen_sim_gene(SimGeneParams::defaults(), seed);
  } else if (c.data.generator == "gaussian") {
    GaussianMixtureParams p;
    p.dim = c.data.dim;
    p.validate();
    ds = gen_gaussian_mixture(p, seed);
  } else {
    config_error("unknown generator '" + c.data.generator + "' (expected sim-gene or gaussian)");
  }
  const fs::path path = out_path(c, c.data.output);
  save_snapshots(ds, path);
  write_run_json(c, "gen-data", ds.dim());
  std::size_t rows = 0;
  for (const auto& s : ds.snapshots) rows += s.size();
  out << "wrote " << path.string() << ": " << ds.snapshots.size() << " snapshots, " << rows
      << " rows, d=" << ds.dim() << '\n';
  return 0;
}

int cmd_coupling(RunConfig& c, std::ostream& out) {
  const auto ds = load_data(c);
  const TrainConfig tc = train_config(c, ds.dim());
  write_run_json(c, "coupling", ds.dim());
  const auto couplings = compute_couplings(ds, tc);
  const fs::path path = out_path(c, c.coupling.dump);
  save_coupling_csv(couplings, path);
  out << "wrote " << path.string() << '\n';
  check_couplings(couplings, c.coupling.allow_unconverged, out);
  return 0;
}

int cmd_train(RunConfig& c, std::ostream& out) {
  const auto ds = load_data(c);
  const TrainConfig tc = train_config(c, ds.dim());
  write_run_json(c, "train", ds.dim());
  auto couplings = compute_couplings(ds, tc);
  check_couplings(couplings, c.coupling.allow_unconverged, out);
  const TrainResult r = train_with_couplings(ds, std::move(couplings), tc);
  save_model(r.model, out_path(c, c.train.model));
  save_loss_log(r.loss_log, out_path(c, c.train.loss_log));
  out << "trained " << tc.epochs << " steps, final loss " << r.loss_log.back().total << "\nwrote "
      << out_path(c, c.train.model).string() << " and " << out_path(c, c.train.loss_log).string()
      << '\n';
  return 0;
}

ModelTriple load_run_model(const RunConfig& c) {
  return load_model(c.inference.model.empty() ? out_path(c, c.train.model) : fs::path(c.inference.model));
}

InferenceMode parse_mode(const std::string& m) {
  if (m == "continuous") return InferenceMode::continuous;
  if (m == "branching") return InferenceMode::branching;
  config_error("inference.mode must be 'continuous' or 'branching'");
}

Matrix pick_roots(const Snapshot& s, std::size_t n, Rng& rng) {
  if (n == 0) return s.points;
  Matrix m(0, s.dim());
  for (std::size_t k = 0; k < n; ++k) m.append_row(s.points.row(rng.index(s.size())));
  return m;
}

LineageTree in_original_time(LineageTree tree, const std::vector<double>& grid) {
  for (auto& n : tree.nodes) {
    n.birth_time = to_original(grid, n.birth_time);
    n.end_time = to_original(grid, n.end_time);
    for (double& t : n.times) t = to_original(grid, t);
  }
  return tree;
}

int cmd_simulate(RunConfig& c, std::ostream& out) {
  const auto ds = load_data(c);
  const ModelTriple model = load_run_model(c);
  require(model.dim() == ds.dim(), ErrorKind::shape,
          "model dimension " + std::to_string(model.dim()) + " does not match data dimension " +
              std::to_string(ds.dim()));
  require(c.inference.dt > 0.0, ErrorKind::config, "inference.dt must be > 0");
  require(c.inference.repeats >= 1, ErrorKind::config, "inference.repeats must be >= 1");
  const InferenceMode mode = parse_mode(c.inference.mode);
  write_run_json(c, "simulate", ds.dim());

  const auto& grid = model.original_times;
  std::vector<double> times = c.inference.times;
  if (times.empty()) times.assign(grid.begin() + 1, grid.end());
  std::vector<double> internal;
  for (double t : times) internal.push_back(to_internal(grid, t));
  const double t0 = 0.0;
  ModelDynamics dyn(model, c.inference.nu);
  Rng rng = Rng(c.inference.seed.value_or(global_seed(c))).split(0x5e);
  const bool plot = c.output.plot && ds.dim() >= 2;
  if (c.output.plot && !plot) out << "plot skipped: needs d >= 2\n";

  if (mode == InferenceMode::continuous) {
    Rng pick = rng.split(1);
    const Matrix roots = pick_roots(ds.snapshots.front(), c.inference.n_roots, pick);
    const std::vector<double> lw(roots.rows(), 0.0);
    Rng sim = rng.split(2);
    auto r = continuous_inference(dyn, roots, lw, t0, internal, c.inference.dt, sim);
    for (std::size_t k = 0; k < r.clouds.size(); ++k) r.clouds[k].time = times[k];
    const Metadata meta{{"mode", "continuous"}, {"excluded", std::to_string(r.excluded)}};
    save_weighted_clouds(r.clouds, out_path(c, "cloud.csv"), meta);
    if (plot) save_scatter_svg(r.clouds, out_path(c, "cloud.svg"));
    for (const auto& cl : r.clouds)
      out << "t=" << cl.time << ": " << cl.size() << " particles, total mass " << cl.total_mass() << '\n';
    if (r.excluded) out << r.excluded << " particle(s) excluded for non-finite state\n";
    return 0;
  }

  BranchingOptions bo;
  bo.dt = c.inference.dt;
  bo.max_population = c.inference.max_population;
  const double t_end = internal.empty() ? 0.0 : internal.back();
  json summary = json::array();
  std::vector<LineageTree> trees;
  std::vector<WeightedCloud> survivors;
  for (std::size_t k = 0; k < c.inference.repeats; ++k) {
    Rng pick = rng.split(100 + 2 * k), sim = rng.split(101 + 2 * k);
    const Matrix roots = pick_roots(ds.snapshots.front(), c.inference.n_roots, pick);
    auto r = branching_inference(dyn, roots, t0, t_end, bo, sim);
    r.tree.validate();
    const auto st = lineage_stats(r.tree);
    const LineageTree tree = in_original_time(std::move(r.tree), grid);
    const std::string suffix = c.inference.repeats > 1 ? "_" + std::to_string(k) : "";
    save_trajectory_csv(tree, out_path(c, "trajectories" + suffix + ".csv"));
    save_events_jsonl(tree, out_path(c, "events" + suffix + ".jsonl"));
    r.survivors.time = to_original(grid, r.end_time);
    survivors.push_back(r.survivors);
    summary.push_back({{"repeat", k},
                       {"roots", st.roots},
                       {"divisions", st.divisions},
                       {"deaths", st.deaths},
                       {"survivors", st.survivors},
                       {"max_depth", st.max_depth},
                       {"survivors_per_root", st.survivors_per_root},
                       {"truncated", r.truncated},
                       {"clipped_steps", r.clipped},
                       {"excluded", r.excluded},
                       {"end_time", to_original(grid, r.end_time)}});
    out << "repeat " << k << ": " << st.roots << " root(s), " << st.divisions << " divisions, "
        << st.deaths << " deaths, " << st.survivors << " survivors"
        << (r.truncated ? " (truncated at max_population)" : "") << '\n';
    if (plot) trees.push_back(tree);
  }
  save_weighted_clouds(survivors, out_path(c, "survivors.csv"), {{"mode", "branching"}});
  write_text(out_path(c, "lineage.json"), json{{"repeats", summary}}.dump(2) + "\n");
  if (plot) save_lineage_svg(trees, out_path(c, "lineage.svg"));
  return 0;
}

std::optional<double> sim_gene_probe(const ModelTriple& model, const TimeSeriesDataset& ds) {
  double alpha_g = 0.0;
  bool found = false;
  for (const auto& [k, v] : ds.metadata)
    if (k == "growth_scale") {
      alpha_g = std::stod(v);
      found = true;
    }
  require(found && ds.dim() == 2, ErrorKind::config,
          "eval.probe_growth needs sim-gene data (growth_scale metadata, d = 2)");
  SimGeneParams p;
  p.growth_scale = alpha_g;
  const Snapshot& probe = ds.snapshots.back();
  std::vector<double> g;
  for (std::size_t i = 0; i < probe.size(); ++i) g.push_back(sim_gene_growth_rate(p, probe.points(i, 1)));
  return growth_correlation(model, probe.points, static_cast<double>(ds.intervals()), g);
}

int cmd_evaluate(RunConfig& c, std::ostream& out) {
  const auto ds = load_data(c);
  EvalOptions opt;
  opt.mode = parse_mode(c.inference.mode);
  opt.dt = c.inference.dt;
  opt.nu = c.inference.nu;
  opt.seed = c.inference.seed.value_or(global_seed(c));
  opt.standardize = c.eval.standardize;
  opt.max_population = c.inference.max_population;
  require(opt.dt > 0.0, ErrorKind::config, "inference.dt must be > 0");

  EvalReport report;
  const std::string& h = c.eval.holdout;
  if (h == "none") {
    write_run_json(c, "evaluate", ds.dim());
    const ModelTriple model = load_run_model(c);
    require(model.dim() == ds.dim(), ErrorKind::shape, "model dimension does not match the data");
    report = evaluate_model(model, ds, opt);
    if (c.eval.probe_growth) report.growth_pearson = sim_gene_probe(model, ds);
  } else {
    const TrainConfig tc = train_config(c, ds.dim());
    write_run_json(c, "evaluate", ds.dim());
    if (h == "all") {
      report = hold_one_out_all(ds, tc, opt);
    } else {
      std::size_t idx = 0, used = 0;
      try {
        idx = std::stoul(h, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != h.size() || h.empty()) config_error("eval.holdout must be 'none', 'all' or an index");
      report = hold_one_out(ds, tc, idx, opt);
    }
  }
  report.config_hash = hash_hex(resolved_json(c, ds.dim()).dump());
  save_report(report, out_path(c, "report.json"), out_path(c, "report.csv"));
  for (std::size_t k = 0; k < report.times.size(); ++k)
    out << "t=" << report.times[k] << ": W1 " << report.w1[k] << ", RME " << report.rme[k] << '\n';
  out << "mean W1 " << report.mean_w1 << ", mean RME " << report.mean_rme << '\n';
  if (report.growth_pearson) out << "growth Pearson " << *report.growth_pearson << '\n';
  return 0;
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::numeric: return 3;
    case ErrorKind::io:
    case ErrorKind::format: return 4;
    default: return 2;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Unbalanced Schrodinger bridge toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(USB_VERSION));

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::string> out_dir;
  bool plot = false;
  app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Global seed (falls back to USB_SEED, then 0)");
  app.add_option("--threads", threads, "Worker thread cap");
  app.add_option("--out", out_dir, "Output directory");
  app.add_flag("--plot", plot, "Write SVG plots (d >= 2)");

  // flag overrides, applied after the config file
  std::optional<std::string> data, generator, model, mode, holdout, schedule, dump;
  std::optional<std::size_t> dim, minibatch, epochs, batch, width, depth, n_roots, repeats, max_pop;
  std::optional<double> delta, nu, eps, lr, dt, sim_nu;
  std::optional<std::vector<double>> times;
  bool product = false, allow_unconverged = false, probe_growth = false;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen->add_option("--generator", generator, "sim-gene or gaussian");
  gen->add_option("--dim", dim, "Dimension (gaussian)");
  gen->add_option("--output", dump, "Output CSV (relative to --out)");

  auto* cpl = app.add_subcommand("coupling", "Compute and dump the semi-couplings");
  auto* trn = app.add_subcommand("train", "Train the drift, growth and score networks");
  auto* sim = app.add_subcommand("simulate", "Simulate a trained model");
  auto* evl = app.add_subcommand("evaluate", "Evaluate a trained model or run hold-one-out");

  for (auto* sub : {cpl, trn, sim, evl}) sub->add_option("--data", data, "Snapshot CSV");
  for (auto* sub : {cpl, trn, evl}) {
    sub->add_option("--delta", delta, "WFR length scale");
    sub->add_option("--eps", eps, "Entropic epsilon (0 = automatic)");
    sub->add_option("--minibatch", minibatch, "Mini-batch OT size (0 = full)");
    sub->add_flag("--allow-unconverged", allow_unconverged, "Continue when a coupling does not converge");
  }
  cpl->add_option("--dump-coupling", dump, "Coupling CSV (relative to --out)");
  for (auto* sub : {trn, evl}) {
    sub->add_option("--nu", nu, "Diffusion");
    sub->add_option("--epochs", epochs, "Optimizer steps");
    sub->add_option("--batch", batch, "Bridge samples per interval per step");
    sub->add_option("--lr", lr, "Learning rate");
    sub->add_option("--schedule", schedule, "constant or cosine");
    sub->add_option("--width", width, "Hidden width");
    sub->add_option("--depth", depth, "Affine layers per network");
    sub->add_flag("--product-coupling", product, "Ablation: independent coupling");
  }
  trn->add_option("--model", model, "Model output (relative to --out)");
  for (auto* sub : {sim, evl}) {
    sub->add_option("--model", model, "Trained model file");
    sub->add_option("--mode", mode, "continuous or branching");
    sub->add_option("--dt", dt, "Step in internal time units");
    sub->add_option("--sim-nu", sim_nu, "Override the simulation diffusion");
    sub->add_option("--max-population", max_pop, "Branching population cap");
  }
  sim->add_option("--n-roots", n_roots, "Root cells sampled from the first snapshot (0 = all)");
  sim->add_option("--repeats", repeats, "Independent branching runs");
  sim->add_option("--times", times, "Output times in original units");
  evl->add_option("--holdout", holdout, "none, all or an interior index");
  evl->add_flag("--probe-growth", probe_growth, "Correlate g with the sim-gene growth law");

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion& e) {
    out << USB_VERSION << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  }

  try {
    RunConfig c;
    if (!config_path.empty()) {
      std::ifstream f(config_path);
      if (!f) fail(ErrorKind::io, "cannot open config '" + config_path + "'");
      json j;
      try {
        j = json::parse(f);
      } catch (const json::exception& e) {
        config_error(std::string("config is not valid JSON: ") + e.what());
      }
      apply_json(c, j);
    }
    if (seed) c.seed = seed;
    if (threads) c.threads = *threads;
    if (out_dir) c.output.directory = *out_dir;
    if (plot) c.output.plot = true;
    if (data) c.data.path = *data;
    if (generator) c.data.generator = *generator;
    if (dim) c.data.dim = *dim;
    if (delta) c.coupling.delta = *delta;
    if (eps) c.coupling.eps_entropic = *eps;
    if (minibatch) c.coupling.minibatch = *minibatch;
    if (allow_unconverged) c.coupling.allow_unconverged = true;
    if (nu) c.train.nu = *nu;
    if (epochs) c.train.epochs = *epochs;
    if (batch) c.train.batch_per_pair = *batch;
    if (lr) c.train.learning_rate = *lr;
    if (schedule) c.train.schedule = *schedule;
    if (width) c.train.hidden_width = *width;
    if (depth) c.train.depth = *depth;
    if (product) c.train.product_coupling = true;
    if (mode) c.inference.mode = *mode;
    if (dt) c.inference.dt = *dt;
    if (sim_nu) c.inference.nu = *sim_nu;
    if (max_pop) c.inference.max_population = *max_pop;
    if (n_roots) c.inference.n_roots = *n_roots;
    if (repeats) c.inference.repeats = *repeats;
    if (times) c.inference.times = *times;
    if (holdout) c.eval.holdout = *holdout;
    if (probe_growth) c.eval.probe_growth = true;

    if (c.threads < 1) config_error("threads must be >= 1");
    if (!(c.coupling.delta > 0.0) || !std::isfinite(c.coupling.delta))
      config_error("delta must be > 0");

    if (gen->parsed()) {
      if (dump) c.data.output = *dump;
    } else if (cpl->parsed()) {
      if (dump) c.coupling.dump = *dump;
    } else if (trn->parsed()) {
      if (model) c.train.model = *model;
    } else if (model) {
      c.inference.model = *model;
    }

    std::error_code ec;
    fs::create_directories(c.output.directory, ec);
    if (ec) fail(ErrorKind::io, "cannot create output directory '" + c.output.directory + "'");

    if (gen->parsed()) return cmd_gen_data(c, out);
    if (cpl->parsed()) return cmd_coupling(c, out);
    if (trn->parsed()) return cmd_train(c, out);
    if (sim->parsed()) return cmd_simulate(c, out);
    return cmd_evaluate(c, out);
  } catch (const Error& e) {
    err << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace usb::cli
