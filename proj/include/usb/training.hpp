#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "usb/bridge.hpp"
#include "usb/coupling.hpp"
#include "usb/data.hpp"
#include "usb/mlp.hpp"

namespace usb {

/// Drift v, growth g and score s networks over (state, time), trained with a
/// common diffusion nu. Time inputs are internal (interval index + in-interval t).
struct ModelTriple {
  Mlp v_net;
  Mlp g_net;
  Mlp s_net;
  double nu = 1.0;
  double delta = 1.0;
  std::uint64_t seed = 0;
  std::uint64_t data_hash = 0;
  std::vector<double> original_times;

  std::size_t dim() const { return v_net.spec().input_dim; }
  std::size_t intervals() const {
    return original_times.empty() ? 0 : original_times.size() - 1;
  }

  /// v and s get d outputs, g one; g and s start with a zero output layer.
  static ModelTriple create(std::size_t dim, std::size_t hidden_width, std::size_t depth,
                            double nu, Rng& rng);
  void validate() const;
};

struct FieldValues {
  Matrix v;               // n x d
  std::vector<double> g;  // n
  Matrix s;               // n x d
};

FieldValues evaluate_fields(const ModelTriple& model, const Matrix& x, std::span<const double> t);

/// Regression batch: inputs, internal times, the score weight lambda(t) and
/// the targets; the score target enters as eps with lambda s = -eps.
struct CusmBatch {
  Matrix x;
  std::vector<double> time;    // internal (global) time fed to the networks
  std::vector<double> lambda;  // score weight at the in-interval time
  Matrix u;
  std::vector<double> g;
  Matrix eps;
  std::vector<double> weight;

  std::size_t size() const { return x.rows(); }
  static CusmBatch from_samples(std::span<const BridgeSample> samples,
                                std::span<const double> global_t, double nu);
};

struct LossTerms {
  double total = 0.0;
  double v = 0.0;
  double g = 0.0;
  double s = 0.0;
};

struct ModelGradients {
  std::vector<double> v, g, s;
};

/// mean_b w_b (|v - u|^2 + (g - g*)^2 + |lambda s + eps|^2); gradients are
/// filled when `grads` is non-null.
LossTerms cusm_loss(const ModelTriple& model, const CusmBatch& batch,
                    ModelGradients* grads = nullptr);
LossTerms cusm_loss(const ModelTriple& model, std::span<const BridgeSample> samples,
                    std::span<const double> global_t, ModelGradients* grads = nullptr);

enum class LrSchedule { constant, cosine };

struct TrainConfig {
  double delta = 1.0;
  double nu = 0.001;
  std::size_t epochs = 1000;  // optimizer steps
  std::size_t batch_per_pair = 256;
  double learning_rate = 1e-3;
  LrSchedule schedule = LrSchedule::constant;
  std::uint64_t seed = 0;
  std::size_t minibatch_ot_size = 0;
  double t_floor = kDefaultTFloor;
  std::size_t hidden_width = 256;
  std::size_t depth = 5;
  bool product_coupling = false;  // ablation: independent coupling
  OetOptions oet;
  unsigned threads = 1;

  void validate() const;
  /// Defaults for dimension d: cosine annealing over 3000 steps when d >= 50.
  static TrainConfig defaults_for_dim(std::size_t d);
};

/// gamma0 = mu0 (x) mu1 / |mu1|, gamma1 = mu0 (x) mu1 / |mu0|.
IntervalCoupling product_coupling(const Snapshot& s0, const Snapshot& s1);

std::vector<IntervalCoupling> compute_couplings(const TimeSeriesDataset& dataset,
                                                const TrainConfig& config);

struct TrainResult {
  ModelTriple model;
  std::vector<LossTerms> loss_log;  // one entry per step
  std::vector<IntervalCoupling> couplings;
};

TrainResult train(const TimeSeriesDataset& dataset, const TrainConfig& config);
/// Training on precomputed couplings (one per consecutive pair).
TrainResult train_with_couplings(const TimeSeriesDataset& dataset,
                                 std::vector<IntervalCoupling> couplings,
                                 const TrainConfig& config);

/// Draws the concatenated per-interval regression batch for one step.
CusmBatch draw_training_batch(const TimeSeriesDataset& dataset,
                              const std::vector<PairSampler>& samplers, const TrainConfig& config,
                              Rng& rng);

void write_loss_log(std::ostream& out, const std::vector<LossTerms>& log);
void save_loss_log(const std::vector<LossTerms>& log, const std::filesystem::path& path);

/// JSON container; see model_io.cpp for the layout.
void save_model(const ModelTriple& model, const std::filesystem::path& path);
ModelTriple load_model(const std::filesystem::path& path);
std::string model_to_json(const ModelTriple& model);
ModelTriple model_from_json(const std::string& text);

}  // namespace usb
