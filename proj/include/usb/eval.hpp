#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "usb/data.hpp"
#include "usb/inference.hpp"
#include "usb/training.hpp"

namespace usb {

struct W1Options {
  std::size_t exact_threshold = 4000000;  // n_a * n_b above this uses the entropic solver
  double entropic_factor = 0.005;         // eps = factor * median pairwise distance
  std::size_t max_iter = 5000;
  double tol = 1e-9;
};

struct W1Result {
  double value = 0.0;
  bool exact = true;
  double epsilon = 0.0;  // entropic regularization, 0 for the exact solver
};

/// 1-Wasserstein distance between the normalized weighted clouds.
W1Result w1_detailed(const WeightedCloud& a, const WeightedCloud& b, const W1Options& options = {});
double w1(const WeightedCloud& a, const WeightedCloud& b, const W1Options& options = {});

/// |m_pred - m_true| / m_true.
double rme(double mass_pred, double mass_true);
double rme(const WeightedCloud& pred, const WeightedCloud& truth);

/// Pearson correlation; empty when either side has zero variance.
std::optional<double> pearson(std::span<const double> a, std::span<const double> b);
std::optional<double> growth_correlation(const ModelTriple& model, const Matrix& probe,
                                         double t_probe, std::span<const double> true_g);

enum class InferenceMode { continuous, branching };

struct EvalOptions {
  InferenceMode mode = InferenceMode::continuous;
  double dt = 0.01;            // internal time units
  double nu = 0.0;             // <= 0 keeps the model's nu
  std::uint64_t seed = 0;
  bool standardize = true;     // W1 on per-coordinate standardized data
  std::size_t max_population = 1000000;
  W1Options w1;
};

struct EvalReport {
  std::vector<double> times;  // original time units
  std::vector<double> w1;
  std::vector<double> rme;
  std::vector<double> predicted_mass;
  std::vector<double> true_mass;
  std::vector<bool> w1_exact;
  double w1_epsilon = 0.0;  // largest entropic eps used, 0 when all exact
  double mean_w1 = 0.0;
  double mean_rme = 0.0;
  std::optional<double> growth_pearson;
  double runtime_seconds = 0.0;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<std::size_t> held_out;  // snapshot indices, hold-one-out only

  void finalize();
};

/// Simulates from the first snapshot through every later snapshot time and
/// compares with the observed snapshots.
EvalReport evaluate_model(const ModelTriple& model, const TimeSeriesDataset& dataset,
                          const EvalOptions& options);

/// Trains without snapshot `held` (1..K-1), simulates from the first snapshot
/// to its time and reports the single held-out W1 and RME.
EvalReport hold_one_out(const TimeSeriesDataset& dataset, const TrainConfig& config,
                        std::size_t held, const EvalOptions& options);
/// Every interior index; means over the held-out points.
EvalReport hold_one_out_all(const TimeSeriesDataset& dataset, const TrainConfig& config,
                            const EvalOptions& options);

std::string report_to_json(const EvalReport& report);
void write_report_csv(std::ostream& out, const EvalReport& report);
void save_report(const EvalReport& report, const std::filesystem::path& json_path,
                 const std::filesystem::path& csv_path);

/// Stable hex digest of a string (FNV-1a 64).
std::string hash_hex(const std::string& text);

}  // namespace usb
