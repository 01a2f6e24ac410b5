#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "usb/data.hpp"
#include "usb/lineage.hpp"
#include "usb/rng.hpp"
#include "usb/training.hpp"

namespace usb {

/// Drift, growth and score fields evaluated on a batch of particles at one
/// internal time, plus the diffusion used to simulate them.
class Dynamics {
 public:
  virtual ~Dynamics() = default;
  virtual std::size_t dim() const = 0;
  virtual double nu() const = 0;
  /// v and s are resized to x's shape, g to x.rows().
  virtual void evaluate(const Matrix& x, double t, Matrix& v, std::vector<double>& g,
                        Matrix& s) const = 0;
};

class ModelDynamics final : public Dynamics {
 public:
  /// nu <= 0 keeps the model's training diffusion.
  explicit ModelDynamics(const ModelTriple& model, double nu = 0.0);
  std::size_t dim() const override { return model_->dim(); }
  double nu() const override { return nu_; }
  void evaluate(const Matrix& x, double t, Matrix& v, std::vector<double>& g,
                Matrix& s) const override;

 private:
  const ModelTriple* model_;
  double nu_;
};

/// Spatially constant fields.
class ConstantDynamics final : public Dynamics {
 public:
  ConstantDynamics(std::vector<double> v, double g, std::vector<double> s, double nu);
  std::size_t dim() const override { return v_.size(); }
  double nu() const override { return nu_; }
  void evaluate(const Matrix& x, double t, Matrix& v, std::vector<double>& g,
                Matrix& s) const override;

 private:
  std::vector<double> v_;
  double g_;
  std::vector<double> s_;
  double nu_;
};

struct ContinuousResult {
  std::vector<WeightedCloud> clouds;  // one per requested time
  std::size_t excluded = 0;           // particles dropped for non-finite state
};

/// Euler-Maruyama on x with dx = (v + nu^2/2 s) dt + nu dW and d ln w = g dt.
/// Steps never cross a requested time; each segment uses the largest step
/// <= dt that divides it evenly. Initial log weights come from `start_log_weights`.
ContinuousResult continuous_inference(const Dynamics& dyn, const Matrix& start,
                                      std::span<const double> start_log_weights, double t0,
                                      std::span<const double> times, double dt, Rng& rng);
/// Unit-weight start cloud, single end time.
WeightedCloud continuous_inference(const Dynamics& dyn, const Snapshot& start, double t0,
                                   double t1, double dt, Rng& rng);

struct BranchingOptions {
  double dt = 0.01;
  std::size_t max_population = 1000000;
  bool record_paths = true;
};

struct BranchingResult {
  WeightedCloud survivors;  // unit weights
  std::vector<std::int64_t> survivor_ids;  // lineage node of each survivor row
  LineageTree tree;
  bool truncated = false;   // stopped early at max_population
  double end_time = 0.0;    // time reached
  std::size_t clipped = 0;  // steps with |g| dt > 1
  std::size_t excluded = 0; // particles dropped for non-finite state
};

/// Birth-death simulation: each step moves every cell by the same SDE, then
/// with probability min(|g| dt, 1) it divides into two exact copies (g >= 0)
/// or dies (g < 0). Cells are processed breadth-first by step in id order.
BranchingResult branching_inference(const Dynamics& dyn, const Matrix& roots, double t0,
                                    double t1, const BranchingOptions& options, Rng& rng);

}  // namespace usb
