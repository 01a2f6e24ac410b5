#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "usb/matrix.hpp"

namespace usb {

/// Weighted point cloud observed at one time.
struct Snapshot {
  double time = 0.0;
  Matrix points;                // n x d
  std::vector<double> weights;  // n, nonnegative

  std::size_t size() const noexcept { return points.rows(); }
  std::size_t dim() const noexcept { return points.cols(); }
  double total_mass() const;
  void validate() const;

  static Snapshot uniform(double time, Matrix points);
};

using Metadata = std::vector<std::pair<std::string, std::string>>;

/// Snapshots ordered by strictly increasing observation time. Training and
/// inference run on internal times 0..K (snapshot index); the original
/// times are kept for reporting and for hold-out interpolation.
struct TimeSeriesDataset {
  std::vector<Snapshot> snapshots;
  Metadata metadata;

  std::size_t dim() const;
  std::size_t intervals() const { return snapshots.empty() ? 0 : snapshots.size() - 1; }
  std::vector<double> original_times() const;
  /// Piecewise-linear map between original and internal time.
  double to_internal(double original_time) const;
  double to_original(double internal_time) const;
  void validate() const;
};

/// Particles with log-mass weights, as produced by inference.
struct WeightedCloud {
  double time = 0.0;
  Matrix points;
  std::vector<double> log_weights;

  std::size_t size() const noexcept { return points.rows(); }
  double total_mass() const;
  std::vector<double> weights() const;
  static WeightedCloud from_snapshot(const Snapshot& s);
};

// CSV interchange: header `time,x0,...,x{d-1},weight`, `#` comment lines,
// `# key: value` comments are carried as metadata.
TimeSeriesDataset read_snapshots(std::istream& in);
TimeSeriesDataset load_snapshots(const std::filesystem::path& path);
void write_snapshots(std::ostream& out, const TimeSeriesDataset& dataset);
void save_snapshots(const TimeSeriesDataset& dataset, const std::filesystem::path& path);

void write_weighted_clouds(std::ostream& out, const std::vector<WeightedCloud>& clouds,
                           const Metadata& metadata = {});
void save_weighted_cloud(const WeightedCloud& cloud, const std::filesystem::path& path,
                         const Metadata& metadata = {});
void save_weighted_clouds(const std::vector<WeightedCloud>& clouds,
                          const std::filesystem::path& path, const Metadata& metadata = {});

std::string format_double(double v);

/// FNV-1a over the dataset's times, coordinates and weights.
std::uint64_t dataset_hash(const TimeSeriesDataset& dataset);

/// Dataset with snapshot `index` removed.
TimeSeriesDataset without_snapshot(const TimeSeriesDataset& dataset, std::size_t index);

/// Per-coordinate affine map to zero mean / unit variance, fitted on the
/// pooled (weighted) points of a dataset.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(const TimeSeriesDataset& dataset);
  Matrix apply(const Matrix& points) const;
};

}  // namespace usb
