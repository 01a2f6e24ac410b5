#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <string>

#include "usb/data.hpp"
#include "usb/error.hpp"

namespace usb {

double Snapshot::total_mass() const { return sum(weights); }

void Snapshot::validate() const {
  require(weights.size() == points.rows(), ErrorKind::format,
          "snapshot at t=" + std::to_string(time) + ": weight count != point count");
  require(points.all_finite(), ErrorKind::format,
          "snapshot at t=" + std::to_string(time) + " has non-finite coordinates");
  for (double w : weights)
    require(std::isfinite(w) && w >= 0.0, ErrorKind::format,
            "snapshot at t=" + std::to_string(time) + " has a negative or non-finite weight");
  require(total_mass() > 0.0, ErrorKind::format,
          "snapshot at t=" + std::to_string(time) + " has zero total mass");
}

Snapshot Snapshot::uniform(double time, Matrix points) {
  Snapshot s;
  s.time = time;
  s.weights.assign(points.rows(), 1.0);
  s.points = std::move(points);
  return s;
}

std::size_t TimeSeriesDataset::dim() const {
  return snapshots.empty() ? 0 : snapshots.front().dim();
}

std::vector<double> TimeSeriesDataset::original_times() const {
  std::vector<double> t;
  t.reserve(snapshots.size());
  for (const auto& s : snapshots) t.push_back(s.time);
  return t;
}

double TimeSeriesDataset::to_internal(double original_time) const {
  require(snapshots.size() >= 2, ErrorKind::format, "dataset needs >= 2 snapshots");
  const auto times = original_times();
  std::size_t k = 0;
  while (k + 2 < times.size() && original_time > times[k + 1]) ++k;
  return static_cast<double>(k) +
         (original_time - times[k]) / (times[k + 1] - times[k]);
}

double TimeSeriesDataset::to_original(double internal_time) const {
  require(snapshots.size() >= 2, ErrorKind::format, "dataset needs >= 2 snapshots");
  const auto times = original_times();
  const double kmax = static_cast<double>(times.size() - 2);
  const double k = std::clamp(std::floor(internal_time), 0.0, kmax);
  const auto i = static_cast<std::size_t>(k);
  return times[i] + (internal_time - k) * (times[i + 1] - times[i]);
}

void TimeSeriesDataset::validate() const {
  require(snapshots.size() >= 2, ErrorKind::format,
          "dataset needs >= 2 distinct times, got " + std::to_string(snapshots.size()));
  const std::size_t d = dim();
  require(d >= 1, ErrorKind::format, "dataset has zero dimension");
  for (std::size_t k = 0; k < snapshots.size(); ++k) {
    snapshots[k].validate();
    require(snapshots[k].dim() == d, ErrorKind::format, "snapshots differ in dimension");
    if (k > 0)
      require(snapshots[k].time > snapshots[k - 1].time, ErrorKind::format,
              "snapshot times must be strictly increasing");
  }
}

double WeightedCloud::total_mass() const {
  double m = 0.0;
  for (double lw : log_weights) m += std::exp(lw);
  return m;
}

std::vector<double> WeightedCloud::weights() const {
  std::vector<double> w(log_weights.size());
  std::transform(log_weights.begin(), log_weights.end(), w.begin(),
                 [](double lw) { return std::exp(lw); });
  return w;
}

WeightedCloud WeightedCloud::from_snapshot(const Snapshot& s) {
  WeightedCloud c;
  c.time = s.time;
  c.points = s.points;
  c.log_weights.resize(s.weights.size());
  std::transform(s.weights.begin(), s.weights.end(), c.log_weights.begin(),
                 [](double w) { return std::log(w); });
  return c;
}

std::uint64_t dataset_hash(const TimeSeriesDataset& dataset) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](double v) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof v);
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& s : dataset.snapshots) {
    feed(s.time);
    for (double v : s.points.values()) feed(v);
    for (double w : s.weights) feed(w);
  }
  return h;
}

TimeSeriesDataset without_snapshot(const TimeSeriesDataset& dataset, std::size_t index) {
  require(index < dataset.snapshots.size(), ErrorKind::protocol, "snapshot index out of range");
  TimeSeriesDataset out;
  out.metadata = dataset.metadata;
  for (std::size_t k = 0; k < dataset.snapshots.size(); ++k)
    if (k != index) out.snapshots.push_back(dataset.snapshots[k]);
  return out;
}

Standardizer Standardizer::fit(const TimeSeriesDataset& dataset) {
  const std::size_t d = dataset.dim();
  Standardizer st;
  st.mean.assign(d, 0.0);
  st.scale.assign(d, 0.0);
  double mass = 0.0;
  for (const auto& s : dataset.snapshots)
    for (std::size_t i = 0; i < s.size(); ++i) {
      mass += s.weights[i];
      for (std::size_t c = 0; c < d; ++c) st.mean[c] += s.weights[i] * s.points(i, c);
    }
  for (double& m : st.mean) m /= mass;
  for (const auto& s : dataset.snapshots)
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t c = 0; c < d; ++c) {
        const double z = s.points(i, c) - st.mean[c];
        st.scale[c] += s.weights[i] * z * z;
      }
  for (double& v : st.scale) {
    v = std::sqrt(v / mass);
    if (!(v > 0.0)) v = 1.0;
  }
  return st;
}

Matrix Standardizer::apply(const Matrix& points) const {
  require(points.cols() == mean.size(), ErrorKind::shape, "standardizer dimension mismatch");
  Matrix out = points;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t c = 0; c < out.cols(); ++c)
      out(i, c) = (out(i, c) - mean[c]) / scale[c];
  return out;
}

}  // namespace usb
