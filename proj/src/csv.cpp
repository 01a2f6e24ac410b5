#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "usb/data.hpp"
#include "usb/error.hpp"

namespace usb {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_number(std::string_view field, std::size_t line_no) {
  double v = 0.0;
  const auto* first = field.data();
  const auto* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || field.empty())
    fail(ErrorKind::format,
         "line " + std::to_string(line_no) + ": not a number: '" + std::string(field) + "'");
  return v;
}

void check_header(const std::vector<std::string_view>& cols, std::size_t line_no) {
  const bool ok = cols.size() >= 3 && cols.front() == "time" && cols.back() == "weight";
  if (ok) {
    for (std::size_t c = 1; c + 1 < cols.size(); ++c)
      if (cols[c] != "x" + std::to_string(c - 1)) {
        fail(ErrorKind::format, "line " + std::to_string(line_no) +
                                    ": expected column x" + std::to_string(c - 1));
      }
    return;
  }
  fail(ErrorKind::format, "line " + std::to_string(line_no) +
                              ": header must be time,x0,...,x{d-1},weight");
}

void write_metadata(std::ostream& out, const Metadata& metadata) {
  for (const auto& [k, v] : metadata) out << "# " << k << ": " << v << '\n';
}

void write_header(std::ostream& out, std::size_t d) {
  out << "time";
  for (std::size_t c = 0; c < d; ++c) out << ",x" << c;
  out << ",weight\n";
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  return f;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

TimeSeriesDataset read_snapshots(std::istream& in) {
  TimeSeriesDataset ds;
  std::map<double, Snapshot> by_time;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto s = trim(line);
    if (s.empty()) continue;
    if (s.front() == '#') {
      const auto body = trim(s.substr(1));
      const auto colon = body.find(':');
      if (colon != std::string_view::npos)
        ds.metadata.emplace_back(std::string(trim(body.substr(0, colon))),
                                 std::string(trim(body.substr(colon + 1))));
      continue;
    }
    const auto cols = split_commas(s);
    if (!have_header) {
      check_header(cols, line_no);
      width = cols.size();
      have_header = true;
      continue;
    }
    if (cols.size() != width)
      fail(ErrorKind::format, "line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(width) + " fields, found " +
                                  std::to_string(cols.size()));
    const double t = parse_number(cols.front(), line_no);
    const double w = parse_number(cols.back(), line_no);
    if (!std::isfinite(t)) fail(ErrorKind::format, "line " + std::to_string(line_no) + ": bad time");
    if (!(w >= 0.0) || !std::isfinite(w))
      fail(ErrorKind::format, "line " + std::to_string(line_no) + ": negative weight");
    std::vector<double> x(width - 2);
    for (std::size_t c = 0; c < x.size(); ++c) {
      x[c] = parse_number(cols[c + 1], line_no);
      if (!std::isfinite(x[c]))
        fail(ErrorKind::format, "line " + std::to_string(line_no) + ": non-finite coordinate");
    }
    auto& snap = by_time[t];
    snap.time = t;
    snap.points.append_row(x);
    snap.weights.push_back(w);
  }
  if (!have_header) fail(ErrorKind::format, "missing header line");
  for (auto& [t, snap] : by_time) ds.snapshots.push_back(std::move(snap));
  ds.validate();
  return ds;
}

TimeSeriesDataset load_snapshots(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::io, "cannot open '" + path.string() + "'");
  return read_snapshots(f);
}

void write_snapshots(std::ostream& out, const TimeSeriesDataset& dataset) {
  require(!dataset.snapshots.empty(), ErrorKind::format, "cannot write an empty dataset");
  const std::size_t d = dataset.dim();
  write_metadata(out, dataset.metadata);
  write_header(out, d);
  for (const auto& s : dataset.snapshots) {
    require(s.dim() == d && s.weights.size() == s.size(), ErrorKind::shape,
            "snapshot shape mismatch while writing");
    const std::string ts = format_double(s.time);
    for (std::size_t i = 0; i < s.size(); ++i) {
      out << ts;
      for (std::size_t c = 0; c < d; ++c) out << ',' << format_double(s.points(i, c));
      out << ',' << format_double(s.weights[i]) << '\n';
    }
  }
}

void save_snapshots(const TimeSeriesDataset& dataset, const std::filesystem::path& path) {
  require(!dataset.snapshots.empty(), ErrorKind::format, "cannot write an empty dataset");
  auto f = open_out(path);
  write_snapshots(f, dataset);
  if (!f) fail(ErrorKind::io, "write failed for '" + path.string() + "'");
}

void write_weighted_clouds(std::ostream& out, const std::vector<WeightedCloud>& clouds,
                           const Metadata& metadata) {
  require(!clouds.empty(), ErrorKind::format, "no clouds to write");
  const std::size_t d = clouds.front().points.cols();
  write_metadata(out, metadata);
  write_header(out, d);
  for (const auto& c : clouds) {
    require(c.points.cols() == d && c.log_weights.size() == c.size(), ErrorKind::shape,
            "cloud shape mismatch while writing");
    const std::string ts = format_double(c.time);
    for (std::size_t i = 0; i < c.size(); ++i) {
      out << ts;
      for (std::size_t k = 0; k < d; ++k) out << ',' << format_double(c.points(i, k));
      out << ',' << format_double(std::exp(c.log_weights[i])) << '\n';
    }
  }
}

void save_weighted_cloud(const WeightedCloud& cloud, const std::filesystem::path& path,
                         const Metadata& metadata) {
  save_weighted_clouds({cloud}, path, metadata);
}

void save_weighted_clouds(const std::vector<WeightedCloud>& clouds,
                          const std::filesystem::path& path, const Metadata& metadata) {
  auto f = open_out(path);
  write_weighted_clouds(f, clouds, metadata);
  if (!f) fail(ErrorKind::io, "write failed for '" + path.string() + "'");
}

}  // namespace usb
