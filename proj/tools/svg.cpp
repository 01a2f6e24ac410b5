#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "usb/error.hpp"

namespace usb::cli {
namespace {

constexpr double kSize = 640.0, kPad = 30.0;
const char* const kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

struct Frame {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;

  void add(double x, double y) {
    x0 = std::min(x0, x);
    x1 = std::max(x1, x);
    y0 = std::min(y0, y);
    y1 = std::max(y1, y);
  }
  double px(double x) const { return kPad + (x - x0) / std::max(x1 - x0, 1e-12) * (kSize - 2 * kPad); }
  double py(double y) const {
    return kSize - kPad - (y - y0) / std::max(y1 - y0, 1e-12) * (kSize - 2 * kPad);
  }
};

std::ofstream open_svg(const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize << "\" height=\"" << kSize
    << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  return f;
}

}  // namespace

void save_scatter_svg(const std::vector<WeightedCloud>& clouds, const std::filesystem::path& path) {
  Frame fr;
  double wmax = 0.0;
  for (const auto& c : clouds) {
    require(c.points.cols() >= 2, ErrorKind::config, "scatter plots need d >= 2");
    for (std::size_t i = 0; i < c.size(); ++i) {
      fr.add(c.points(i, 0), c.points(i, 1));
      wmax = std::max(wmax, std::exp(c.log_weights[i]));
    }
  }
  auto f = open_svg(path);
  for (std::size_t k = 0; k < clouds.size(); ++k) {
    const auto& c = clouds[k];
    for (std::size_t i = 0; i < c.size(); ++i) {
      const double r = 1.0 + 2.5 * std::sqrt(std::exp(c.log_weights[i]) / wmax);
      f << "<circle cx=\"" << fr.px(c.points(i, 0)) << "\" cy=\"" << fr.py(c.points(i, 1))
        << "\" r=\"" << r << "\" fill=\"" << kPalette[k % 8] << "\" fill-opacity=\"0.6\"/>\n";
    }
  }
  f << "</svg>\n";
  if (!f) fail(ErrorKind::io, "write failed for '" + path.string() + "'");
}

void save_lineage_svg(const std::vector<LineageTree>& trees, const std::filesystem::path& path) {
  Frame fr;
  for (const auto& t : trees)
    for (const auto& n : t.nodes) {
      require(n.path.cols() >= 2 || n.path.rows() == 0, ErrorKind::config,
              "lineage plots need d >= 2");
      for (std::size_t r = 0; r < n.path.rows(); ++r) fr.add(n.path(r, 0), n.path(r, 1));
    }
  auto f = open_svg(path);
  for (std::size_t k = 0; k < trees.size(); ++k)
    for (const auto& n : trees[k].nodes) {
      if (n.path.rows() == 0) continue;
      f << "<polyline fill=\"none\" stroke=\"" << kPalette[k % 8] << "\" stroke-width=\"1\" points=\"";
      for (std::size_t r = 0; r < n.path.rows(); ++r)
        f << (r ? " " : "") << fr.px(n.path(r, 0)) << ',' << fr.py(n.path(r, 1));
      f << "\"/>\n";
      const auto last = n.path.rows() - 1;
      if (n.event == TerminalEvent::division)
        f << "<circle cx=\"" << fr.px(n.path(last, 0)) << "\" cy=\"" << fr.py(n.path(last, 1))
          << "\" r=\"3\" fill=\"black\"/>\n";
      else if (n.event == TerminalEvent::death)
        f << "<text x=\"" << fr.px(n.path(last, 0)) << "\" y=\"" << fr.py(n.path(last, 1))
          << "\" font-size=\"10\" text-anchor=\"middle\">x</text>\n";
    }
  f << "</svg>\n";
  if (!f) fail(ErrorKind::io, "write failed for '" + path.string() + "'");
}

}  // namespace usb::cli
