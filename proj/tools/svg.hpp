#pragma once

#include <filesystem>
#include <vector>

#include "usb/data.hpp"
#include "usb/lineage.hpp"

namespace usb::cli {

/// Scatter of the first two coordinates of each cloud, one colour per cloud,
/// marker area scaled by weight.
void save_scatter_svg(const std::vector<WeightedCloud>& clouds, const std::filesystem::path& path);

/// Lineage paths as polylines (first two coordinates), with division and
/// death markers.
void save_lineage_svg(const std::vector<LineageTree>& trees, const std::filesystem::path& path);

}  // namespace usb::cli
