#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "usb/matrix.hpp"

namespace usb {

enum class TerminalEvent { survived, division, death };

const char* to_string(TerminalEvent e);

constexpr std::int64_t kNoParent = -1;

struct LineageNode {
  std::int64_t id = 0;
  std::int64_t parent = kNoParent;
  double birth_time = 0.0;
  double end_time = 0.0;  // death/division time, or the final time for survivors
  TerminalEvent event = TerminalEvent::survived;
  std::vector<std::int64_t> children;
  std::vector<double> times;  // step times along the path (empty when paths are off)
  Matrix path;                // one row per entry of `times`
  std::vector<double> birth_position;
  std::vector<double> end_position;
};

/// Nodes are stored by id (nodes[k].id == k).
struct LineageTree {
  std::vector<LineageNode> nodes;

  std::size_t roots() const;
  /// Throws a protocol error when ordering or arity invariants fail.
  void validate() const;
};

struct LineageStats {
  std::size_t roots = 0;
  std::size_t divisions = 0;
  std::size_t deaths = 0;
  std::size_t survivors = 0;
  std::size_t max_depth = 0;
  std::vector<std::size_t> survivors_per_root;  // in root order
};

LineageStats lineage_stats(const LineageTree& tree);

/// `traj_id,parent_id,t,x0..x{d-1}`; parent_id is empty for roots.
void write_trajectory_csv(std::ostream& out, const LineageTree& tree);
/// One JSON object per line: {"id","parent","kind","t","x"}.
void write_events_jsonl(std::ostream& out, const LineageTree& tree);
void save_trajectory_csv(const LineageTree& tree, const std::filesystem::path& path);
void save_events_jsonl(const LineageTree& tree, const std::filesystem::path& path);

}  // namespace usb
