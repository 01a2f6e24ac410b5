#include "usb/lineage.hpp"

#include <fstream>
#include <ostream>
#include <string>

#include "usb/data.hpp"
#include "usb/error.hpp"

namespace usb {

const char* to_string(TerminalEvent e) {
  switch (e) {
    case TerminalEvent::survived: return "survived";
    case TerminalEvent::division: return "division";
    case TerminalEvent::death: return "death";
  }
  return "unknown";
}

std::size_t LineageTree::roots() const {
  std::size_t n = 0;
  for (const auto& node : nodes) n += node.parent == kNoParent;
  return n;
}

void LineageTree::validate() const {
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const auto& n = nodes[k];
    const std::string where = "lineage node " + std::to_string(k) + ": ";
    require(n.id == static_cast<std::int64_t>(k), ErrorKind::protocol, where + "id out of order");
    if (n.parent != kNoParent) {
      require(n.parent >= 0 && n.parent < n.id, ErrorKind::protocol, where + "bad parent");
      require(nodes[n.parent].birth_time < n.birth_time, ErrorKind::protocol,
              where + "born no later than its parent");
    }
    require(n.end_time >= n.birth_time, ErrorKind::protocol, where + "ends before birth");
    switch (n.event) {
      case TerminalEvent::division:
        require(n.children.size() == 2, ErrorKind::protocol, where + "division without 2 children");
        break;
      case TerminalEvent::death:
      case TerminalEvent::survived:
        require(n.children.empty(), ErrorKind::protocol, where + "leaf with children");
        break;
    }
    for (auto c : n.children)
      require(c > n.id && c < static_cast<std::int64_t>(nodes.size()) && nodes[c].parent == n.id,
              ErrorKind::protocol, where + "child link mismatch");
    require(n.path.rows() == n.times.size(), ErrorKind::protocol, where + "path/time mismatch");
  }
}

LineageStats lineage_stats(const LineageTree& tree) {
  LineageStats st;
  std::vector<std::size_t> depth(tree.nodes.size(), 0), root_of(tree.nodes.size(), 0);
  for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
    const auto& n = tree.nodes[k];
    if (n.parent == kNoParent) {
      root_of[k] = st.roots++;
      st.survivors_per_root.push_back(0);
    } else {
      depth[k] = depth[n.parent] + 1;
      root_of[k] = root_of[n.parent];
    }
    st.max_depth = std::max(st.max_depth, depth[k]);
    switch (n.event) {
      case TerminalEvent::division: ++st.divisions; break;
      case TerminalEvent::death: ++st.deaths; break;
      case TerminalEvent::survived:
        ++st.survivors;
        ++st.survivors_per_root[root_of[k]];
        break;
    }
  }
  return st;
}

void write_trajectory_csv(std::ostream& out, const LineageTree& tree) {
  std::size_t d = 0;
  for (const auto& n : tree.nodes) d = std::max(d, n.path.cols());
  out << "traj_id,parent_id,t";
  for (std::size_t c = 0; c < d; ++c) out << ",x" << c;
  out << '\n';
  for (const auto& n : tree.nodes)
    for (std::size_t r = 0; r < n.times.size(); ++r) {
      out << n.id << ',';
      if (n.parent != kNoParent) out << n.parent;
      out << ',' << format_double(n.times[r]);
      for (double v : n.path.row(r)) out << ',' << format_double(v);
      out << '\n';
    }
}

namespace {

void event_line(std::ostream& out, std::int64_t id, std::int64_t parent, const char* kind,
                double t, std::span<const double> x) {
  out << "{\"id\":" << id << ",\"parent\":";
  if (parent == kNoParent)
    out << "null";
  else
    out << parent;
  out << ",\"kind\":\"" << kind << "\",\"t\":" << format_double(t) << ",\"x\":[";
  for (std::size_t c = 0; c < x.size(); ++c) out << (c ? "," : "") << format_double(x[c]);
  out << "]}\n";
}

}  // namespace

void write_events_jsonl(std::ostream& out, const LineageTree& tree) {
  for (const auto& n : tree.nodes) {
    event_line(out, n.id, n.parent, "birth", n.birth_time, n.birth_position);
    if (n.event == TerminalEvent::division)
      event_line(out, n.id, n.parent, "division", n.end_time, n.end_position);
    else if (n.event == TerminalEvent::death)
      event_line(out, n.id, n.parent, "death", n.end_time, n.end_position);
  }
}

namespace {

template <class F>
void write_file(const std::filesystem::path& path, F&& body) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  body(f);
  if (!f) fail(ErrorKind::io, "write failed for '" + path.string() + "'");
}

}  // namespace

void save_trajectory_csv(const LineageTree& tree, const std::filesystem::path& path) {
  write_file(path, [&](std::ostream& o) { write_trajectory_csv(o, tree); });
}

void save_events_jsonl(const LineageTree& tree, const std::filesystem::path& path) {
  write_file(path, [&](std::ostream& o) { write_events_jsonl(o, tree); });
}

}  // namespace usb
