#include "rlplace/wirelength.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <map>

#include <fmt/format.h>

#include "rlplace/error.hpp"

namespace rlplace {

namespace {

struct BBox {
  int xmin = std::numeric_limits<int>::max();
  int xmax = std::numeric_limits<int>::min();
  int ymin = std::numeric_limits<int>::max();
  int ymax = std::numeric_limits<int>::min();
  int pins = 0;

  void add(Position p) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
    ++pins;
  }
  [[nodiscard]] int half_perimeter() const { return pins < 2 ? 0 : (xmax - xmin) + (ymax - ymin); }
  // Growth of the semi-perimeter when a pin at p joins; 0 when the box is
  // empty (a lone pin has no extent).
  [[nodiscard]] int growth(Position p) const {
    if (pins == 0) return 0;
    const int grown = (std::max(xmax, p.x) - std::min(xmin, p.x)) + (std::max(ymax, p.y) - std::min(ymin, p.y));
    return grown - ((xmax - xmin) + (ymax - ymin));
  }
};

// Box of the net's placed pins, ignoring `skip`.
BBox placed_box(const PlacementState& state, const Net& net, BlockId skip) {
  BBox box;
  for (const Pin& pin : net.pins) {
    if (pin.block == skip) continue;
    if (auto pos = state.position(pin.block)) box.add(*pos);
  }
  return box;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

double net_hpwl(const PlacementState& state, const Net& net) {
  return static_cast<double>(placed_box(state, net, -1).half_perimeter());
}

WirelengthReport total_hpwl(const PlacementState& state, const Netlist& netlist) {
  WirelengthReport report;
  report.per_net.reserve(static_cast<std::size_t>(netlist.num_nets()));
  for (const Net& net : netlist.nets()) {
    const double h = net_hpwl(state, net);
    report.per_net.push_back(h);
    report.total += h;
  }
  return report;
}

double delta_hpwl(const BoardArch& arch, const Netlist& netlist, const PlacementState& state, BlockId id,
                  Position pos) {
  const Block& b = netlist.block(id);
  if (state.is_placed(id)) throw PlaceError(Errc::AlreadyPlaced, fmt::format("block '{}' is already placed", b.name));
  if (!arch.in_bounds(pos) || arch.tile_type(pos) != b.type || state.occupancy(pos) >= arch.capacity(pos)) {
    throw PlaceError(Errc::IllegalPosition,
                     fmt::format("({},{}) is not a legal position for block '{}'", pos.x, pos.y, b.name));
  }
  int delta = 0;
  for (NetId n : netlist.adjacency(id)) delta += placed_box(state, netlist.net(n), id).growth(pos);
  return static_cast<double>(delta);
}

Grid<double> delta_hpwl_grid(const Netlist& netlist, const PlacementState& state, BlockId id,
                             const ActionMask& mask) {
  if (state.is_placed(id)) {
    throw PlaceError(Errc::AlreadyPlaced, fmt::format("block '{}' is already placed", netlist.block(id).name));
  }
  std::vector<BBox> boxes;
  for (NetId n : netlist.adjacency(id)) {
    BBox box = placed_box(state, netlist.net(n), id);
    if (box.pins > 0) boxes.push_back(box);
  }
  Grid<double> out(mask.width(), mask.height(), 0.0);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.at(x, y)) continue;
      int delta = 0;
      for (const BBox& box : boxes) delta += box.growth({x, y});
      out.at(x, y) = static_cast<double>(delta);
    }
  }
  return out;
}

double terminal_reward(const PlacementState& state, const Netlist& netlist, const RewardConfig& cfg) {
  const double total = total_hpwl(state, netlist).total;
  switch (cfg.mode) {
    case RewardMode::NegHpwl:
      return -total;
    case RewardMode::NegHpwlNormalized:
      if (!(cfg.normalizer > 0.0)) throw PlaceError(Errc::BadConfig, "reward normalizer must be > 0");
      return -total / cfg.normalizer;
  }
  return -total;
}

std::string export_vpr_place(const PlacementState& state, const Netlist& netlist, const BoardArch& arch,
                             std::string_view netlist_file, bool skip_unplaced) {
  std::map<std::pair<int, int>, int> next_slot;
  std::string out;
  if (!netlist_file.empty()) out += fmt::format("Netlist_File: {} Netlist_ID: SHA256:none\n", netlist_file);
  out += fmt::format("Array size: {} x {} logic blocks\n\n", arch.width(), arch.height());
  out += "#block name\tx\ty\tsubblk\tblock number\n";
  out += "#----------\t--\t--\t------\t------------\n";
  for (const Block& b : netlist.blocks()) {
    auto pos = state.position(b.id);
    if (!pos && skip_unplaced) continue;
    if (!pos) throw PlaceError(Errc::UnplacedBlock, fmt::format("block '{}' is not placed", b.name));
    const int sub = next_slot[{pos->x, pos->y}]++;
    out += fmt::format("{} {} {} {} #{}\n", b.name, pos->x, pos->y, sub, b.id);
  }
  return out;
}

PlacementState import_vpr_place(std::string_view text, const Netlist& netlist, const BoardArch& arch) {
  PlacementState state = PlacementState::empty_for(arch, netlist);
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok[0] == "Netlist_File:" || tok[0] == "Array") continue;
    if (tok.size() < 3) throw PlaceError(Errc::Syntax, fmt::format("line {}: expected '<name> <x> <y> ...'", line_no));
    auto id = netlist.find_block(tok[0]);
    if (!id) throw PlaceError(Errc::UnknownBlock, fmt::format("line {}: unknown block '{}'", line_no, tok[0]));
    int x = 0;
    int y = 0;
    auto rx = std::from_chars(tok[1].data(), tok[1].data() + tok[1].size(), x);
    auto ry = std::from_chars(tok[2].data(), tok[2].data() + tok[2].size(), y);
    if (rx.ec != std::errc{} || ry.ec != std::errc{}) {
      throw PlaceError(Errc::Syntax, fmt::format("line {}: bad coordinates", line_no));
    }
    place(arch, netlist, state, *id, {x, y});
  }
  return state;
}

std::string per_net_csv(const WirelengthReport& report) {
  std::string out = "net_id,hpwl\n";
  for (std::size_t i = 0; i < report.per_net.size(); ++i) out += fmt::format("{},{}\n", i, report.per_net[i]);
  return out;
}

}  // namespace rlplace
