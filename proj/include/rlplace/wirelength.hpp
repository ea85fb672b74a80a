#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "rlplace/board.hpp"
#include "rlplace/grid.hpp"
#include "rlplace/netlist.hpp"

namespace rlplace {

struct WirelengthReport {
  double total = 0.0;
  std::vector<double> per_net;
};

enum class RewardMode { NegHpwl, NegHpwlNormalized };

struct RewardConfig {
  double normalizer = 1.0;
  RewardMode mode = RewardMode::NegHpwlNormalized;
};

// Bounding-box semi-perimeter over the net's placed pins; 0 with fewer than
// two placed pins.
double net_hpwl(const PlacementState& state, const Net& net);
WirelengthReport total_hpwl(const PlacementState& state, const Netlist& netlist);

// total_hpwl(after placing id at pos) - total_hpwl(now). Only nets incident
// to the block are visited; state is untouched.
double delta_hpwl(const BoardArch& arch, const Netlist& netlist, const PlacementState& state, BlockId id,
                  Position pos);

// delta_hpwl for every cell where `mask` is set; other cells hold 0. Builds
// each incident net's bounding box once, so this is O(cells * degree).
Grid<double> delta_hpwl_grid(const Netlist& netlist, const PlacementState& state, BlockId id,
                             const ActionMask& mask);

double terminal_reward(const PlacementState& state, const Netlist& netlist, const RewardConfig& cfg);

// VPR .place text. Blocks sharing a cell get sub-block slots in ascending id
// order. Throws UnplacedBlock if anything is unplaced, unless
// `skip_unplaced` is set (partial files, e.g. fixed IO).
std::string export_vpr_place(const PlacementState& state, const Netlist& netlist, const BoardArch& arch,
                             std::string_view netlist_file = {}, bool skip_unplaced = false);

// Reads a .place file (header lines and '#' comments are skipped) and places
// every listed block through the checked place(). Blocks not listed stay
// unplaced.
PlacementState import_vpr_place(std::string_view text, const Netlist& netlist, const BoardArch& arch);

// `net_id,hpwl` rows with a header.
std::string per_net_csv(const WirelengthReport& report);

}  // namespace rlplace
