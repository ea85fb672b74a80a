#pragma once

#include <array>
#include <string>

#include "rlplace/board.hpp"
#include "rlplace/grid.hpp"
#include "rlplace/netlist.hpp"

namespace rlplace {

// Fixed stacking order of the board image.
enum class Channel : int { Capacity = 0, Input = 1, Output = 2, WireMask = 3 };
inline constexpr int kNumChannels = 4;

struct StateTensor {
  std::array<Grid<double>, kNumChannels> channels;
  BlockId block = 0;
  NodeFeatures current_block{};
  ActionMask current_mask;

  [[nodiscard]] const Grid<double>& channel(Channel c) const { return channels[static_cast<std::size_t>(c)]; }
  [[nodiscard]] int width() const { return current_mask.width(); }
  [[nodiscard]] int height() const { return current_mask.height(); }
};

// Remaining capacity per cell.
Grid<double> capacity_channel(const BoardArch& arch, const PlacementState& state);

// Per cell, the number of `role` pins held by the blocks placed there
// (Source -> input channel, Sink -> output channel).
Grid<double> incidence_channel(const Netlist& netlist, const PlacementState& state, PinRole role);

// delta_hpwl on legal cells; illegal cells carry the sentinel
// (max legal delta + 1).
Grid<double> wire_mask_channel(const Netlist& netlist, const PlacementState& state, BlockId id,
                               const ActionMask& mask);

// Min-max scaling of every finite entry into [0, 1]; a constant channel maps
// to all zeros.
void normalize_channel(Grid<double>& channel);

// Raw channels (not normalized), in Channel order.
std::array<Grid<double>, kNumChannels> raw_channels(const BoardArch& arch, const PlacementState& state,
                                                    const Netlist& netlist, BlockId id, const ActionMask& mask);

StateTensor assemble_state(const BoardArch& arch, const PlacementState& state, const Netlist& netlist, BlockId id);

// y rows of comma-separated values.
std::string channel_csv(const Grid<double>& channel);

}  // namespace rlplace
