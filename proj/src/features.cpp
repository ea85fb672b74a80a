#include "rlplace/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "rlplace/error.hpp"
#include "rlplace/wirelength.hpp"

namespace rlplace {

Grid<double> capacity_channel(const BoardArch& arch, const PlacementState& state) {
  Grid<double> out(arch.width(), arch.height(), 0.0);
  const auto& caps = arch.tile_capacities();
  const auto& occ = state.occupancy();
  for (int i = 0; i < out.size(); ++i) out[i] = static_cast<double>(caps[i] - occ[i]);
  return out;
}

Grid<double> incidence_channel(const Netlist& netlist, const PlacementState& state, PinRole role) {
  Grid<double> out(state.occupancy().width(), state.occupancy().height(), 0.0);
  for (BlockId id = 0; id < state.num_blocks(); ++id) {
    if (auto pos = state.position(id)) out.at(*pos) += netlist.role_count(id, role);
  }
  return out;
}

Grid<double> wire_mask_channel(const Netlist& netlist, const PlacementState& state, BlockId id,
                               const ActionMask& mask) {
  Grid<double> out = delta_hpwl_grid(netlist, state, id, mask);
  double max_legal = 0.0;
  for (int i = 0; i < out.size(); ++i) {
    if (mask[i]) max_legal = std::max(max_legal, out[i]);
  }
  const double sentinel = max_legal + 1.0;
  for (int i = 0; i < out.size(); ++i) {
    if (!mask[i]) out[i] = sentinel;
  }
  return out;
}

void normalize_channel(Grid<double>& channel) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : channel.cells()) {
    if (!std::isfinite(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi - lo;
  for (double& v : channel.cells()) {
    if (!std::isfinite(v)) continue;
    v = span > 0.0 ? (v - lo) / span : 0.0;
  }
}

std::array<Grid<double>, kNumChannels> raw_channels(const BoardArch& arch, const PlacementState& state,
                                                    const Netlist& netlist, BlockId id, const ActionMask& mask) {
  return {capacity_channel(arch, state), incidence_channel(netlist, state, PinRole::Source),
          incidence_channel(netlist, state, PinRole::Sink), wire_mask_channel(netlist, state, id, mask)};
}

StateTensor assemble_state(const BoardArch& arch, const PlacementState& state, const Netlist& netlist, BlockId id) {
  const Block& b = netlist.block(id);
  if (state.is_placed(id)) throw PlaceError(Errc::AlreadyPlaced, fmt::format("block '{}' is already placed", b.name));
  StateTensor s;
  s.block = id;
  s.current_mask = legal_mask(arch, state, b.type);
  s.channels = raw_channels(arch, state, netlist, id, s.current_mask);
  for (auto& c : s.channels) normalize_channel(c);
  s.current_block = node_features(netlist, id, state, arch);
  return s;
}

std::string channel_csv(const Grid<double>& channel) {
  std::string out;
  for (int y = 0; y < channel.height(); ++y) {
    for (int x = 0; x < channel.width(); ++x) {
      if (x > 0) out += ',';
      out += fmt::format("{}", channel.at(x, y));
    }
    out += '\n';
  }
  return out;
}

}  // namespace rlplace
