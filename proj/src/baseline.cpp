#include "rlplace/baseline.hpp"

#include <fmt/format.h>

#include "rlplace/error.hpp"
#include "rlplace/wirelength.hpp"

namespace rlplace {

void greedy_complete(const BoardArch& arch, const Netlist& netlist, PlacementState& state,
                     std::span<const BlockId> order) {
  for (BlockId id : order) {
    const Block& b = netlist.block(id);
    const ActionMask mask = legal_mask(arch, state, b.type);
    const Grid<double> delta = delta_hpwl_grid(netlist, state, id, mask);
    int best = -1;
    for (int i = 0; i < mask.size(); ++i) {
      if (mask[i] && (best < 0 || delta[i] < delta[best])) best = i;
    }
    if (best < 0) throw PlaceError(Errc::Infeasible, fmt::format("no legal cell left for block '{}'", b.name));
    place(arch, netlist, state, id, mask.position(best));
  }
}

void random_complete(const BoardArch& arch, const Netlist& netlist, PlacementState& state,
                     std::span<const BlockId> order, Rng& rng) {
  for (BlockId id : order) {
    const Block& b = netlist.block(id);
    const ActionMask mask = legal_mask(arch, state, b.type);
    std::vector<int> legal;
    for (int i = 0; i < mask.size(); ++i) {
      if (mask[i]) legal.push_back(i);
    }
    if (legal.empty()) throw PlaceError(Errc::Infeasible, fmt::format("no legal cell left for block '{}'", b.name));
    place(arch, netlist, state, id, mask.position(legal[static_cast<std::size_t>(rng.below(static_cast<int>(legal.size())))]));
  }
}

double greedy_normalizer(const BoardArch& arch, const Netlist& netlist, const PlacementState& fixed,
                         std::span<const BlockId> managed) {
  PlacementState s = fixed;
  const auto order = placement_order(netlist, managed);
  greedy_complete(arch, netlist, s, order);
  const double total = total_hpwl(s, netlist).total;
  return total > 0.0 ? total : 1.0;
}

}  // namespace rlplace
