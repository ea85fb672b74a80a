#include "rlplace/env.hpp"

#include <fmt/format.h>

#include "rlplace/error.hpp"

namespace rlplace {

PlacementEnv::PlacementEnv(const BoardArch& arch, const Netlist& netlist, PlacementState fixed,
                           std::span<const BlockId> managed)
    : arch_(&arch), netlist_(&netlist), fixed_(std::move(fixed)) {
  validate_state(arch, netlist, fixed_);
  for (BlockId id : managed) {
    const Block& b = netlist.block(id);
    if (fixed_.is_placed(id)) {
      throw PlaceError(Errc::AlreadyPlaced, fmt::format("managed block '{}' is already placed", b.name));
    }
  }
  order_ = placement_order(netlist, managed);
  reset();
}

void PlacementEnv::reset() {
  state_ = fixed_;
  step_ = 0;
}

BlockId PlacementEnv::current_block() const {
  if (done()) throw PlaceError(Errc::NotPlaced, "episode is finished");
  return order_[static_cast<std::size_t>(step_)];
}

StateTensor PlacementEnv::observe() const { return assemble_state(*arch_, state_, *netlist_, current_block()); }

GraphInput PlacementEnv::graph_input() const {
  return gather_graph_input(*netlist_, current_block(), state_, *arch_);
}

void PlacementEnv::step(Position pos) {
  place(*arch_, *netlist_, state_, current_block(), pos);
  ++step_;
}

}  // namespace rlplace
