#pragma once

#include <span>

#include "rlplace/board.hpp"
#include "rlplace/netlist.hpp"
#include "rlplace/rng.hpp"

namespace rlplace {

// Places each block of `order` (in that order) on the legal cell with the
// smallest HPWL increase; ties go to the first cell in row-major order.
// Throws Infeasible when a block has no legal cell.
void greedy_complete(const BoardArch& arch, const Netlist& netlist, PlacementState& state,
                     std::span<const BlockId> order);

// Uniform over legal cells at every step.
void random_complete(const BoardArch& arch, const Netlist& netlist, PlacementState& state,
                     std::span<const BlockId> order, Rng& rng);

// HPWL of the greedy completion of `fixed` over `managed`, used as the
// default reward scale. Falls back to 1 when that HPWL is 0.
double greedy_normalizer(const BoardArch& arch, const Netlist& netlist, const PlacementState& fixed,
                         std::span<const BlockId> managed);

}  // namespace rlplace
