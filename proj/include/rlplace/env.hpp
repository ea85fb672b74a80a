#pragma once

#include <span>
#include <vector>

#include "rlplace/board.hpp"
#include "rlplace/features.hpp"
#include "rlplace/netlist.hpp"
#include "rlplace/nn.hpp"

namespace rlplace {

// Episodic placement MDP: starting from a fixed partial placement, the
// managed blocks are placed one per step in placement_order. The arch and
// netlist are borrowed and must outlive the environment.
class PlacementEnv {
 public:
  // Throws UnknownBlock, AlreadyPlaced (a managed block is already in
  // `fixed`) or IllegalPosition (fixed placement fails validation).
  PlacementEnv(const BoardArch& arch, const Netlist& netlist, PlacementState fixed, std::span<const BlockId> managed);

  [[nodiscard]] const BoardArch& arch() const { return *arch_; }
  [[nodiscard]] const Netlist& netlist() const { return *netlist_; }
  [[nodiscard]] const PlacementState& fixed() const { return fixed_; }
  [[nodiscard]] const std::vector<BlockId>& order() const { return order_; }
  [[nodiscard]] int episode_length() const { return static_cast<int>(order_.size()); }

  void reset();
  [[nodiscard]] bool done() const { return step_ >= episode_length(); }
  [[nodiscard]] int step_index() const { return step_; }
  [[nodiscard]] BlockId current_block() const;
  [[nodiscard]] const PlacementState& state() const { return state_; }

  [[nodiscard]] StateTensor observe() const;
  [[nodiscard]] GraphInput graph_input() const;
  // Places the current block; throws IllegalPosition on a masked cell.
  void step(Position pos);

 private:
  const BoardArch* arch_;
  const Netlist* netlist_;
  PlacementState fixed_;
  std::vector<BlockId> order_;
  PlacementState state_;
  int step_ = 0;
};

}  // namespace rlplace
