#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rlplace/grid.hpp"
#include "rlplace/netlist.hpp"

namespace rlplace {

// Typed, capacitated tile grid. Capacity 0 tiles are allowed and accept
// nothing.
class BoardArch {
 public:
  BoardArch() = default;
  BoardArch(Grid<BlockType> tile_type, Grid<int> tile_capacity);

  // CLB interior, IO ring (corners included) of the given capacity.
  static BoardArch perimeter_io(int width, int height, int io_capacity);

  [[nodiscard]] int width() const { return tile_type_.width(); }
  [[nodiscard]] int height() const { return tile_type_.height(); }
  [[nodiscard]] bool in_bounds(Position p) const { return tile_type_.contains(p); }
  [[nodiscard]] BlockType tile_type(Position p) const { return tile_type_.at(p); }
  [[nodiscard]] int capacity(Position p) const { return tile_capacity_.at(p); }
  [[nodiscard]] const Grid<BlockType>& tile_types() const { return tile_type_; }
  [[nodiscard]] const Grid<int>& tile_capacities() const { return tile_capacity_; }
  [[nodiscard]] int total_capacity(BlockType type) const;

  friend bool operator==(const BoardArch&, const BoardArch&) = default;

 private:
  Grid<BlockType> tile_type_;
  Grid<int> tile_capacity_;
};

// Header `arch <width> <height>`, then `height` rows (y = 0 first) of
// `width` TYPE:CAPACITY tokens.
BoardArch parse_arch(std::string_view text);
std::string serialize_arch(const BoardArch& arch);

// Block -> position assignment plus the per-cell occupancy it implies.
// Mutated only through place / unplace / reset, which keep the two views
// consistent.
class PlacementState {
 public:
  PlacementState() = default;
  PlacementState(int num_blocks, int width, int height);
  static PlacementState empty_for(const BoardArch& arch, const Netlist& netlist) {
    return PlacementState(netlist.num_blocks(), arch.width(), arch.height());
  }

  [[nodiscard]] int num_blocks() const { return static_cast<int>(assignment_.size()); }
  [[nodiscard]] int num_placed() const { return num_placed_; }
  [[nodiscard]] bool is_placed(BlockId id) const;
  [[nodiscard]] std::optional<Position> position(BlockId id) const;
  [[nodiscard]] int occupancy(Position p) const { return occupancy_.at(p); }
  [[nodiscard]] const Grid<int>& occupancy() const { return occupancy_; }
  [[nodiscard]] std::span<const std::optional<Position>> assignment() const { return assignment_; }
  [[nodiscard]] std::vector<BlockId> placed_blocks() const;

  friend bool operator==(const PlacementState&, const PlacementState&) = default;

 private:
  friend void place(const BoardArch&, const Netlist&, PlacementState&, BlockId, Position);
  friend void unplace(PlacementState&, BlockId);

  void check_block(BlockId id) const;

  std::vector<std::optional<Position>> assignment_;
  Grid<int> occupancy_;
  int num_placed_ = 0;
};

ActionMask legal_mask(const BoardArch& arch, const PlacementState& state, BlockType type);
int count_legal(const ActionMask& mask);

// Throws IllegalPosition, AlreadyPlaced or UnknownBlock.
void place(const BoardArch& arch, const Netlist& netlist, PlacementState& state, BlockId id, Position pos);
// Throws NotPlaced or UnknownBlock.
void unplace(PlacementState& state, BlockId id);
// Clears every block not in `keep`.
void reset(PlacementState& state, std::span<const BlockId> keep);

// Full-state validator: recounts occupancy from the assignment and checks
// type and capacity for every cell. Throws IllegalPosition (or
// DimensionMismatch for a state built for another board) on the first
// violation.
void validate_state(const BoardArch& arch, const Netlist& netlist, const PlacementState& state);

}  // namespace rlplace
