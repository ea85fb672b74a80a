#pragma once

#include <algorithm>
#include <vector>

#include "rlplace/board.hpp"
#include "rlplace/netlist.hpp"
#include "rlplace/rng.hpp"

namespace rlplace::testing {

struct RandomInstance {
  BoardArch arch;
  Netlist netlist;
};

// Mixed-type board (CLB, IO, DSP, RAM tiles with capacities 0..2) and a
// netlist whose per-type block counts fit the board, so every instance has
// at least one complete legal placement.
inline RandomInstance random_instance(std::uint64_t seed, int max_side = 6, int max_blocks = 8) {
  Rng rng(seed);
  for (;;) {
    const int w = 2 + rng.below(max_side - 1);
    const int h = 2 + rng.below(max_side - 1);
    Grid<BlockType> types(w, h, BlockType::CLB);
    Grid<int> caps(w, h, 1);
    std::array<int, kNumBlockTypes> room{};
    for (int i = 0; i < types.size(); ++i) {
      const int r = rng.below(10);
      types[i] = r < 6 ? BlockType::CLB : r < 8 ? BlockType::IO : r < 9 ? BlockType::DSP : BlockType::RAM;
      caps[i] = rng.below(3);
      room[static_cast<std::size_t>(types[i])] += caps[i];
    }
    std::vector<BlockType> avail;
    for (int t = 0; t < kNumBlockTypes; ++t) {
      if (room[static_cast<std::size_t>(t)] > 0) avail.push_back(static_cast<BlockType>(t));
    }
    if (avail.empty()) continue;
    const int target = 2 + rng.below(max_blocks - 1);
    std::vector<Block> blocks;
    std::array<int, kNumBlockTypes> used{};
    for (int tries = 0; tries < 64 && static_cast<int>(blocks.size()) < target; ++tries) {
      const BlockType t = avail[static_cast<std::size_t>(rng.below(static_cast<int>(avail.size())))];
      auto& u = used[static_cast<std::size_t>(t)];
      if (u >= room[static_cast<std::size_t>(t)]) continue;
      ++u;
      const int id = static_cast<int>(blocks.size());
      blocks.push_back({id, "b" + std::to_string(id), t});
    }
    const int n = static_cast<int>(blocks.size());
    if (n < 2) continue;
    std::vector<Net> nets;
    const int n_nets = 1 + rng.below(n + 2);
    for (int k = 0; k < n_nets; ++k) {
      std::vector<BlockId> ids(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = i;
      rng.shuffle(ids.begin(), ids.end());
      const int pins = 2 + rng.below(std::min(n, 4) - 1);
      Net net{k, "n" + std::to_string(k), {}};
      for (int p = 0; p < pins; ++p) {
        net.pins.push_back({ids[static_cast<std::size_t>(p)], p == 0 ? PinRole::Source : PinRole::Sink});
      }
      nets.push_back(std::move(net));
    }
    // Blocks left out of every net are dropped by renumbering.
    std::vector<int> remap(static_cast<std::size_t>(n), -1);
    std::vector<Block> kept;
    for (const auto& net : nets) {
      for (const auto& p : net.pins) remap[static_cast<std::size_t>(p.block)] = 0;
    }
    for (int i = 0; i < n; ++i) {
      if (remap[static_cast<std::size_t>(i)] < 0) continue;
      remap[static_cast<std::size_t>(i)] = static_cast<int>(kept.size());
      Block b = blocks[static_cast<std::size_t>(i)];
      b.id = static_cast<int>(kept.size());
      b.name = "b" + std::to_string(b.id);
      kept.push_back(b);
    }
    for (auto& net : nets) {
      for (auto& p : net.pins) p.block = remap[static_cast<std::size_t>(p.block)];
    }
    return {BoardArch(std::move(types), std::move(caps)), Netlist(std::move(kept), std::move(nets))};
  }
}

inline std::vector<BlockId> all_blocks(const Netlist& netlist) {
  std::vector<BlockId> ids;
  for (const auto& b : netlist.blocks()) ids.push_back(b.id);
  return ids;
}

// Places each listed block on a uniformly random legal cell; stops early if
// a block has none. Returns the number placed.
inline int random_fill(const BoardArch& arch, const Netlist& netlist, PlacementState& state,
                       std::span<const BlockId> ids, Rng& rng) {
  int placed = 0;
  for (BlockId id : ids) {
    const ActionMask mask = legal_mask(arch, state, netlist.block(id).type);
    std::vector<int> legal;
    for (int i = 0; i < mask.size(); ++i) {
      if (mask[i]) legal.push_back(i);
    }
    if (legal.empty()) return placed;
    place(arch, netlist, state, id, mask.position(legal[static_cast<std::size_t>(rng.below(static_cast<int>(legal.size())))]));
    ++placed;
  }
  return placed;
}

}  // namespace rlplace::testing
