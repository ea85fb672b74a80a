#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace rlplace {

enum class BlockType : std::uint8_t { CLB = 0, IO = 1, DSP = 2, RAM = 3 };
inline constexpr int kNumBlockTypes = 4;

std::string_view to_string(BlockType type);
std::optional<BlockType> parse_block_type(std::string_view tag);

using BlockId = int;
using NetId = int;

struct Block {
  BlockId id = 0;
  std::string name;
  BlockType type = BlockType::CLB;
};

enum class PinRole : std::uint8_t { Source, Sink };

struct Pin {
  BlockId block = 0;
  PinRole role = PinRole::Sink;
};

struct Net {
  NetId id = 0;
  std::string name;
  std::vector<Pin> pins;
};

// Immutable after construction. The constructor checks every structural
// invariant (dense ids, unique names, one source and >= 1 sink per net, no
// dangling or duplicated pins) and derives the adjacency from the pin lists.
class Netlist {
 public:
  Netlist() = default;
  Netlist(std::vector<Block> blocks, std::vector<Net> nets);

  [[nodiscard]] int num_blocks() const { return static_cast<int>(blocks_.size()); }
  [[nodiscard]] int num_nets() const { return static_cast<int>(nets_.size()); }
  [[nodiscard]] std::span<const Block> blocks() const { return blocks_; }
  [[nodiscard]] std::span<const Net> nets() const { return nets_; }
  [[nodiscard]] const Block& block(BlockId id) const;
  [[nodiscard]] const Net& net(NetId id) const { return nets_.at(static_cast<std::size_t>(id)); }
  [[nodiscard]] bool contains(BlockId id) const { return id >= 0 && id < num_blocks(); }

  // Incident nets of a block, ascending, each net once.
  [[nodiscard]] std::span<const NetId> adjacency(BlockId id) const;
  // Other blocks sharing at least one net, ascending.
  [[nodiscard]] std::span<const BlockId> neighbors(BlockId id) const;
  // Number of pins with the given role this block has across all nets.
  [[nodiscard]] int role_count(BlockId id, PinRole role) const;

  [[nodiscard]] std::optional<BlockId> find_block(std::string_view name) const;
  [[nodiscard]] int total_pins() const;
  [[nodiscard]] int count_type(BlockType type) const;

  friend bool operator==(const Netlist& a, const Netlist& b);

 private:
  std::vector<Block> blocks_;
  std::vector<Net> nets_;
  std::vector<std::vector<NetId>> adjacency_;
  std::vector<std::vector<BlockId>> neighbors_;
  std::vector<std::array<int, 2>> role_counts_;
  std::unordered_map<std::string, BlockId> by_name_;
};

bool operator==(const Block& a, const Block& b);
bool operator==(const Pin& a, const Pin& b);
bool operator==(const Net& a, const Net& b);

// Line-oriented text format:
//   block <name> <CLB|IO|DSP|RAM>
//   net <name> <source_block> <sink_block>+
// '#' starts a comment. Ids follow file order.
Netlist parse_netlist(std::string_view text);
std::string serialize_netlist(const Netlist& netlist);

int degree(const Netlist& netlist, BlockId id);

// Descending degree, ties by ascending id.
std::vector<BlockId> placement_order(const Netlist& netlist, std::span<const BlockId> managed);

struct SyntheticParams {
  int n_clb = 1;
  int n_io = 1;
  int n_nets = 1;
  int max_fanout = 1;
  std::uint64_t seed = 0;
};

// Random single-source nets over CLB blocks (named clb<i>) followed by IO
// blocks (io<i>). Every block lands in at least one net.
Netlist generate_synthetic(const SyntheticParams& params);

class BoardArch;
class PlacementState;

inline constexpr int kNodeFeatureDim = 7;

// One-hot type (4), index / num_blocks, x / (width - 1), y / (height - 1).
// Coordinates are -1 while the block is unplaced.
using NodeFeatures = std::array<double, kNodeFeatureDim>;

NodeFeatures node_features(const Netlist& netlist, BlockId id, const PlacementState& placement,
                           const BoardArch& arch);

}  // namespace rlplace
