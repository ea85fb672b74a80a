#include "rlplace/board.hpp"

#include <algorithm>
#include <charconv>

#include <fmt/format.h>

#include "rlplace/error.hpp"

namespace rlplace {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::optional<long> parse_int(std::string_view s) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace

BoardArch::BoardArch(Grid<BlockType> tile_type, Grid<int> tile_capacity)
    : tile_type_(std::move(tile_type)), tile_capacity_(std::move(tile_capacity)) {
  if (tile_type_.width() != tile_capacity_.width() || tile_type_.height() != tile_capacity_.height()) {
    throw PlaceError(Errc::DimensionMismatch, "tile type and capacity grids differ in size");
  }
  if (tile_type_.width() < 1 || tile_type_.height() < 1) {
    throw PlaceError(Errc::DimensionMismatch, "board dimensions must be positive");
  }
  for (int c : tile_capacity_.cells()) {
    if (c < 0) throw PlaceError(Errc::NegativeCapacity, "tile capacity must be >= 0");
  }
}

BoardArch BoardArch::perimeter_io(int width, int height, int io_capacity) {
  if (width < 1 || height < 1) throw PlaceError(Errc::DimensionMismatch, "board dimensions must be positive");
  if (io_capacity < 0) throw PlaceError(Errc::NegativeCapacity, "io capacity must be >= 0");
  Grid<BlockType> types(width, height, BlockType::CLB);
  Grid<int> caps(width, height, 1);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (x == 0 || y == 0 || x == width - 1 || y == height - 1) {
        types.at(x, y) = BlockType::IO;
        caps.at(x, y) = io_capacity;
      }
    }
  }
  return BoardArch(std::move(types), std::move(caps));
}

int BoardArch::total_capacity(BlockType type) const {
  int total = 0;
  for (int i = 0; i < tile_type_.size(); ++i) {
    if (tile_type_[i] == type) total += tile_capacity_[i];
  }
  return total;
}

BoardArch parse_arch(std::string_view text) {
  std::vector<std::vector<std::string_view>> rows;
  int line_no = 0;
  int header_line = 0;
  long width = -1;
  long height = -1;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (width < 0) {
      if (tok.size() != 3 || tok[0] != "arch") {
        throw PlaceError(Errc::Syntax, fmt::format("line {}: expected 'arch <width> <height>'", line_no));
      }
      auto w = parse_int(tok[1]);
      auto h = parse_int(tok[2]);
      if (!w || !h || *w < 1 || *h < 1) {
        throw PlaceError(Errc::DimensionMismatch, fmt::format("line {}: bad board dimensions", line_no));
      }
      width = *w;
      height = *h;
      header_line = line_no;
      continue;
    }
    if (static_cast<long>(tok.size()) != width) {
      throw PlaceError(Errc::DimensionMismatch,
                       fmt::format("line {}: row has {} tiles, expected {}", line_no, tok.size(), width));
    }
    rows.push_back(std::move(tok));
  }
  if (width < 0) throw PlaceError(Errc::Syntax, "missing 'arch' header");
  if (static_cast<long>(rows.size()) != height) {
    throw PlaceError(Errc::DimensionMismatch, fmt::format("arch declared {} rows at line {}, found {}", height,
                                                          header_line, rows.size()));
  }

  const int w = static_cast<int>(width);
  const int h = static_cast<int>(height);
  Grid<BlockType> types(w, h);
  Grid<int> caps(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::string_view tok = rows[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)];
      const auto colon = tok.find(':');
      if (colon == std::string_view::npos) {
        throw PlaceError(Errc::Syntax, fmt::format("tile ({},{}): expected TYPE:CAPACITY, got '{}'", x, y, tok));
      }
      auto type = parse_block_type(tok.substr(0, colon));
      if (!type) {
        throw PlaceError(Errc::UnknownTileType,
                         fmt::format("tile ({},{}): unknown tile type '{}'", x, y, tok.substr(0, colon)));
      }
      auto cap = parse_int(tok.substr(colon + 1));
      if (!cap) throw PlaceError(Errc::Syntax, fmt::format("tile ({},{}): bad capacity in '{}'", x, y, tok));
      if (*cap < 0) throw PlaceError(Errc::NegativeCapacity, fmt::format("tile ({},{}): negative capacity", x, y));
      types.at(x, y) = *type;
      caps.at(x, y) = static_cast<int>(*cap);
    }
  }
  return BoardArch(std::move(types), std::move(caps));
}

std::string serialize_arch(const BoardArch& arch) {
  std::string out = fmt::format("arch {} {}\n", arch.width(), arch.height());
  for (int y = 0; y < arch.height(); ++y) {
    for (int x = 0; x < arch.width(); ++x) {
      if (x > 0) out += ' ';
      out += fmt::format("{}:{}", to_string(arch.tile_type({x, y})), arch.capacity({x, y}));
    }
    out += '\n';
  }
  return out;
}

PlacementState::PlacementState(int num_blocks, int width, int height)
    : assignment_(static_cast<std::size_t>(num_blocks)), occupancy_(width, height, 0) {}

void PlacementState::check_block(BlockId id) const {
  if (id < 0 || id >= num_blocks()) throw PlaceError(Errc::UnknownBlock, fmt::format("unknown block id {}", id));
}

bool PlacementState::is_placed(BlockId id) const {
  check_block(id);
  return assignment_[static_cast<std::size_t>(id)].has_value();
}

std::optional<Position> PlacementState::position(BlockId id) const {
  check_block(id);
  return assignment_[static_cast<std::size_t>(id)];
}

std::vector<BlockId> PlacementState::placed_blocks() const {
  std::vector<BlockId> out;
  for (std::size_t i = 0; i < assignment_.size(); ++i) {
    if (assignment_[i]) out.push_back(static_cast<BlockId>(i));
  }
  return out;
}

ActionMask legal_mask(const BoardArch& arch, const PlacementState& state, BlockType type) {
  ActionMask mask(arch.width(), arch.height(), 0);
  const auto& types = arch.tile_types();
  const auto& caps = arch.tile_capacities();
  const auto& occ = state.occupancy();
  for (int i = 0; i < mask.size(); ++i) {
    mask[i] = (types[i] == type && occ[i] < caps[i]) ? 1 : 0;
  }
  return mask;
}

int count_legal(const ActionMask& mask) {
  return static_cast<int>(std::count(mask.cells().begin(), mask.cells().end(), std::uint8_t{1}));
}

void place(const BoardArch& arch, const Netlist& netlist, PlacementState& state, BlockId id, Position pos) {
  state.check_block(id);
  const Block& b = netlist.block(id);
  auto& slot = state.assignment_[static_cast<std::size_t>(id)];
  if (slot) {
    throw PlaceError(Errc::AlreadyPlaced, fmt::format("block '{}' is already placed at ({},{})", b.name,
                                                      slot->x, slot->y));
  }
  if (!arch.in_bounds(pos)) {
    throw PlaceError(Errc::IllegalPosition, fmt::format("({},{}) is outside the board", pos.x, pos.y));
  }
  if (arch.tile_type(pos) != b.type) {
    throw PlaceError(Errc::IllegalPosition, fmt::format("block '{}' ({}) cannot go on a {} tile at ({},{})", b.name,
                                                        to_string(b.type), to_string(arch.tile_type(pos)), pos.x,
                                                        pos.y));
  }
  if (state.occupancy_.at(pos) >= arch.capacity(pos)) {
    throw PlaceError(Errc::IllegalPosition,
                     fmt::format("tile ({},{}) is full (capacity {})", pos.x, pos.y, arch.capacity(pos)));
  }
  slot = pos;
  state.occupancy_.at(pos) += 1;
  state.num_placed_ += 1;
}

void unplace(PlacementState& state, BlockId id) {
  state.check_block(id);
  auto& slot = state.assignment_[static_cast<std::size_t>(id)];
  if (!slot) throw PlaceError(Errc::NotPlaced, fmt::format("block {} is not placed", id));
  state.occupancy_.at(*slot) -= 1;
  state.num_placed_ -= 1;
  slot.reset();
}

void reset(PlacementState& state, std::span<const BlockId> keep) {
  std::vector<char> kept(static_cast<std::size_t>(state.num_blocks()), 0);
  for (BlockId id : keep) {
    if (id < 0 || id >= state.num_blocks()) {
      throw PlaceError(Errc::UnknownBlock, fmt::format("unknown block id {}", id));
    }
    kept[static_cast<std::size_t>(id)] = 1;
  }
  for (BlockId id = 0; id < state.num_blocks(); ++id) {
    if (!kept[static_cast<std::size_t>(id)] && state.is_placed(id)) unplace(state, id);
  }
}

void validate_state(const BoardArch& arch, const Netlist& netlist, const PlacementState& state) {
  if (state.num_blocks() != netlist.num_blocks() || state.occupancy().width() != arch.width() ||
      state.occupancy().height() != arch.height()) {
    throw PlaceError(Errc::DimensionMismatch, "placement state does not match board/netlist dimensions");
  }
  Grid<int> recount(arch.width(), arch.height(), 0);
  int placed = 0;
  for (BlockId id = 0; id < state.num_blocks(); ++id) {
    auto pos = state.position(id);
    if (!pos) continue;
    ++placed;
    if (!arch.in_bounds(*pos)) {
      throw PlaceError(Errc::IllegalPosition, fmt::format("block {} is off the board", id));
    }
    if (arch.tile_type(*pos) != netlist.block(id).type) {
      throw PlaceError(Errc::IllegalPosition, fmt::format("block {} violates the type constraint at ({},{})", id,
                                                          pos->x, pos->y));
    }
    recount.at(*pos) += 1;
  }
  if (placed != state.num_placed()) {
    throw PlaceError(Errc::IllegalPosition, "placed-block counter disagrees with the assignment");
  }
  for (int y = 0; y < arch.height(); ++y) {
    for (int x = 0; x < arch.width(); ++x) {
      if (recount.at(x, y) != state.occupancy({x, y})) {
        throw PlaceError(Errc::IllegalPosition, fmt::format("occupancy at ({},{}) is {}, recount gives {}", x, y,
                                                            state.occupancy({x, y}), recount.at(x, y)));
      }
      if (recount.at(x, y) > arch.capacity({x, y})) {
        throw PlaceError(Errc::IllegalPosition, fmt::format("capacity exceeded at ({},{})", x, y));
      }
    }
  }
}

}  // namespace rlplace
