#include <functional>

#include "doctest.h"
#include "rlplace/board.hpp"
#include "rlplace/error.hpp"
#include "support.hpp"

using namespace rlplace;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const PlaceError& e) {
    return e.code();
  }
  FAIL("expected a PlaceError");
  return Errc::Io;
}

Grid<int> recount(const PlacementState& s) {
  Grid<int> occ(s.occupancy().width(), s.occupancy().height(), 0);
  for (const auto& p : s.assignment()) {
    if (p) ++occ.at(*p);
  }
  return occ;
}

// Legality by definition, cell by cell.
bool legal_by_definition(const BoardArch& arch, const PlacementState& s, BlockType t, Position p) {
  int occ = 0;
  for (const auto& q : s.assignment()) occ += (q && *q == p) ? 1 : 0;
  return arch.tile_type(p) == t && occ < arch.capacity(p);
}

}  // namespace

TEST_CASE("perimeter board has an IO ring of the given capacity") {
  const BoardArch a = BoardArch::perimeter_io(11, 11, 2);
  int io_cells = 0;
  for (int y = 0; y < 11; ++y) {
    for (int x = 0; x < 11; ++x) {
      const bool edge = x == 0 || y == 0 || x == 10 || y == 10;
      CHECK(a.tile_type({x, y}) == (edge ? BlockType::IO : BlockType::CLB));
      CHECK(a.capacity({x, y}) == (edge ? 2 : 1));
      io_cells += edge ? 1 : 0;
    }
  }
  CHECK(io_cells == 40);
  CHECK(a.total_capacity(BlockType::IO) == 80);
  CHECK(a.total_capacity(BlockType::CLB) == 81);
}

TEST_CASE("arch text round-trips and rejects bad input") {
  const BoardArch a = BoardArch::perimeter_io(5, 4, 2);
  CHECK(parse_arch(serialize_arch(a)) == a);
  const BoardArch one = parse_arch("arch 1 1\nCLB:1\n");
  CHECK(one.width() == 1);
  const Netlist nl = parse_netlist("block p IO\nblock q CLB\nnet n p q\n");
  const ActionMask m = legal_mask(one, PlacementState::empty_for(one, nl), BlockType::IO);
  CHECK(count_legal(m) == 0);

  CHECK(code_of([] { (void)parse_arch("arch 2 1\nCLB:1\n"); }) == Errc::DimensionMismatch);
  CHECK(code_of([] { (void)parse_arch("arch 1 1\nLUT:1\n"); }) == Errc::UnknownTileType);
  CHECK(code_of([] { (void)parse_arch("arch 1 1\nCLB:-1\n"); }) == Errc::NegativeCapacity);
  CHECK(code_of([] { (void)parse_arch("CLB:1\n"); }) == Errc::Syntax);
  CHECK(code_of([] { (void)parse_arch("arch 1 2\nCLB:1\n"); }) == Errc::DimensionMismatch);
}

TEST_CASE("empty perimeter board: CLB mask is exactly the CLB tiles") {
  const BoardArch a = BoardArch::perimeter_io(11, 11, 2);
  const Netlist nl = generate_synthetic({4, 4, 4, 2, 1});
  const PlacementState s = PlacementState::empty_for(a, nl);
  const ActionMask m = legal_mask(a, s, BlockType::CLB);
  for (int i = 0; i < m.size(); ++i) CHECK((m[i] == 1) == (a.tile_types()[i] == BlockType::CLB));
}

TEST_CASE("a full IO cell is masked") {
  const BoardArch a = BoardArch::perimeter_io(4, 4, 2);
  const Netlist nl = generate_synthetic({1, 3, 3, 2, 1});
  PlacementState s = PlacementState::empty_for(a, nl);
  place(a, nl, s, 1, {0, 0});
  CHECK(legal_mask(a, s, BlockType::IO).at(0, 0) == 1);
  place(a, nl, s, 2, {0, 0});
  CHECK(legal_mask(a, s, BlockType::IO).at(0, 0) == 0);
  CHECK(code_of([&] { place(a, nl, s, 3, {0, 0}); }) == Errc::IllegalPosition);
}

TEST_CASE("place and unplace") {
  const BoardArch a = BoardArch::perimeter_io(4, 4, 2);
  const Netlist nl = generate_synthetic({2, 2, 3, 2, 1});
  PlacementState s = PlacementState::empty_for(a, nl);
  const PlacementState original = s;
  place(a, nl, s, 0, {1, 1});
  CHECK(s.occupancy({1, 1}) == 1);
  CHECK(s.num_placed() == 1);
  CHECK(code_of([&] { place(a, nl, s, 0, {2, 2}); }) == Errc::AlreadyPlaced);
  CHECK(code_of([&] { place(a, nl, s, 1, {0, 0}); }) == Errc::IllegalPosition);  // CLB on IO tile
  CHECK(code_of([&] { place(a, nl, s, 1, {9, 9}); }) == Errc::IllegalPosition);
  CHECK(code_of([&] { place(a, nl, s, 99, {1, 2}); }) == Errc::UnknownBlock);
  unplace(s, 0);
  CHECK(s == original);
  CHECK(code_of([&] { unplace(s, 0); }) == Errc::NotPlaced);
}

TEST_CASE("mask equals brute-force legality through random fills") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto inst = testing::random_instance(seed);
    PlacementState s = PlacementState::empty_for(inst.arch, inst.netlist);
    Rng rng(seed + 100);
    for (BlockId id : testing::all_blocks(inst.netlist)) {
      for (int t = 0; t < kNumBlockTypes; ++t) {
        const ActionMask m = legal_mask(inst.arch, s, static_cast<BlockType>(t));
        for (int i = 0; i < m.size(); ++i) {
          CHECK((m[i] == 1) == legal_by_definition(inst.arch, s, static_cast<BlockType>(t), m.position(i)));
        }
      }
      const std::vector<BlockId> one{id};
      testing::random_fill(inst.arch, inst.netlist, s, one, rng);
    }
  }
}

TEST_CASE("interleaved place/unplace keeps occupancy equal to a recount") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto inst = testing::random_instance(seed);
    PlacementState s = PlacementState::empty_for(inst.arch, inst.netlist);
    Rng rng(seed);
    const int n = inst.netlist.num_blocks();
    for (int step = 0; step < 200; ++step) {
      const BlockId id = rng.below(n);
      if (s.is_placed(id)) {
        unplace(s, id);
      } else {
        const std::vector<BlockId> one{id};
        testing::random_fill(inst.arch, inst.netlist, s, one, rng);
      }
      CHECK(s.occupancy() == recount(s));
      validate_state(inst.arch, inst.netlist, s);
    }
  }
}

TEST_CASE("reset keeps exactly the listed blocks") {
  const auto inst = testing::random_instance(77, 6, 8);
  PlacementState s = PlacementState::empty_for(inst.arch, inst.netlist);
  Rng rng(1);
  auto ids = testing::all_blocks(inst.netlist);
  testing::random_fill(inst.arch, inst.netlist, s, ids, rng);

  PlacementState none = s;
  reset(none, {});
  CHECK(none == PlacementState::empty_for(inst.arch, inst.netlist));

  PlacementState all = s;
  const auto placed = s.placed_blocks();
  reset(all, placed);
  CHECK(all == s);

  PlacementState half = s;
  std::vector<BlockId> keep(placed.begin(), placed.begin() + static_cast<std::ptrdiff_t>(placed.size() / 2));
  reset(half, keep);
  CHECK(half.num_placed() == static_cast<int>(keep.size()));
  CHECK(half.occupancy() == recount(half));
  for (BlockId id : keep) CHECK(half.position(id) == s.position(id));
}

TEST_CASE("validator rejects a state built for another board") {
  const BoardArch a = BoardArch::perimeter_io(4, 4, 1);
  const BoardArch b = BoardArch::perimeter_io(5, 4, 1);
  const Netlist nl = generate_synthetic({2, 2, 3, 2, 1});
  const PlacementState s = PlacementState::empty_for(b, nl);
  CHECK(code_of([&] { validate_state(a, nl, s); }) == Errc::DimensionMismatch);
}
