#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "rlplace/error.hpp"
#include "rlplace/features.hpp"
#include "rlplace/wirelength.hpp"
#include "support.hpp"

using namespace rlplace;

TEST_CASE("capacity channel") {
  const BoardArch arch = BoardArch::perimeter_io(11, 11, 2);
  const Netlist nl = generate_synthetic({3, 3, 3, 2, 1});
  PlacementState s = PlacementState::empty_for(arch, nl);
  const Grid<double> c0 = capacity_channel(arch, s);
  for (int i = 0; i < c0.size(); ++i) CHECK(c0[i] == arch.tile_capacities()[i]);
  place(arch, nl, s, 0, {4, 4});
  CHECK(capacity_channel(arch, s).at(4, 4) == 0.0);

  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto inst = testing::random_instance(seed);
    PlacementState t = PlacementState::empty_for(inst.arch, inst.netlist);
    Rng rng(seed);
    auto ids = testing::all_blocks(inst.netlist);
    testing::random_fill(inst.arch, inst.netlist, t, ids, rng);
    const Grid<double> c = capacity_channel(inst.arch, t);
    for (int i = 0; i < c.size(); ++i) {
      CHECK(c[i] >= 0.0);
      CHECK(c[i] + t.occupancy()[i] == inst.arch.tile_capacities()[i]);
    }
  }
}

TEST_CASE("incidence channels") {
  const Netlist nl = parse_netlist(
      "block a CLB\nblock b CLB\nblock c CLB\nblock d CLB\nnet n0 a b\nnet n1 a c\nnet n2 a d\nnet n3 b a\n");
  const BoardArch arch = BoardArch::perimeter_io(5, 5, 1);
  PlacementState s = PlacementState::empty_for(arch, nl);
  const Grid<double> none = incidence_channel(nl, s, PinRole::Source);
  for (double v : none.cells()) CHECK(v == 0.0);
  place(arch, nl, s, 0, {2, 2});
  const Grid<double> in = incidence_channel(nl, s, PinRole::Source);
  const Grid<double> out = incidence_channel(nl, s, PinRole::Sink);
  for (int i = 0; i < in.size(); ++i) {
    const bool here = in.position(i) == Position{2, 2};
    CHECK(in[i] == (here ? 3.0 : 0.0));
    CHECK(out[i] == (here ? 1.0 : 0.0));
  }

  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto inst = testing::random_instance(seed);
    PlacementState t = PlacementState::empty_for(inst.arch, inst.netlist);
    Rng rng(seed);
    auto ids = testing::all_blocks(inst.netlist);
    testing::random_fill(inst.arch, inst.netlist, t, ids, rng);
    for (PinRole role : {PinRole::Source, PinRole::Sink}) {
      double expected = 0.0;
      for (const auto& net : inst.netlist.nets()) {
        for (const auto& p : net.pins) expected += (p.role == role && t.is_placed(p.block)) ? 1.0 : 0.0;
      }
      double sum = 0.0;
      const Grid<double> g = incidence_channel(inst.netlist, t, role);
      for (double v : g.cells()) sum += v;
      CHECK(sum == expected);
    }
  }
}

TEST_CASE("wire-mask channel") {
  const Netlist nl = parse_netlist("block a CLB\nblock b CLB\nblock c CLB\nnet n0 a b\nnet n1 c b\n");
  const BoardArch arch(Grid<BlockType>(5, 5, BlockType::CLB), Grid<int>(5, 5, 1));
  PlacementState s = PlacementState::empty_for(arch, nl);
  {
    const ActionMask m = legal_mask(arch, s, BlockType::CLB);
    const Grid<double> w = wire_mask_channel(nl, s, 1, m);
    for (double v : w.cells()) CHECK(v == 0.0);
  }
  place(arch, nl, s, 0, {0, 0});
  const ActionMask m = legal_mask(arch, s, BlockType::CLB);
  const Grid<double> w = wire_mask_channel(nl, s, 1, m);
  double max_legal = 0.0;
  for (int i = 0; i < w.size(); ++i) {
    const Position p = w.position(i);
    if (m[i]) {
      CHECK(w[i] == p.x + p.y);
      max_legal = std::max(max_legal, w[i]);
    }
  }
  CHECK(w.at(0, 0) == max_legal + 1.0);
}

TEST_CASE("normalization") {
  Grid<double> g(3, 1, 0.0);
  g[0] = 2.0;
  g[1] = 4.0;
  g[2] = 3.0;
  normalize_channel(g);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 1.0);
  CHECK(g[2] == 0.5);
  Grid<double> flat(2, 2, 7.0);
  normalize_channel(flat);
  for (double v : flat.cells()) CHECK(v == 0.0);
}

TEST_CASE("assembled state") {
  const Netlist nl = generate_synthetic({8, 4, 10, 3, 2});
  const BoardArch arch = BoardArch::perimeter_io(6, 6, 2);
  const PlacementState empty = PlacementState::empty_for(arch, nl);
  const StateTensor e = assemble_state(arch, empty, nl, 0);
  for (double v : e.channel(Channel::Input).cells()) CHECK(v == 0.0);
  for (double v : e.channel(Channel::Output).cells()) CHECK(v == 0.0);
  CHECK(e.current_mask == legal_mask(arch, empty, BlockType::CLB));
  CHECK(e.current_block == node_features(nl, 0, empty, arch));

  // Channel order fixture: a state where every channel has a distinct shape.
  PlacementState s = empty;
  place(arch, nl, s, 1, {2, 2});
  const StateTensor t = assemble_state(arch, s, nl, 0);
  const auto raw = raw_channels(arch, s, nl, 0, t.current_mask);
  for (int c = 0; c < kNumChannels; ++c) {
    Grid<double> n = raw[static_cast<std::size_t>(c)];
    normalize_channel(n);
    CHECK(t.channels[static_cast<std::size_t>(c)] == n);
  }
  CHECK(raw[0] == capacity_channel(arch, s));
  CHECK(raw[1] == incidence_channel(nl, s, PinRole::Source));
  CHECK(raw[2] == incidence_channel(nl, s, PinRole::Sink));
  CHECK(raw[3] == wire_mask_channel(nl, s, 0, t.current_mask));
  CHECK_THROWS_AS((void)assemble_state(arch, s, nl, 1), PlaceError);

  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto inst = testing::random_instance(seed);
    PlacementState r = PlacementState::empty_for(inst.arch, inst.netlist);
    Rng rng(seed);
    auto ids = testing::all_blocks(inst.netlist);
    const int placed = testing::random_fill(inst.arch, inst.netlist, r, std::span<const BlockId>(ids).first(ids.size() - 1), rng);
    if (placed != static_cast<int>(ids.size()) - 1) continue;
    const StateTensor st = assemble_state(inst.arch, r, inst.netlist, ids.back());
    const auto rc = raw_channels(inst.arch, r, inst.netlist, ids.back(), st.current_mask);
    for (int c = 0; c < kNumChannels; ++c) {
      const auto& raw_c = rc[static_cast<std::size_t>(c)];
      const auto& norm = st.channels[static_cast<std::size_t>(c)];
      const auto [lo, hi] = std::minmax_element(raw_c.cells().begin(), raw_c.cells().end());
      for (int i = 0; i < norm.size(); ++i) {
        CHECK(norm[i] >= 0.0);
        CHECK(norm[i] <= 1.0);
        if (*hi > *lo) {
          if (raw_c[i] == *hi) CHECK(norm[i] == 1.0);
          if (raw_c[i] == *lo) CHECK(norm[i] == 0.0);
        }
      }
    }
  }
}

TEST_CASE("channel csv") {
  Grid<double> g(2, 2, 0.0);
  g.at(1, 0) = 0.5;
  g.at(0, 1) = 1.0;
  CHECK(channel_csv(g) == "0,0.5\n1,0\n");
}
