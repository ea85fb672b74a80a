#include "rlplace/netlist.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_set>

#include <fmt/format.h>

#include "rlplace/board.hpp"
#include "rlplace/error.hpp"
#include "rlplace/rng.hpp"

namespace rlplace {

namespace {

constexpr std::array<std::string_view, kNumBlockTypes> kTypeNames = {"CLB", "IO", "DSP", "RAM"};

std::vector<std::string_view> tokenize(std::string_view line) {
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

[[noreturn]] void fail_at(Errc code, int line, const std::string& msg) {
  throw PlaceError(code, fmt::format("line {}: {}", line, msg));
}

}  // namespace

std::string_view to_string(BlockType type) { return kTypeNames[static_cast<std::size_t>(type)]; }

std::optional<BlockType> parse_block_type(std::string_view tag) {
  for (int i = 0; i < kNumBlockTypes; ++i) {
    if (kTypeNames[static_cast<std::size_t>(i)] == tag) return static_cast<BlockType>(i);
  }
  return std::nullopt;
}

bool operator==(const Block& a, const Block& b) {
  return a.id == b.id && a.name == b.name && a.type == b.type;
}
bool operator==(const Pin& a, const Pin& b) { return a.block == b.block && a.role == b.role; }
bool operator==(const Net& a, const Net& b) {
  return a.id == b.id && a.name == b.name && a.pins == b.pins;
}
bool operator==(const Netlist& a, const Netlist& b) {
  return a.blocks_ == b.blocks_ && a.nets_ == b.nets_;
}

Netlist::Netlist(std::vector<Block> blocks, std::vector<Net> nets)
    : blocks_(std::move(blocks)), nets_(std::move(nets)) {
  const auto n = blocks_.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (blocks_[i].id != static_cast<BlockId>(i)) {
      throw PlaceError(Errc::UnknownBlock, fmt::format("block '{}' has id {} at position {}",
                                                       blocks_[i].name, blocks_[i].id, i));
    }
    if (!by_name_.emplace(blocks_[i].name, blocks_[i].id).second) {
      throw PlaceError(Errc::DuplicateName, fmt::format("duplicate block name '{}'", blocks_[i].name));
    }
  }

  adjacency_.assign(n, {});
  role_counts_.assign(n, {0, 0});
  std::unordered_set<std::string_view> net_names;
  for (std::size_t k = 0; k < nets_.size(); ++k) {
    const Net& net = nets_[k];
    if (net.id != static_cast<NetId>(k)) {
      throw PlaceError(Errc::Syntax, fmt::format("net '{}' has id {} at position {}", net.name, net.id, k));
    }
    if (!net_names.insert(net.name).second) {
      throw PlaceError(Errc::DuplicateName, fmt::format("duplicate net name '{}'", net.name));
    }
    int sources = 0;
    int sinks = 0;
    for (std::size_t p = 0; p < net.pins.size(); ++p) {
      const Pin& pin = net.pins[p];
      if (pin.block < 0 || static_cast<std::size_t>(pin.block) >= n) {
        throw PlaceError(Errc::DanglingPin,
                         fmt::format("net '{}' references missing block {}", net.name, pin.block));
      }
      for (std::size_t q = 0; q < p; ++q) {
        if (net.pins[q] == pin) {
          throw PlaceError(Errc::DuplicatePin, fmt::format("net '{}' lists block '{}' twice in one role",
                                                           net.name, blocks_[pin.block].name));
        }
      }
      (pin.role == PinRole::Source ? sources : sinks) += 1;
      role_counts_[pin.block][static_cast<std::size_t>(pin.role)] += 1;
      auto& adj = adjacency_[pin.block];
      if (adj.empty() || adj.back() != net.id) adj.push_back(net.id);
    }
    if (sources != 1) {
      throw PlaceError(sources == 0 ? Errc::NetWithoutSource : Errc::Syntax,
                       fmt::format("net '{}' has {} source pins, expected 1", net.name, sources));
    }
    if (sinks == 0) throw PlaceError(Errc::NetWithoutSink, fmt::format("net '{}' has no sink", net.name));
  }

  neighbors_.assign(n, {});
  for (const Net& net : nets_) {
    for (const Pin& a : net.pins) {
      for (const Pin& b : net.pins) {
        if (a.block != b.block) neighbors_[a.block].push_back(b.block);
      }
    }
  }
  for (auto& nb : neighbors_) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
}

const Block& Netlist::block(BlockId id) const {
  if (!contains(id)) throw PlaceError(Errc::UnknownBlock, fmt::format("unknown block id {}", id));
  return blocks_[static_cast<std::size_t>(id)];
}

std::span<const NetId> Netlist::adjacency(BlockId id) const {
  (void)block(id);
  return adjacency_[static_cast<std::size_t>(id)];
}

std::span<const BlockId> Netlist::neighbors(BlockId id) const {
  (void)block(id);
  return neighbors_[static_cast<std::size_t>(id)];
}

int Netlist::role_count(BlockId id, PinRole role) const {
  (void)block(id);
  return role_counts_[static_cast<std::size_t>(id)][static_cast<std::size_t>(role)];
}

std::optional<BlockId> Netlist::find_block(std::string_view name) const {
  auto it = by_name_.find(std::string(name));
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

int Netlist::total_pins() const {
  int total = 0;
  for (const Net& net : nets_) total += static_cast<int>(net.pins.size());
  return total;
}

int Netlist::count_type(BlockType type) const {
  return static_cast<int>(
      std::count_if(blocks_.begin(), blocks_.end(), [type](const Block& b) { return b.type == type; }));
}

Netlist parse_netlist(std::string_view text) {
  std::vector<Block> blocks;
  std::vector<Net> nets;
  std::unordered_map<std::string, BlockId> ids;
  std::unordered_set<std::string> net_names;

  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    auto tok = tokenize(line);
    if (tok.empty()) continue;

    if (tok[0] == "block") {
      if (tok.size() != 3) fail_at(Errc::Syntax, line_no, "expected 'block <name> <type>'");
      auto type = parse_block_type(tok[2]);
      if (!type) fail_at(Errc::UnknownBlockType, line_no, fmt::format("unknown block type '{}'", tok[2]));
      const auto id = static_cast<BlockId>(blocks.size());
      std::string name(tok[1]);
      if (!ids.emplace(name, id).second) {
        fail_at(Errc::DuplicateName, line_no, fmt::format("duplicate block name '{}'", name));
      }
      blocks.push_back({id, std::move(name), *type});
    } else if (tok[0] == "net") {
      if (tok.size() < 2) fail_at(Errc::Syntax, line_no, "expected 'net <name> <source> <sink>+'");
      std::string name(tok[1]);
      if (!net_names.insert(name).second) {
        fail_at(Errc::DuplicateName, line_no, fmt::format("duplicate net name '{}'", name));
      }
      if (tok.size() < 3) fail_at(Errc::NetWithoutSource, line_no, fmt::format("net '{}' has no source", name));
      if (tok.size() < 4) fail_at(Errc::NetWithoutSink, line_no, fmt::format("net '{}' has no sink", name));
      Net net{static_cast<NetId>(nets.size()), name, {}};
      for (std::size_t i = 2; i < tok.size(); ++i) {
        auto it = ids.find(std::string(tok[i]));
        if (it == ids.end()) {
          fail_at(Errc::DanglingPin, line_no, fmt::format("net '{}' references undeclared block '{}'", name, tok[i]));
        }
        Pin pin{it->second, i == 2 ? PinRole::Source : PinRole::Sink};
        if (std::find(net.pins.begin(), net.pins.end(), pin) != net.pins.end()) {
          fail_at(Errc::DuplicatePin, line_no, fmt::format("net '{}' lists '{}' twice as sink", name, tok[i]));
        }
        net.pins.push_back(pin);
      }
      nets.push_back(std::move(net));
    } else {
      fail_at(Errc::Syntax, line_no, fmt::format("unknown directive '{}'", tok[0]));
    }
  }
  return Netlist(std::move(blocks), std::move(nets));
}

std::string serialize_netlist(const Netlist& netlist) {
  std::string out;
  for (const Block& b : netlist.blocks()) out += fmt::format("block {} {}\n", b.name, to_string(b.type));
  for (const Net& net : netlist.nets()) {
    out += "net " + net.name;
    // Source first, then sinks in stored order.
    for (const Pin& p : net.pins) {
      if (p.role == PinRole::Source) out += " " + netlist.block(p.block).name;
    }
    for (const Pin& p : net.pins) {
      if (p.role == PinRole::Sink) out += " " + netlist.block(p.block).name;
    }
    out += '\n';
  }
  return out;
}

int degree(const Netlist& netlist, BlockId id) {
  return static_cast<int>(netlist.adjacency(id).size());
}

std::vector<BlockId> placement_order(const Netlist& netlist, std::span<const BlockId> managed) {
  std::vector<BlockId> order(managed.begin(), managed.end());
  std::vector<int> deg(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) deg[i] = degree(netlist, order[i]);
  std::vector<std::size_t> idx(order.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (deg[a] != deg[b]) return deg[a] > deg[b];
    return order[a] < order[b];
  });
  std::vector<BlockId> out;
  out.reserve(order.size());
  for (std::size_t i : idx) out.push_back(order[i]);
  return out;
}

Netlist generate_synthetic(const SyntheticParams& p) {
  if (p.n_clb < 1 || p.n_io < 1 || p.n_nets < 1 || p.max_fanout < 1) {
    throw PlaceError(Errc::InfeasibleParams, "synthetic netlist counts must be >= 1");
  }
  const int n = p.n_clb + p.n_io;
  if (static_cast<long long>(p.n_nets) * (1 + p.max_fanout) < n) {
    throw PlaceError(Errc::InfeasibleParams,
                     fmt::format("{} nets with fanout <= {} cannot cover {} blocks", p.n_nets, p.max_fanout, n));
  }

  std::vector<Block> blocks;
  blocks.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < p.n_clb; ++i) blocks.push_back({i, fmt::format("clb{}", i), BlockType::CLB});
  for (int i = 0; i < p.n_io; ++i) blocks.push_back({p.n_clb + i, fmt::format("io{}", i), BlockType::IO});

  Rng rng(derive_seed(p.seed, {0x6e65746cULL}));
  std::vector<BlockId> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm.begin(), perm.end());
  std::size_t next_uncovered = 0;

  struct Draft {
    BlockId source;
    std::vector<BlockId> sinks;
  };
  std::vector<Draft> drafts;
  drafts.reserve(static_cast<std::size_t>(p.n_nets));
  auto in_draft = [](const Draft& d, BlockId b) {
    return d.source == b || std::find(d.sinks.begin(), d.sinks.end(), b) != d.sinks.end();
  };

  // Draw fanouts first, then widen them until the pin slots can cover every
  // block at least once.
  std::vector<int> fanout(static_cast<std::size_t>(p.n_nets));
  long long slots = 0;
  for (int& f : fanout) {
    f = 1 + rng.below(p.max_fanout);
    slots += 1 + f;
  }
  for (std::size_t k = 0; slots < n; k = (k + 1) % fanout.size()) {
    if (fanout[k] < p.max_fanout) {
      ++fanout[k];
      ++slots;
    }
  }

  for (int k = 0; k < p.n_nets; ++k) {
    Draft d{};
    d.source = next_uncovered < perm.size() ? perm[next_uncovered++] : rng.below(n);
    for (int s = 0; s < fanout[static_cast<std::size_t>(k)]; ++s) {
      if (next_uncovered < perm.size()) {
        d.sinks.push_back(perm[next_uncovered++]);
        continue;
      }
      if (static_cast<int>(d.sinks.size()) + 1 >= n) break;
      BlockId b = rng.below(n);
      while (in_draft(d, b)) b = rng.below(n);
      d.sinks.push_back(b);
    }
    drafts.push_back(std::move(d));
  }

  std::vector<Net> nets;
  nets.reserve(drafts.size());
  for (std::size_t k = 0; k < drafts.size(); ++k) {
    Net net{static_cast<NetId>(k), fmt::format("n{}", k), {}};
    net.pins.push_back({drafts[k].source, PinRole::Source});
    for (BlockId s : drafts[k].sinks) net.pins.push_back({s, PinRole::Sink});
    nets.push_back(std::move(net));
  }
  return Netlist(std::move(blocks), std::move(nets));
}

NodeFeatures node_features(const Netlist& netlist, BlockId id, const PlacementState& placement,
                           const BoardArch& arch) {
  const Block& b = netlist.block(id);
  NodeFeatures f{};
  f[static_cast<std::size_t>(b.type)] = 1.0;
  f[4] = static_cast<double>(id) / static_cast<double>(netlist.num_blocks());
  if (auto pos = placement.position(id)) {
    f[5] = static_cast<double>(pos->x) / static_cast<double>(std::max(arch.width() - 1, 1));
    f[6] = static_cast<double>(pos->y) / static_cast<double>(std::max(arch.height() - 1, 1));
  } else {
    f[5] = -1.0;
    f[6] = -1.0;
  }
  return f;
}

}  // namespace rlplace
