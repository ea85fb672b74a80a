#include "rlplace/decomposition.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "rlplace/baseline.hpp"
#include "rlplace/error.hpp"
#include "rlplace/wirelength.hpp"

namespace rlplace {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = kFnvOffset) {
  for (unsigned char c : s) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

std::uint64_t fnv_int(std::uint64_t h, std::int64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= static_cast<std::uint64_t>(v >> (8 * i)) & 0xffU;
    h *= kFnvPrime;
  }
  return h;
}

// Board for training chunk c: `base`, chunks already trained at their
// current positions, and greedy placements for chunks not trained yet.
PlacementState build_context(const BoardArch& arch, const Netlist& netlist, const PlacementState& base,
                             const PlacementState& current, const SubtaskPlan& plan, const std::vector<bool>& trained,
                             int chunk) {
  PlacementState s = base;
  std::vector<BlockId> untrained;
  for (int k = 0; k < static_cast<int>(plan.chunks.size()); ++k) {
    if (k == chunk) continue;
    for (BlockId id : plan.chunks[static_cast<std::size_t>(k)]) {
      if (trained[static_cast<std::size_t>(k)]) {
        place(arch, netlist, s, id, *current.position(id));
      } else {
        untrained.push_back(id);
      }
    }
  }
  greedy_complete(arch, netlist, s, untrained);
  return s;
}

std::string opt_bool(const std::optional<bool>& v) { return v ? (*v ? "T" : "F") : "NA"; }
std::string opt_int(const std::optional<int>& v) { return v ? fmt::format("{}", *v) : "NA"; }

}  // namespace

std::vector<std::vector<BlockId>> partition_blocks(std::span<const BlockId> order, int granularity) {
  const int n = static_cast<int>(order.size());
  if (granularity < 1 || granularity > n) {
    throw PlaceError(Errc::BadGranularity,
                     fmt::format("granularity {} is outside 1..{} for {} blocks", granularity, n, n));
  }
  std::vector<std::vector<BlockId>> chunks;
  const int base = n / granularity;
  const int extra = n % granularity;
  int pos = 0;
  for (int k = 0; k < granularity; ++k) {
    const int len = base + (k < extra ? 1 : 0);
    chunks.emplace_back(order.begin() + pos, order.begin() + pos + len);
    pos += len;
  }
  return chunks;
}

SubtaskPlan make_plan(const Netlist& netlist, std::span<const BlockId> managed, int granularity,
                      int episodes_per_subtask, int iterations) {
  if (episodes_per_subtask < 1) throw PlaceError(Errc::BadConfig, "episodes_per_subtask must be >= 1");
  if (iterations < 1) throw PlaceError(Errc::BadConfig, "iterations must be >= 1");
  const auto order = placement_order(netlist, managed);
  return SubtaskPlan{partition_blocks(order, granularity), granularity, episodes_per_subtask, iterations};
}

int ReuseSetting::index() const {
  if (scope == PolicyScope::Multi) return decision_reuse ? 1 : 2;
  return decision_reuse ? 3 : 4;
}

ReuseSetting ReuseSetting::from_index(int index) {
  switch (index) {
    case 1: return {PolicyScope::Multi, true};
    case 2: return {PolicyScope::Multi, false};
    case 3: return {PolicyScope::Single, true};
    case 4: return {PolicyScope::Single, false};
    default: throw PlaceError(Errc::BadConfig, fmt::format("setting must be 1..4, got {}", index));
  }
}

PlacementState seed_other_chunks(const BoardArch& arch, const Netlist& netlist, const PlacementState& base,
                                 const SubtaskPlan& plan, int chunk_index) {
  if (chunk_index < 0 || chunk_index >= static_cast<int>(plan.chunks.size())) {
    throw PlaceError(Errc::BadGranularity, fmt::format("chunk index {} out of range", chunk_index));
  }
  const std::vector<bool> trained(plan.chunks.size(), false);
  return build_context(arch, netlist, base, base, plan, trained, chunk_index);
}

int weight_slot(const ReuseSetting& setting, int chunk) { return setting.scope == PolicyScope::Multi ? chunk : 0; }

std::string checkpoint_name(const ReuseSetting& setting, int chunk) {
  return setting.scope == PolicyScope::Multi ? fmt::format("policy_chunk{}.json", chunk) : "policy_shared.json";
}

ModelWeights apply_setting(const ReuseSetting& setting, const ModelWeights& stored, std::uint64_t fresh_seed) {
  if (setting.decision_reuse) return stored;
  auto [rep, dec] = split_weights(stored);
  auto [fresh_rep, fresh_dec] = split_weights(init_weights(stored.spec(), fresh_seed));
  (void)fresh_rep;
  return merge_weights(rep, fresh_dec);
}

std::uint64_t context_hash(const PlacementState& state, std::span<const BlockId> exclude) {
  const std::set<BlockId> skip(exclude.begin(), exclude.end());
  std::uint64_t h = kFnvOffset;
  for (BlockId id = 0; id < state.num_blocks(); ++id) {
    if (skip.count(id)) continue;
    const auto p = state.position(id);
    if (!p) continue;
    h = fnv_int(h, id);
    h = fnv_int(h, p->x);
    h = fnv_int(h, p->y);
  }
  return h;
}

DecompositionResult run_decomposition(const BoardArch& arch, const Netlist& netlist, const PlacementState& base,
                                      const SubtaskPlan& plan, const ReuseSetting& setting, const NetworkSpec& spec,
                                      const PPOConfig& cfg, std::uint64_t seed, const SubtaskObserver& observer) {
  cfg.validate();
  std::vector<BlockId> managed;
  for (const auto& c : plan.chunks) managed.insert(managed.end(), c.begin(), c.end());

  DecompositionResult result;
  result.plan = plan;
  result.setting = setting;
  result.normalizer = cfg.normalizer > 0.0 ? cfg.normalizer : greedy_normalizer(arch, netlist, base, managed);

  PPOConfig sub = cfg;
  sub.normalizer = result.normalizer;
  sub.episodes_total = plan.episodes_per_subtask;

  const int g = static_cast<int>(plan.chunks.size());
  const int slots = setting.scope == PolicyScope::Multi ? g : 1;
  std::vector<std::optional<ModelWeights>> store(static_cast<std::size_t>(slots));
  std::vector<bool> trained(static_cast<std::size_t>(g), false);
  PlacementState current = base;
  int episode_offset = 0;
  int update_offset = 0;

  for (int it = 0; it < plan.iterations; ++it) {
    for (int c = 0; c < g; ++c) {
      const int run = it * g + c;
      const std::uint64_t run_seed = run == 0 ? seed : derive_seed(seed, {4, static_cast<std::uint64_t>(run)});
      const auto& chunk = plan.chunks[static_cast<std::size_t>(c)];

      SubtaskRecord rec;
      rec.iteration = it;
      rec.chunk = c;
      rec.slot = weight_slot(setting, c);
      rec.seed = run_seed;
      rec.episode_offset = episode_offset;
      rec.update_offset = update_offset;

      auto& slot = store[static_cast<std::size_t>(rec.slot)];
      ModelWeights start;
      if (slot) {
        rec.had_prev = true;
        const auto [rep, dec] = split_weights(*slot);
        rec.stored_rep = checksum(rep);
        rec.stored_dec = checksum(dec);
        start = apply_setting(setting, *slot, derive_seed(run_seed, {3}));
      } else {
        start = init_weights(spec, run_seed);
      }
      {
        const auto [rep, dec] = split_weights(start);
        rec.start_rep = checksum(rep);
        rec.start_dec = checksum(dec);
      }
      rec.start_checkpoint = fnv1a(to_checkpoint(start));

      const PlacementState context = build_context(arch, netlist, base, current, plan, trained, c);
      rec.context_before = context_hash(context, chunk);

      TrainResult tr = train_from(std::move(start), arch, netlist, context, chunk, sub, run_seed);
      rec.context_after = context_hash(tr.best_placement, chunk);
      rec.end_checkpoint = fnv1a(to_checkpoint(tr.weights));
      rec.best_hpwl = tr.best_hpwl;
      rec.stats = tr.stats;

      for (auto row : tr.stats.rows) {
        row.update += update_offset;
        row.episodes += episode_offset;
        result.curve.rows.push_back(row);
      }
      episode_offset += plan.episodes_per_subtask;
      update_offset += static_cast<int>(tr.stats.rows.size());

      current = tr.best_placement;
      trained[static_cast<std::size_t>(c)] = true;
      slot = std::move(tr.weights);
      spdlog::info("iteration {} chunk {}: best hpwl {}", it, c, rec.best_hpwl);
      if (observer) observer(rec, *slot);
      result.subtasks.push_back(std::move(rec));
    }
  }

  result.final_placement = current;
  result.final_hpwl = total_hpwl(current, netlist).total;
  for (auto& s : store) result.store.push_back(std::move(*s));
  return result;
}

std::vector<Boundary> subtask_boundaries(const DecompositionResult& result) {
  std::vector<Boundary> out;
  for (std::size_t i = 1; i < result.subtasks.size(); ++i) {
    const auto& prev = result.subtasks[i - 1].stats.rows;
    const auto& next = result.subtasks[i].stats.rows;
    if (prev.empty() || next.empty()) continue;
    out.push_back(Boundary{static_cast<int>(i), result.subtasks[i].episode_offset, prev.back().mean_hpwl,
                           next.front().mean_hpwl});
  }
  return out;
}

std::string boundaries_csv(std::span<const Boundary> boundaries, std::string_view config_hash) {
  std::string out = fmt::format("# config_hash={}\n", config_hash);
  out += "subtask,episode,hpwl_before,hpwl_after,spike\n";
  for (const auto& b : boundaries) {
    out += fmt::format("{},{},{},{},{}\n", b.index, b.episode, b.before, b.after, b.spike() ? 1 : 0);
  }
  return out;
}

SeedSummary summarize(std::span<const double> values) {
  if (values.empty()) throw PlaceError(Errc::BadConfig, "summary needs at least one value");
  const double n = static_cast<double>(values.size());
  SeedSummary s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / n;
  double var = 0.0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(var / n);
  s.best = *std::min_element(values.begin(), values.end());
  return s;
}

SummaryRow summary_row(int blocks, const ReuseSetting& setting, int granularity, std::span<const double> values) {
  SummaryRow r;
  r.blocks = blocks;
  r.policies = setting.scope == PolicyScope::Multi ? granularity : 1;
  r.decision_reuse = setting.decision_reuse;
  r.setting = setting.index();
  r.granularity = granularity;
  r.wirelength = summarize(values);
  return r;
}

SummaryRow baseline_row(int blocks, std::span<const double> values) {
  SummaryRow r;
  r.blocks = blocks;
  r.policies = 1;
  r.wirelength = summarize(values);
  return r;
}

std::string summary_csv(std::span<const SummaryRow> rows, std::string_view config_hash) {
  std::string out = fmt::format("# config_hash={}\n", config_hash);
  out += "blocks,policies,decision_reuse,setting,granularity,avg_wirelength,std_wirelength,best\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{},{}\n", r.blocks, r.policies, opt_bool(r.decision_reuse),
                       opt_int(r.setting), opt_int(r.granularity), r.wirelength.mean, r.wirelength.stddev,
                       r.wirelength.best);
  }
  return out;
}

std::string summary_table(std::span<const SummaryRow> rows) {
  std::string out = fmt::format("{:>7} {:>8} {:>15} {:>8} {:>12} {:>20} {:>10}\n", "#blocks", "#policy",
                                "decision reuse", "setting", "granularity", "avg wirelength", "best");
  for (const auto& r : rows) {
    out += fmt::format("{:>7} {:>8} {:>15} {:>8} {:>12} {:>20} {:>10.1f}\n", r.blocks, r.policies,
                       opt_bool(r.decision_reuse), opt_int(r.setting), opt_int(r.granularity),
                       fmt::format("{:.1f}+-{:.1f}", r.wirelength.mean, r.wirelength.stddev), r.wirelength.best);
  }
  return out;
}

}  // namespace rlplace
