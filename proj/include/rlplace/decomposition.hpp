#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rlplace/board.hpp"
#include "rlplace/netlist.hpp"
#include "rlplace/nn.hpp"
#include "rlplace/ppo.hpp"

namespace rlplace {

struct SubtaskPlan {
  std::vector<std::vector<BlockId>> chunks;
  int granularity = 1;
  int episodes_per_subtask = 3000;
  int iterations = 1;
};

// Contiguous slices of `order`, sizes differing by at most one (larger
// slices first). Throws BadGranularity unless 1 <= granularity <= size.
std::vector<std::vector<BlockId>> partition_blocks(std::span<const BlockId> order, int granularity);

// Chunks over placement_order(managed). Throws BadGranularity or BadConfig.
SubtaskPlan make_plan(const Netlist& netlist, std::span<const BlockId> managed, int granularity,
                      int episodes_per_subtask, int iterations);

enum class PolicyScope { Multi, Single };

struct ReuseSetting {
  PolicyScope scope = PolicyScope::Multi;
  bool decision_reuse = true;

  // 1: multi/reuse, 2: multi/fresh, 3: single/reuse, 4: single/fresh.
  [[nodiscard]] int index() const;
  // Throws BadConfig outside 1..4.
  static ReuseSetting from_index(int index);

  friend bool operator==(const ReuseSetting&, const ReuseSetting&) = default;
};

// `base` with every block outside chunk `chunk_index` added by
// greedy_complete, in chunk order. Throws Infeasible.
PlacementState seed_other_chunks(const BoardArch& arch, const Netlist& netlist, const PlacementState& base,
                                 const SubtaskPlan& plan, int chunk_index);

// Which stored weight set a chunk reads and writes.
int weight_slot(const ReuseSetting& setting, int chunk);
std::string checkpoint_name(const ReuseSetting& setting, int chunk);

// Weights a run starts from, given the stored set it continues. With
// decision reuse the bytes pass through; otherwise the decision partition is
// replaced by init_weights(spec, fresh_seed)'s.
ModelWeights apply_setting(const ReuseSetting& setting, const ModelWeights& stored, std::uint64_t fresh_seed);

struct SubtaskRecord {
  int iteration = 0;
  int chunk = 0;
  int slot = 0;
  std::uint64_t seed = 0;
  bool had_prev = false;
  // Checksums of the stored set before apply_setting (0 without one).
  std::uint64_t stored_rep = 0;
  std::uint64_t stored_dec = 0;
  std::uint64_t start_rep = 0;
  std::uint64_t start_dec = 0;
  // FNV-1a of the serialized checkpoints at start and end of the run.
  std::uint64_t start_checkpoint = 0;
  std::uint64_t end_checkpoint = 0;
  // Positions of every block outside the chunk, before and after training.
  std::uint64_t context_before = 0;
  std::uint64_t context_after = 0;
  int episode_offset = 0;
  int update_offset = 0;
  TrainStats stats;
  double best_hpwl = 0.0;
};

struct DecompositionResult {
  SubtaskPlan plan;
  ReuseSetting setting;
  std::vector<SubtaskRecord> subtasks;
  // All subtask rows with update and episode counters made global.
  TrainStats curve;
  PlacementState final_placement;
  double final_hpwl = 0.0;
  double normalizer = 1.0;
  // Stored weight sets after the last run, indexed by weight_slot.
  std::vector<ModelWeights> store;
};

// Called after each subtask run with its record and the weights it stored.
using SubtaskObserver = std::function<void(const SubtaskRecord&, const ModelWeights&)>;

DecompositionResult run_decomposition(const BoardArch& arch, const Netlist& netlist, const PlacementState& base,
                                      const SubtaskPlan& plan, const ReuseSetting& setting, const NetworkSpec& spec,
                                      const PPOConfig& cfg, std::uint64_t seed,
                                      const SubtaskObserver& observer = {});

// Hash of (id, x, y) for every placed block not in `exclude`.
std::uint64_t context_hash(const PlacementState& state, std::span<const BlockId> exclude);

struct Boundary {
  int index = 0;  // subtask that starts here
  int episode = 0;
  double before = 0.0;  // last mean_hpwl of the previous subtask
  double after = 0.0;   // first mean_hpwl of this subtask
  [[nodiscard]] bool spike() const { return after > before; }
};

std::vector<Boundary> subtask_boundaries(const DecompositionResult& result);
std::string boundaries_csv(std::span<const Boundary> boundaries, std::string_view config_hash);

struct SeedSummary {
  double mean = 0.0;
  double stddev = 0.0;  // population
  double best = 0.0;
};

// Throws BadConfig on an empty list.
SeedSummary summarize(std::span<const double> values);

struct SummaryRow {
  int blocks = 0;
  int policies = 1;
  std::optional<bool> decision_reuse;  // empty for the undecomposed baseline
  std::optional<int> setting;
  std::optional<int> granularity;
  SeedSummary wirelength;
};

SummaryRow summary_row(int blocks, const ReuseSetting& setting, int granularity, std::span<const double> values);
SummaryRow baseline_row(int blocks, std::span<const double> values);
std::string summary_csv(std::span<const SummaryRow> rows, std::string_view config_hash);
std::string summary_table(std::span<const SummaryRow> rows);

}  // namespace rlplace
