#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rlplace/board.hpp"
#include "rlplace/env.hpp"
#include "rlplace/features.hpp"
#include "rlplace/netlist.hpp"
#include "rlplace/nn.hpp"
#include "rlplace/rng.hpp"
#include "rlplace/wirelength.hpp"

namespace rlplace {

struct PPOConfig {
  double gamma = 1.0;
  double clip_eps = 0.2;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double learning_rate = 3e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // Global gradient-norm clip per optimizer step; 0 disables.
  double max_grad_norm = 0.5;
  int epochs_per_update = 4;
  int episodes_per_update = 16;
  // Optimizer steps per epoch; the batch is shuffled and split this many ways.
  int minibatches = 4;
  int episodes_total = 3000;
  // 0 selects the HPWL of the greedy completion.
  double normalizer = 0.0;
  RewardMode reward_mode = RewardMode::NegHpwlNormalized;

  // Throws BadConfig.
  void validate() const;
};

struct Step {
  StateTensor state;
  GraphInput graph;
  int action = 0;  // row-major cell index
  double log_prob = 0.0;
  double value = 0.0;
  double reward = 0.0;
  double entropy = 0.0;
};

struct Trajectory {
  std::vector<Step> steps;
  bool terminal = false;
  double hpwl = 0.0;
  PlacementState final_state;
};

// Runs one episode from env.reset(), sampling every action from the masked
// policy. Throws NoLegalAction naming the step index.
Trajectory collect_episode(PlacementEnv& env, const ModelWeights& weights, const RewardConfig& reward, Rng& rng);
Trajectory collect_episode(const BoardArch& arch, const Netlist& netlist, const PlacementState& fixed,
                           std::span<const BlockId> managed, const ModelWeights& weights, const RewardConfig& reward,
                           Rng& rng);

// G_t = r_t + gamma * G_{t+1}, computed backwards.
std::vector<double> compute_returns(std::span<const double> rewards, double gamma);
std::vector<double> returns(const Trajectory& trajectory, double gamma);
// G_t - V_t, not standardized.
std::vector<double> advantages(const Trajectory& trajectory, std::span<const double> returns);
// In place: (a - mean) / (std + eps), population std.
void standardize(std::span<double> values, double eps = 1e-8);

// -sum p ln p over cells with p > 0.
double policy_entropy(const Grid<double>& probs);

class AdamOptimizer {
 public:
  AdamOptimizer(const NetworkSpec& spec, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);
  void step(ModelWeights& weights, const Gradients& grads);
  [[nodiscard]] long steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  ModelWeights m_;
  ModelWeights v_;
};

struct Sample {
  const Step* step = nullptr;
  double ret = 0.0;
  double adv = 0.0;
};

struct LossBreakdown {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double clip_frac = 0.0;
};

// Mean clipped-surrogate loss over `samples`; when `grads` is non-null the
// gradient of `total` is accumulated into it. Throws NonFiniteLoss naming
// the offending term.
LossBreakdown ppo_loss(const ModelWeights& weights, std::span<const Sample> samples, const PPOConfig& cfg,
                       Gradients* grads);

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double clip_frac = 0.0;
};

// epochs_per_update passes of shuffled minibatch Adam steps over the batch.
UpdateStats ppo_update(ModelWeights& weights, AdamOptimizer& optimizer, std::span<const Trajectory> batch,
                       const PPOConfig& cfg, Rng& rng);

struct TrainStatsRow {
  int update = 0;
  int episodes = 0;  // cumulative
  double mean_hpwl = 0.0;
  double best_hpwl = 0.0;
  double entropy = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double clip_frac = 0.0;

  friend bool operator==(const TrainStatsRow&, const TrainStatsRow&) = default;
};

struct TrainStats {
  std::vector<TrainStatsRow> rows;

  friend bool operator==(const TrainStats&, const TrainStats&) = default;
};

// Header plus one row per update; `config_hash` goes into a leading comment.
std::string train_stats_csv(const TrainStats& stats, std::string_view config_hash);

struct TrainResult {
  ModelWeights weights;
  TrainStats stats;
  PlacementState best_placement;
  double best_hpwl = 0.0;
  double normalizer = 1.0;
};

TrainResult train(const BoardArch& arch, const Netlist& netlist, const PlacementState& fixed,
                  std::span<const BlockId> managed, const NetworkSpec& spec, const PPOConfig& cfg, std::uint64_t seed);
// Same as train() but starting from the given weights.
TrainResult train_from(ModelWeights weights, const BoardArch& arch, const Netlist& netlist,
                       const PlacementState& fixed, std::span<const BlockId> managed, const PPOConfig& cfg,
                       std::uint64_t seed);

// Deterministic argmax rollout; used for exports.
PlacementState greedy_rollout(const BoardArch& arch, const Netlist& netlist, const PlacementState& fixed,
                              std::span<const BlockId> managed, const ModelWeights& weights);

}  // namespace rlplace
