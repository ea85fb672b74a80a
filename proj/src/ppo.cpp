#include "rlplace/ppo.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "rlplace/baseline.hpp"
#include "rlplace/error.hpp"

namespace rlplace {

namespace {

// Log-probabilities of the masked softmax; illegal cells hold -inf.
Grid<double> masked_log_policy(const Grid<double>& logits, const ActionMask& mask) {
  double mx = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < mask.size(); ++i) {
    if (mask[i]) mx = std::max(mx, logits[i]);
  }
  if (mx == -std::numeric_limits<double>::infinity()) {
    throw PlaceError(Errc::NoLegalAction, "no legal cell in the action mask");
  }
  double z = 0.0;
  for (int i = 0; i < mask.size(); ++i) {
    if (mask[i]) z += std::exp(logits[i] - mx);
  }
  const double lse = mx + std::log(z);
  Grid<double> out(logits.width(), logits.height(), -std::numeric_limits<double>::infinity());
  for (int i = 0; i < mask.size(); ++i) {
    if (mask[i]) out[i] = logits[i] - lse;
  }
  return out;
}

int sample_cell(const Grid<double>& probs, const ActionMask& mask, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  int last = -1;
  for (int i = 0; i < probs.size(); ++i) {
    if (!mask[i]) continue;
    acc += probs[i];
    last = i;
    if (u < acc) return i;
  }
  return last;  // rounding left u above the final partial sum
}

void check_finite(double v, const char* term) {
  if (!std::isfinite(v)) throw PlaceError(Errc::NonFiniteLoss, fmt::format("non-finite {} term", term));
}

double grad_norm(const Gradients& g) {
  double s = 0.0;
  for (const auto& p : g.params()) {
    for (double v : p.data) s += v * v;
  }
  return std::sqrt(s);
}

void scale(Gradients& g, double f) {
  for (auto& p : g.params()) {
    for (double& v : p.data) v *= f;
  }
}

}  // namespace

void PPOConfig::validate() const {
  auto fail = [](const std::string& m) { throw PlaceError(Errc::BadConfig, m); };
  if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma must be in (0, 1]");
  if (!(clip_eps > 0.0)) fail("clip_eps must be > 0");
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (!(entropy_coef >= 0.0)) fail("entropy_coef must be >= 0");
  if (!(value_coef >= 0.0)) fail("value_coef must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    fail("adam betas must be in [0, 1)");
  }
  if (!(adam_eps > 0.0)) fail("adam_eps must be > 0");
  if (!(max_grad_norm >= 0.0)) fail("max_grad_norm must be >= 0");
  if (epochs_per_update < 1) fail("epochs_per_update must be >= 1");
  if (episodes_per_update < 1) fail("episodes_per_update must be >= 1");
  if (minibatches < 1) fail("minibatches must be >= 1");
  if (episodes_total < 1) fail("episodes_total must be >= 1");
  if (!(normalizer >= 0.0)) fail("normalizer must be >= 0");
}

Trajectory collect_episode(PlacementEnv& env, const ModelWeights& weights, const RewardConfig& reward, Rng& rng) {
  env.reset();
  Trajectory traj;
  traj.steps.reserve(static_cast<std::size_t>(env.episode_length()));
  while (!env.done()) {
    Step s;
    s.state = env.observe();
    s.graph = env.graph_input();
    const ForwardOutput out = forward(weights, s.state, s.graph);
    Grid<double> logp;
    try {
      logp = masked_log_policy(out.logits, s.state.current_mask);
    } catch (const PlaceError& e) {
      throw PlaceError(Errc::NoLegalAction, fmt::format("step {}: no legal cell for block '{}'", env.step_index(),
                                                        env.netlist().block(env.current_block()).name));
    }
    const Grid<double> probs = masked_policy(out.logits, s.state.current_mask);
    s.action = sample_cell(probs, s.state.current_mask, rng);
    s.log_prob = logp[s.action];
    s.value = out.value;
    s.entropy = policy_entropy(probs);
    env.step(probs.position(s.action));
    traj.steps.push_back(std::move(s));
  }
  traj.terminal = true;
  traj.final_state = env.state();
  traj.hpwl = total_hpwl(traj.final_state, env.netlist()).total;
  if (!traj.steps.empty()) traj.steps.back().reward = terminal_reward(traj.final_state, env.netlist(), reward);
  return traj;
}

Trajectory collect_episode(const BoardArch& arch, const Netlist& netlist, const PlacementState& fixed,
                           std::span<const BlockId> managed, const ModelWeights& weights, const RewardConfig& reward,
                           Rng& rng) {
  PlacementEnv env(arch, netlist, fixed, managed);
  return collect_episode(env, weights, reward, rng);
}

std::vector<double> compute_returns(std::span<const double> rewards, double gamma) {
  std::vector<double> g(rewards.size(), 0.0);
  double next = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    next = rewards[t] + gamma * next;
    g[t] = next;
  }
  return g;
}

std::vector<double> returns(const Trajectory& trajectory, double gamma) {
  std::vector<double> r;
  r.reserve(trajectory.steps.size());
  for (const auto& s : trajectory.steps) r.push_back(s.reward);
  return compute_returns(r, gamma);
}

std::vector<double> advantages(const Trajectory& trajectory, std::span<const double> returns) {
  std::vector<double> a(trajectory.steps.size());
  for (std::size_t t = 0; t < a.size(); ++t) a[t] = returns[t] - trajectory.steps[t].value;
  return a;
}

void standardize(std::span<double> values, double eps) {
  if (values.empty()) return;
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  for (double& v : values) v = (v - mean) / (sd + eps);
}

double policy_entropy(const Grid<double>& probs) {
  double h = 0.0;
  for (double p : probs.cells()) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return std::max(h, 0.0);
}

AdamOptimizer::AdamOptimizer(const NetworkSpec& spec, double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      m_(ModelWeights::zeros(spec)),
      v_(ModelWeights::zeros(spec)) {}

void AdamOptimizer::step(ModelWeights& weights, const Gradients& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto wp = weights.params();
  auto gp = grads.params();
  auto mp = m_.params();
  auto vp = v_.params();
  if (wp.size() != gp.size() || wp.size() != mp.size()) {
    throw PlaceError(Errc::SchemaMismatch, "optimizer state does not match the weights");
  }
  for (std::size_t k = 0; k < wp.size(); ++k) {
    auto& w = wp[k].data;
    const auto& g = gp[k].data;
    auto& m = mp[k].data;
    auto& v = vp[k].data;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

LossBreakdown ppo_loss(const ModelWeights& weights, std::span<const Sample> samples, const PPOConfig& cfg,
                       Gradients* grads) {
  LossBreakdown out;
  if (samples.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(samples.size());
  int clipped = 0;
  for (const Sample& s : samples) {
    ForwardTrace trace;
    const ForwardOutput fo = forward(weights, s.step->state, s.step->graph, grads ? &trace : nullptr);
    const ActionMask& mask = s.step->state.current_mask;
    const Grid<double> logp = masked_log_policy(fo.logits, mask);
    const double ratio = std::exp(logp[s.step->action] - s.step->log_prob);
    const double clipped_ratio = std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
    const double surr1 = ratio * s.adv;
    const double surr2 = clipped_ratio * s.adv;
    const double surr = std::min(surr1, surr2);
    if (std::abs(ratio - 1.0) > cfg.clip_eps) ++clipped;

    double h = 0.0;
    for (int i = 0; i < mask.size(); ++i) {
      if (mask[i]) h -= std::exp(logp[i]) * logp[i];
    }
    const double verr = fo.value - s.ret;

    out.policy += -surr * inv_n;
    out.value += verr * verr * inv_n;
    out.entropy += h * inv_n;

    if (grads) {
      // d(surr)/d(log pi(a)) is ratio * adv on the unclipped branch, 0 otherwise.
      const double g_logp = surr1 <= surr2 ? ratio * s.adv : 0.0;
      Grid<double> dlogits(fo.logits.width(), fo.logits.height(), 0.0);
      for (int i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        const double p = std::exp(logp[i]);
        const double dlogp = (i == s.step->action ? 1.0 : 0.0) - p;
        dlogits[i] = -g_logp * dlogp * inv_n + cfg.entropy_coef * p * (logp[i] + h) * inv_n;
      }
      const double dvalue = 2.0 * cfg.value_coef * verr * inv_n;
      backward(weights, trace, dlogits, dvalue, *grads);
    }
  }
  check_finite(out.policy, "policy");
  check_finite(out.value, "value");
  check_finite(out.entropy, "entropy");
  out.clip_frac = static_cast<double>(clipped) * inv_n;
  out.total = out.policy + cfg.value_coef * out.value - cfg.entropy_coef * out.entropy;
  return out;
}

UpdateStats ppo_update(ModelWeights& weights, AdamOptimizer& optimizer, std::span<const Trajectory> batch,
                       const PPOConfig& cfg, Rng& rng) {
  if (batch.empty()) throw PlaceError(Errc::BadConfig, "empty trajectory batch");
  std::vector<Sample> samples;
  std::vector<double> adv;
  for (const Trajectory& traj : batch) {
    const auto g = returns(traj, cfg.gamma);
    const auto a = advantages(traj, g);
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
      samples.push_back(Sample{&traj.steps[t], g[t], 0.0});
      adv.push_back(a[t]);
    }
  }
  standardize(adv);
  for (std::size_t i = 0; i < samples.size(); ++i) samples[i].adv = adv[i];

  UpdateStats stats;
  int evaluations = 0;
  const std::size_t n = samples.size();
  const std::size_t parts = std::min<std::size_t>(static_cast<std::size_t>(cfg.minibatches), n);
  Gradients grads = Gradients::zeros(weights.spec());
  std::vector<Sample> mb;
  for (int epoch = 0; epoch < cfg.epochs_per_update; ++epoch) {
    rng.shuffle(samples.begin(), samples.end());
    for (std::size_t k = 0; k < parts; ++k) {
      const std::size_t lo = k * n / parts;
      const std::size_t hi = (k + 1) * n / parts;
      mb.assign(samples.begin() + static_cast<std::ptrdiff_t>(lo), samples.begin() + static_cast<std::ptrdiff_t>(hi));
      grads.set_zero();
      const LossBreakdown lb = ppo_loss(weights, mb, cfg, &grads);
      if (cfg.max_grad_norm > 0.0) {
        const double norm = grad_norm(grads);
        check_finite(norm, "gradient");
        if (norm > cfg.max_grad_norm) scale(grads, cfg.max_grad_norm / norm);
      }
      optimizer.step(weights, grads);
      stats.policy_loss += lb.policy;
      stats.value_loss += lb.value;
      stats.clip_frac += lb.clip_frac;
      ++evaluations;
    }
  }
  stats.policy_loss /= evaluations;
  stats.value_loss /= evaluations;
  stats.clip_frac /= evaluations;
  return stats;
}

std::string train_stats_csv(const TrainStats& stats, std::string_view config_hash) {
  std::string out = fmt::format("# config_hash={}\n", config_hash);
  out += "update,episodes,mean_hpwl,best_hpwl,entropy,policy_loss,value_loss,clip_frac\n";
  for (const auto& r : stats.rows) {
    out += fmt::format("{},{},{},{},{},{},{},{}\n", r.update, r.episodes, r.mean_hpwl, r.best_hpwl, r.entropy,
                       r.policy_loss, r.value_loss, r.clip_frac);
  }
  return out;
}

TrainResult train(const BoardArch& arch, const Netlist& netlist, const PlacementState& fixed,
                  std::span<const BlockId> managed, const NetworkSpec& spec, const PPOConfig& cfg, std::uint64_t seed) {
  return train_from(init_weights(spec, seed), arch, netlist, fixed, managed, cfg, seed);
}

TrainResult train_from(ModelWeights weights, const BoardArch& arch, const Netlist& netlist,
                       const PlacementState& fixed, std::span<const BlockId> managed, const PPOConfig& cfg,
                       std::uint64_t seed) {
  cfg.validate();
  PlacementEnv env(arch, netlist, fixed, managed);
  TrainResult result;
  result.normalizer = cfg.normalizer > 0.0 ? cfg.normalizer : greedy_normalizer(arch, netlist, fixed, managed);
  const RewardConfig reward{result.normalizer, cfg.reward_mode};
  AdamOptimizer optimizer(weights.spec(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);

  result.best_hpwl = std::numeric_limits<double>::infinity();
  int episode = 0;
  int update = 0;
  std::vector<Trajectory> batch;
  while (episode < cfg.episodes_total) {
    const int count = std::min(cfg.episodes_per_update, cfg.episodes_total - episode);
    batch.clear();
    double sum_hpwl = 0.0;
    double sum_entropy = 0.0;
    std::size_t steps = 0;
    for (int e = 0; e < count; ++e, ++episode) {
      Rng rng(derive_seed(seed, {1, static_cast<std::uint64_t>(episode)}));
      Trajectory traj = collect_episode(env, weights, reward, rng);
      sum_hpwl += traj.hpwl;
      for (const auto& s : traj.steps) sum_entropy += s.entropy;
      steps += traj.steps.size();
      if (traj.hpwl < result.best_hpwl) {
        result.best_hpwl = traj.hpwl;
        result.best_placement = traj.final_state;
      }
      batch.push_back(std::move(traj));
    }
    Rng shuffle_rng(derive_seed(seed, {2, static_cast<std::uint64_t>(update)}));
    const UpdateStats us = ppo_update(weights, optimizer, batch, cfg, shuffle_rng);
    TrainStatsRow row;
    row.update = update;
    row.episodes = episode;
    row.mean_hpwl = sum_hpwl / count;
    row.best_hpwl = result.best_hpwl;
    row.entropy = steps > 0 ? sum_entropy / static_cast<double>(steps) : 0.0;
    row.policy_loss = us.policy_loss;
    row.value_loss = us.value_loss;
    row.clip_frac = us.clip_frac;
    spdlog::debug("update {} episodes {} mean_hpwl {} best_hpwl {} entropy {}", row.update, row.episodes,
                  row.mean_hpwl, row.best_hpwl, row.entropy);
    result.stats.rows.push_back(row);
    ++update;
  }
  result.weights = std::move(weights);
  return result;
}

PlacementState greedy_rollout(const BoardArch& arch, const Netlist& netlist, const PlacementState& fixed,
                              std::span<const BlockId> managed, const ModelWeights& weights) {
  PlacementEnv env(arch, netlist, fixed, managed);
  while (!env.done()) {
    const StateTensor s = env.observe();
    const ForwardOutput out = forward(weights, s, env.graph_input());
    int best = -1;
    for (int i = 0; i < s.current_mask.size(); ++i) {
      if (s.current_mask[i] && (best < 0 || out.logits[i] > out.logits[best])) best = i;
    }
    if (best < 0) {
      throw PlaceError(Errc::NoLegalAction, fmt::format("step {}: no legal cell", env.step_index()));
    }
    env.step(s.current_mask.position(best));
  }
  return env.state();
}

}  // namespace rlplace
