// Acceptance checks, one PASS/FAIL line per criterion. Pass criterion
// numbers as arguments to run a subset.

#include <fmt/format.h>
#include <spdlog/spdlog.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "rlplace/baseline.hpp"
#include "rlplace/cli.hpp"
#include "rlplace/decomposition.hpp"
#include "rlplace/env.hpp"
#include "rlplace/error.hpp"
#include "rlplace/features.hpp"
#include "rlplace/nn.hpp"
#include "rlplace/ppo.hpp"
#include "rlplace/wirelength.hpp"
#include "support.hpp"

using namespace rlplace;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Same FNV-1a the decomposition records use for checkpoint text.
std::uint64_t fnv1a_text(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

int cli_run(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run(args, out, err);
  if (code != 0) fmt::print(stderr, "rlplace {} -> {}: {}\n", fmt::join(args, " "), code, err.str());
  return code;
}

struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& name) {
    dir = fs::temp_directory_path() / fmt::format("rlplace_acc_{}_{}", name, ::getpid());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
};

// Instance written by `rlplace gen`; CLBs are managed, IO is fixed.
struct Loaded {
  Netlist nl;
  BoardArch arch;
  PlacementState fixed;
  std::vector<BlockId> managed;
};

Loaded generate(const std::string& preset, std::uint64_t seed) {
  Scratch s("gen");
  if (cli_run({"gen", "--preset", preset, "--seed", std::to_string(seed), "--out", s.dir.string()}) != 0) {
    throw std::runtime_error("gen failed");
  }
  Loaded l;
  l.nl = parse_netlist(slurp(s.dir / "netlist.net"));
  l.arch = parse_arch(slurp(s.dir / "board.arch"));
  l.fixed = import_vpr_place(slurp(s.dir / "fixed.place"), l.nl, l.arch);
  for (const auto& b : l.nl.blocks()) {
    if (!l.fixed.is_placed(b.id)) l.managed.push_back(b.id);
  }
  return l;
}

// Network and PPO settings used by the training criteria.
NetworkSpec desk_spec(const BoardArch& arch) {
  NetworkSpec s = NetworkSpec::for_board(arch.width(), arch.height());
  s.conv_channels = 4;
  s.residual_blocks = 1;
  return s;
}

PPOConfig desk_ppo() {
  PPOConfig c;
  c.learning_rate = 1e-3;
  return c;
}

// 1. Legality under fuzzed environment steps.
Outcome legality() {
  constexpr long kTarget = 100000;
  long steps = 0;
  long violations = 0;
  long illegal_samples = 0;
  long rejected_ok = 0;
  for (std::uint64_t seed = 0; steps < kTarget; ++seed) {
    const auto inst = testing::random_instance(seed);
    const auto& arch = inst.arch;
    const auto& nl = inst.netlist;
    Rng rng(derive_seed(seed, {10}));
    // Pin a random subset, manage the rest.
    PlacementState fixed = PlacementState::empty_for(arch, nl);
    std::vector<BlockId> ids = testing::all_blocks(nl);
    rng.shuffle(ids.begin(), ids.end());
    const std::size_t pinned = static_cast<std::size_t>(rng.below(static_cast<int>(ids.size())));
    testing::random_fill(arch, nl, fixed, std::span<const BlockId>(ids).first(pinned), rng);
    std::vector<BlockId> managed;
    for (BlockId id : ids) {
      if (!fixed.is_placed(id)) managed.push_back(id);
    }
    const ModelWeights w = init_weights(NetworkSpec::tiny(arch.width(), arch.height()), seed);
    PlacementEnv env(arch, nl, fixed, managed);
    for (int episode = 0; episode < 20 && steps < kTarget; ++episode) {
      env.reset();
      while (!env.done()) {
        const BlockId id = env.current_block();
        const StateTensor st = env.observe();
        const ForwardOutput fo = forward(w, st, env.graph_input());
        const Grid<double> p = masked_policy(fo.logits, st.current_mask);
        const double u = rng.uniform();
        double acc = 0.0;
        int a = -1;
        int last = -1;
        for (int i = 0; i < p.size() && a < 0; ++i) {
          if (p[i] == 0.0) continue;
          acc += p[i];
          last = i;
          if (u < acc) a = i;
        }
        if (a < 0) a = last;
        const Position pos = p.position(a);
        const PlacementState& before = env.state();
        const bool legal = arch.tile_type(pos) == nl.block(id).type && before.occupancy(pos) < arch.capacity(pos);
        if (!legal || !st.current_mask[a]) ++illegal_samples;

        // An illegal cell must be rejected without touching the state.
        std::vector<int> bad;
        for (int i = 0; i < st.current_mask.size(); ++i) {
          if (!st.current_mask[i]) bad.push_back(i);
        }
        if (!bad.empty()) {
          PlacementState probe = before;
          try {
            place(arch, nl, probe, id, p.position(bad[static_cast<std::size_t>(rng.below(static_cast<int>(bad.size())))]));
            ++violations;
          } catch (const PlaceError& e) {
            if (e.code() == Errc::IllegalPosition && probe == before) ++rejected_ok;
            else ++violations;
          }
        }

        env.step(pos);
        try {
          validate_state(arch, nl, env.state());
        } catch (const PlaceError&) {
          ++violations;
        }
        ++steps;
      }
    }
  }
  return {violations == 0 && illegal_samples == 0,
          fmt::format("{} steps, {} violations, {} illegal samples, {} illegal probes rejected", steps, violations,
                      illegal_samples, rejected_ok)};
}

// 2. Wire-mask channel against place-then-recompute.
Outcome wire_mask_oracle() {
  long pairs = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto inst = testing::random_instance(1000 + seed, 6, 8);
    const auto& arch = inst.arch;
    const auto& nl = inst.netlist;
    Rng rng(seed);
    PlacementState s = PlacementState::empty_for(arch, nl);
    std::vector<BlockId> ids = testing::all_blocks(nl);
    rng.shuffle(ids.begin(), ids.end());
    // Walk through successively fuller states, checking every unplaced block.
    for (std::size_t k = 0; k <= ids.size(); ++k) {
      for (BlockId id : ids) {
        if (s.is_placed(id)) continue;
        const ActionMask mask = legal_mask(arch, s, nl.block(id).type);
        if (count_legal(mask) == 0) continue;
        const Grid<double> wm = wire_mask_channel(nl, s, id, mask);
        const double base = total_hpwl(s, nl).total;
        for (int i = 0; i < mask.size(); ++i) {
          if (!mask[i]) continue;
          PlacementState t = s;
          place(arch, nl, t, id, mask.position(i));
          const double expect = total_hpwl(t, nl).total - base;
          worst = std::max(worst, std::abs(wm[i] - expect));
          ++pairs;
        }
      }
      if (k == ids.size()) break;
      const ActionMask m = legal_mask(arch, s, nl.block(ids[k]).type);
      std::vector<int> legal;
      for (int i = 0; i < m.size(); ++i) {
        if (m[i]) legal.push_back(i);
      }
      if (legal.empty()) break;
      place(arch, nl, s, ids[k], m.position(legal[static_cast<std::size_t>(rng.below(static_cast<int>(legal.size())))]));
    }
  }
  return {pairs > 0 && worst <= 1e-9, fmt::format("{} (block, cell) pairs on 25 instances, max |error| {}", pairs, worst)};
}

// 3. Finite-difference gradient check on the tiny network.
Outcome gradcheck() {
  GradcheckOptions opts;
  opts.step = 1e-5;
  const auto groups = gradient_check(NetworkSpec::tiny(), opts);
  double worst = 0.0;
  std::string name;
  for (const auto& g : groups) {
    if (g.max_rel_error >= worst) {
      worst = g.max_rel_error;
      name = g.name;
    }
  }
  opts.corrupt_gradient = true;
  double control = 0.0;
  for (const auto& g : gradient_check(NetworkSpec::tiny(), opts)) control = std::max(control, g.max_rel_error);
  return {worst < 1e-4 && control >= 1e-4,
          fmt::format("{} groups, max rel error {:.3e} ({}); corrupted control {:.3e}", groups.size(), worst, name,
                      control)};
}

// 4. Two-armed bandit: one CLB next to a pinned IO, cells at HPWL 1 and 2.
Outcome bandit() {
  const Netlist nl = parse_netlist("block pad IO\nblock a CLB\nnet n pad a\n");
  Grid<BlockType> types(3, 1, BlockType::CLB);
  types.at(0, 0) = BlockType::IO;
  const BoardArch arch(types, Grid<int>(3, 1, 1));
  PlacementState fixed = PlacementState::empty_for(arch, nl);
  place(arch, nl, fixed, 0, {0, 0});
  const std::vector<BlockId> managed{1};
  const NetworkSpec spec = NetworkSpec::for_board(3, 1);
  PPOConfig cfg;
  cfg.episodes_total = 500;
  std::vector<std::string> probs;
  int good = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    const TrainResult r = train(arch, nl, fixed, managed, spec, cfg, seed);
    PlacementEnv env(arch, nl, fixed, managed);
    const StateTensor st = env.observe();
    const ForwardOutput fo = forward(r.weights, st, env.graph_input());
    const double p = masked_policy(fo.logits, st.current_mask).at(1, 0);
    probs.push_back(fmt::format("{:.4f}", p));
    good += p > 0.9 ? 1 : 0;
  }
  return {good == 3, fmt::format("P(optimal cell) after 500 episodes: {}", fmt::join(probs, ", "))};
}

// Exhaustive optimum over the managed blocks' legal assignments.
double enumerate_optimum(const BoardArch& arch, const Netlist& nl, const PlacementState& fixed,
                         const std::vector<BlockId>& managed, long& configurations) {
  double best = std::numeric_limits<double>::infinity();
  PlacementState s = fixed;
  std::function<void(std::size_t)> rec = [&](std::size_t k) {
    if (k == managed.size()) {
      ++configurations;
      best = std::min(best, total_hpwl(s, nl).total);
      return;
    }
    const ActionMask m = legal_mask(arch, s, nl.block(managed[k]).type);
    for (int i = 0; i < m.size(); ++i) {
      if (!m[i]) continue;
      place(arch, nl, s, managed[k], m.position(i));
      rec(k + 1);
      unplace(s, managed[k]);
    }
  };
  rec(0);
  return best;
}

// 5. Four CLBs around fixed IO against the enumerated optimum.
Outcome small_optimality() {
  const Loaded inst = generate("toy", 1);
  long configs = 0;
  const double opt = enumerate_optimum(inst.arch, inst.nl, inst.fixed, inst.managed, configs);
  PPOConfig cfg = desk_ppo();
  cfg.episodes_total = 2000;
  const NetworkSpec spec = desk_spec(inst.arch);
  int good = 0;
  std::vector<std::string> found;
  for (std::uint64_t seed : {1, 2, 3}) {
    const TrainResult r = train(inst.arch, inst.nl, inst.fixed, inst.managed, spec, cfg, seed);
    found.push_back(fmt::format("{}", r.best_hpwl));
    good += r.best_hpwl <= 1.1 * opt ? 1 : 0;
  }
  return {configs <= 100000 && good >= 2,
          fmt::format("optimum {} over {} configurations; best found {}", opt, configs, fmt::join(found, ", "))};
}

// 6. Reuse-setting byte audits, granularity-1 equivalence, boundary spikes.
Outcome decomposition_mechanics() {
  const Loaded inst = generate("small", 1);
  const NetworkSpec spec = desk_spec(inst.arch);
  PPOConfig cfg = desk_ppo();
  const SubtaskPlan plan = make_plan(inst.nl, inst.managed, 2, 320, 2);

  int audits = 0;
  int audit_failures = 0;
  int spikes = 0;
  int spike_boundaries = 0;
  std::vector<std::string> spike_notes;
  for (int idx = 1; idx <= 4; ++idx) {
    const ReuseSetting setting = ReuseSetting::from_index(idx);
    for (std::uint64_t seed : {1, 2}) {
      // Checkpoint text each slot held after its last run.
      std::map<int, std::string> stored;
      std::vector<std::string> failures;
      auto observer = [&](const SubtaskRecord& rec, const ModelWeights& w) {
        const auto it = stored.find(rec.slot);
        if (it != stored.end()) {
          ++audits;
          const auto [rep, dec] = split_weights(from_checkpoint(it->second));
          const bool rep_kept = checksum(rep) == rec.start_rep;
          const bool dec_kept = checksum(dec) == rec.start_dec;
          const bool bytes_kept = fnv1a_text(it->second) == rec.start_checkpoint;
          if (!rep_kept || dec_kept != setting.decision_reuse || bytes_kept != setting.decision_reuse) {
            ++audit_failures;
          }
        } else if (rec.had_prev) {
          ++audit_failures;
        }
        if (rec.context_before != rec.context_after) ++audit_failures;
        const std::string text = to_checkpoint(w);
        if (fnv1a_text(text) != rec.end_checkpoint) ++audit_failures;
        stored[rec.slot] = text;
      };
      const auto r = run_decomposition(inst.arch, inst.nl, inst.fixed, plan, setting, spec, cfg, seed, observer);
      if (!setting.decision_reuse) {
        int s = 0;
        const auto bounds = subtask_boundaries(r);
        for (const auto& b : bounds) s += b.spike() ? 1 : 0;
        spikes += s;
        spike_boundaries += static_cast<int>(bounds.size());
        spike_notes.push_back(fmt::format("s{}/seed{} {}/{}", idx, seed, s, bounds.size()));
      }
    }
  }

  // Granularity 1 against the plain trainer, byte for byte.
  int equal = 0;
  PPOConfig short_cfg = cfg;
  short_cfg.episodes_total = 96;
  const SubtaskPlan whole = make_plan(inst.nl, inst.managed, 1, 96, 1);
  for (std::uint64_t seed : {1, 2, 3}) {
    const TrainResult t = train(inst.arch, inst.nl, inst.fixed, inst.managed, spec, short_cfg, seed);
    const auto d = run_decomposition(inst.arch, inst.nl, inst.fixed, whole, ReuseSetting::from_index(1), spec,
                                     short_cfg, seed);
    const bool same = train_stats_csv(t.stats, "x") == train_stats_csv(d.curve, "x") &&
                      to_checkpoint(t.weights) == to_checkpoint(d.store.at(0)) &&
                      export_vpr_place(t.best_placement, inst.nl, inst.arch) ==
                          export_vpr_place(d.final_placement, inst.nl, inst.arch);
    equal += same ? 1 : 0;
  }

  const bool spikes_ok = spike_boundaries > 0 && 2 * spikes > spike_boundaries;
  return {audit_failures == 0 && audits > 0 && equal == 3 && spikes_ok,
          fmt::format("{} weight audits, {} failures; granularity-1 identical {}/3; spikes in settings 2/4: {} ({})",
                      audits, audit_failures, equal, fmt::format("{}/{}", spikes, spike_boundaries),
                      fmt::join(spike_notes, ", "))};
}

double mean_entropy(const TrainStats& s) {
  double sum = 0.0;
  for (const auto& r : s.rows) sum += r.entropy;
  return s.rows.empty() ? 0.0 : sum / static_cast<double>(s.rows.size());
}

// 7. Decomposition against one undivided run with the same episode budget.
Outcome desk_table() {
  const Loaded inst = generate("small", 1);
  const NetworkSpec spec = desk_spec(inst.arch);
  const PPOConfig cfg = desk_ppo();
  constexpr int kGranularity = 2;
  constexpr int kPerSubtask = 1500;
  constexpr int kIterations = 2;
  const SubtaskPlan plan = make_plan(inst.nl, inst.managed, kGranularity, kPerSubtask, kIterations);
  const std::vector<std::uint64_t> seeds{1, 2, 3};

  std::array<double, 5> best{};     // index 0: baseline, 1..4: settings
  std::array<double, 5> entropy{};
  for (std::uint64_t seed : seeds) {
    PPOConfig whole = cfg;
    whole.episodes_total = kGranularity * kPerSubtask * kIterations;
    const TrainResult t = train(inst.arch, inst.nl, inst.fixed, inst.managed, spec, whole, seed);
    best[0] += t.best_hpwl / static_cast<double>(seeds.size());
    entropy[0] += mean_entropy(t.stats) / static_cast<double>(seeds.size());
    for (int idx = 1; idx <= 4; ++idx) {
      const auto r =
          run_decomposition(inst.arch, inst.nl, inst.fixed, plan, ReuseSetting::from_index(idx), spec, cfg, seed);
      best[static_cast<std::size_t>(idx)] += r.final_hpwl / static_cast<double>(seeds.size());
      entropy[static_cast<std::size_t>(idx)] += mean_entropy(r.curve) / static_cast<double>(seeds.size());
    }
  }
  const double best_setting = *std::min_element(best.begin() + 1, best.end());
  const bool wl_ok = best_setting <= best[0];
  const bool entropy_ok = std::max(entropy[1], entropy[3]) < std::min(entropy[2], entropy[4]);
  return {wl_ok && entropy_ok,
          fmt::format("mean best hpwl: baseline {:.2f}, settings {:.2f} {:.2f} {:.2f} {:.2f}; mean entropy: "
                      "settings {:.4f} {:.4f} {:.4f} {:.4f}",
                      best[0], best[1], best[2], best[3], best[4], entropy[1], entropy[2], entropy[3], entropy[4])};
}

// 8. Byte-identical artifacts from identical reruns of every command.
Outcome determinism() {
  Scratch s("det");
  const fs::path inst = s.dir / "inst";
  if (cli_run({"gen", "--preset", "toy", "--out", inst.string()}) != 0) return {false, "gen failed"};
  json c = json::parse(slurp(inst / "config.json"));
  c["seeds"] = {1, 2};
  c["network"] = {{"conv_channels", 4}, {"residual_blocks", 1}};
  c["ppo"] = {{"episodes_total", 64}, {"learning_rate", 1e-3}};
  c["decompose"] = {{"granularity", 2}, {"episodes_per_subtask", 32}, {"iterations", 2}, {"settings", {1, 2, 3, 4}},
                    {"include_baseline", true}};
  spit(inst / "config.json", c.dump(2));
  const std::string cfg = (inst / "config.json").string();

  auto run_all = [&](const fs::path& out) {
    int bad = 0;
    bad += cli_run({"gen", "--preset", "small", "--out", (out / "gen").string()});
    bad += cli_run({"train", "--config", cfg, "--out", (out / "train").string()});
    bad += cli_run({"decompose", "--config", cfg, "--out", (out / "decompose").string()});
    bad += cli_run({"baseline", "--config", cfg, "--kind", "random", "--out", (out / "random").string()});
    bad += cli_run({"baseline", "--config", cfg, "--kind", "greedy", "--out", (out / "greedy").string()});
    bad += cli_run({"export-place", "--config", cfg, "--checkpoint", (out / "train" / "seed1" / "checkpoint.json").string(),
                    "--out", (out / "export").string()});
    bad += cli_run({"dump-state", "--config", cfg, "--step", "1", "--out", (out / "dump").string()});
    return bad;
  };
  if (run_all(s.dir / "a") != 0 || run_all(s.dir / "b") != 0) return {false, "a command failed"};

  int files = 0;
  int differ = 0;
  for (const auto& e : fs::recursive_directory_iterator(s.dir / "a")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), s.dir / "a");
    const fs::path other = s.dir / "b" / rel;
    ++files;
    if (!fs::exists(other) || slurp(e.path()) != slurp(other)) {
      ++differ;
      fmt::print(stderr, "differs: {}\n", rel.string());
    }
  }
  return {files > 0 && differ == 0, fmt::format("{} artifacts compared across two runs, {} differ", files, differ)};
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all{
      {1, "legality", 120, legality},
      {2, "wire-mask oracle", 60, wire_mask_oracle},
      {3, "gradient check", 60, gradcheck},
      {4, "ppo bandit", 120, bandit},
      {5, "small-instance optimality", 600, small_optimality},
      {6, "decomposition mechanics", 900, decomposition_mechanics},
      {7, "decomposition vs baseline", 3600, desk_table},
      {8, "determinism", 600, determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, fmt::format("exception: {}", e.what())};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = o.pass && secs < c.budget_s;
    failed += pass ? 0 : 1;
    fmt::print("{} criterion {} ({}): {} [{:.1f}s of {:.0f}s]\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail,
               secs, c.budget_s);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
