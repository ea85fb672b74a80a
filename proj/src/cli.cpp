#include "rlplace/cli.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "json.hpp"
#include "rlplace/baseline.hpp"
#include "rlplace/board.hpp"
#include "rlplace/decomposition.hpp"
#include "rlplace/error.hpp"
#include "rlplace/features.hpp"
#include "rlplace/netlist.hpp"
#include "rlplace/nn.hpp"
#include "rlplace/ppo.hpp"
#include "rlplace/wirelength.hpp"

namespace rlplace::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

// Bad invocation or config: exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GenConfig {
  std::string preset = "small";
  std::optional<int> n_clb, n_io, n_nets, max_fanout, width, height, io_capacity;
  std::optional<std::uint64_t> seed;
};

struct DecomposeConfig {
  int granularity = 2;
  int episodes_per_subtask = 3000;
  int iterations = 5;
  std::vector<int> settings{1, 2, 3, 4};
  bool include_baseline = false;
};

struct RunConfig {
  std::optional<fs::path> netlist;
  std::optional<fs::path> arch;
  std::optional<fs::path> fixed_place;
  std::optional<fs::path> checkpoint;
  std::vector<BlockType> manage_types;  // empty: all types
  std::vector<std::uint64_t> seeds{1};
  json network = json::object();
  PPOConfig ppo;
  DecomposeConfig decompose;
  std::string baseline_kind = "greedy";
  GenConfig gen;
  int dump_step = 0;
  std::string hash;
};

std::string hex(std::uint64_t v) { return fmt::format("{:016x}", v); }

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw UsageError(fmt::format("cannot read '{}'", p.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, std::string_view text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream o(p, std::ios::binary);
  if (!o) throw PlaceError(Errc::Io, fmt::format("cannot write '{}'", p.string()));
  o << text;
  if (!o) throw PlaceError(Errc::Io, fmt::format("write failed for '{}'", p.string()));
}

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
  if (!j.is_object()) throw UsageError(fmt::format("{}: expected a JSON object", where));
  for (const auto& item : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || item.key() == a;
    if (!ok) throw UsageError(fmt::format("{}: unknown key '{}'", where, item.key()));
  }
}

template <typename T>
void read(const json& j, const char* key, T& dst, std::string_view where) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw UsageError(fmt::format("{}: bad value for '{}'", where, key));
  }
}

template <typename T>
void read_opt(const json& j, const char* key, std::optional<T>& dst, std::string_view where) {
  if (!j.contains(key)) return;
  T v{};
  read(j, key, v, where);
  dst = v;
}

PPOConfig parse_ppo(const json& j) {
  check_keys(j,
             {"gamma", "clip_eps", "entropy_coef", "value_coef", "learning_rate", "adam_beta1", "adam_beta2",
              "adam_eps", "max_grad_norm", "epochs_per_update", "episodes_per_update", "minibatches",
              "episodes_total", "normalizer", "reward_mode"},
             "ppo");
  PPOConfig c;
  read(j, "gamma", c.gamma, "ppo");
  read(j, "clip_eps", c.clip_eps, "ppo");
  read(j, "entropy_coef", c.entropy_coef, "ppo");
  read(j, "value_coef", c.value_coef, "ppo");
  read(j, "learning_rate", c.learning_rate, "ppo");
  read(j, "adam_beta1", c.adam_beta1, "ppo");
  read(j, "adam_beta2", c.adam_beta2, "ppo");
  read(j, "adam_eps", c.adam_eps, "ppo");
  read(j, "max_grad_norm", c.max_grad_norm, "ppo");
  read(j, "epochs_per_update", c.epochs_per_update, "ppo");
  read(j, "episodes_per_update", c.episodes_per_update, "ppo");
  read(j, "minibatches", c.minibatches, "ppo");
  read(j, "episodes_total", c.episodes_total, "ppo");
  read(j, "normalizer", c.normalizer, "ppo");
  std::string mode = "normalized";
  read(j, "reward_mode", mode, "ppo");
  if (mode == "normalized") {
    c.reward_mode = RewardMode::NegHpwlNormalized;
  } else if (mode == "raw") {
    c.reward_mode = RewardMode::NegHpwl;
  } else {
    throw UsageError(fmt::format("ppo: reward_mode must be 'normalized' or 'raw', got '{}'", mode));
  }
  try {
    c.validate();
  } catch (const PlaceError& e) {
    throw UsageError(fmt::format("ppo: {}", e.what()));
  }
  return c;
}

RunConfig parse_config(json j, const fs::path& base_dir) {
  check_keys(j,
             {"netlist", "arch", "fixed_place", "checkpoint", "manage_types", "seeds", "network", "ppo", "decompose",
              "baseline", "gen", "dump_step"},
             "config");
  RunConfig c;
  auto path_key = [&](const char* key, std::optional<fs::path>& dst) {
    std::optional<std::string> s;
    read_opt(j, key, s, "config");
    if (s) dst = fs::path(*s).is_absolute() ? fs::path(*s) : base_dir / *s;
  };
  path_key("netlist", c.netlist);
  path_key("arch", c.arch);
  path_key("fixed_place", c.fixed_place);
  path_key("checkpoint", c.checkpoint);
  std::vector<std::string> types;
  read(j, "manage_types", types, "config");
  for (const auto& t : types) {
    auto bt = parse_block_type(t);
    if (!bt) throw UsageError(fmt::format("config: unknown block type '{}' in manage_types", t));
    c.manage_types.push_back(*bt);
  }
  read(j, "seeds", c.seeds, "config");
  if (c.seeds.empty()) throw UsageError("config: seeds must not be empty");
  if (j.contains("network")) {
    c.network = j["network"];
    check_keys(c.network, {"conv_channels", "residual_blocks", "gat_dim", "gat_heads", "embed_dim", "hidden_dim"},
               "network");
  }
  if (j.contains("ppo")) c.ppo = parse_ppo(j["ppo"]);
  if (j.contains("decompose")) {
    const json& d = j["decompose"];
    check_keys(d, {"granularity", "episodes_per_subtask", "iterations", "settings", "include_baseline"}, "decompose");
    read(d, "granularity", c.decompose.granularity, "decompose");
    read(d, "episodes_per_subtask", c.decompose.episodes_per_subtask, "decompose");
    read(d, "iterations", c.decompose.iterations, "decompose");
    read(d, "settings", c.decompose.settings, "decompose");
    read(d, "include_baseline", c.decompose.include_baseline, "decompose");
  }
  if (j.contains("baseline")) {
    check_keys(j["baseline"], {"kind"}, "baseline");
    read(j["baseline"], "kind", c.baseline_kind, "baseline");
  }
  if (j.contains("gen")) {
    const json& g = j["gen"];
    check_keys(g, {"preset", "n_clb", "n_io", "n_nets", "max_fanout", "seed", "width", "height", "io_capacity"},
               "gen");
    read(g, "preset", c.gen.preset, "gen");
    read_opt(g, "n_clb", c.gen.n_clb, "gen");
    read_opt(g, "n_io", c.gen.n_io, "gen");
    read_opt(g, "n_nets", c.gen.n_nets, "gen");
    read_opt(g, "max_fanout", c.gen.max_fanout, "gen");
    read_opt(g, "seed", c.gen.seed, "gen");
    read_opt(g, "width", c.gen.width, "gen");
    read_opt(g, "height", c.gen.height, "gen");
    read_opt(g, "io_capacity", c.gen.io_capacity, "gen");
  }
  read(j, "dump_step", c.dump_step, "config");
  c.hash = hex(fnv1a(j.dump()));
  return c;
}

struct Instance {
  BoardArch arch;
  Netlist netlist;
  PlacementState fixed;
  std::vector<BlockId> managed;
};

const fs::path& require(const std::optional<fs::path>& p, const char* key) {
  if (!p) throw UsageError(fmt::format("config: '{}' is required", key));
  if (!fs::exists(*p)) throw UsageError(fmt::format("{} file not found: '{}'", key, p->string()));
  return *p;
}

Instance load_instance(const RunConfig& cfg) {
  Instance inst;
  inst.netlist = parse_netlist(read_file(require(cfg.netlist, "netlist")));
  inst.arch = parse_arch(read_file(require(cfg.arch, "arch")));
  if (cfg.fixed_place) {
    inst.fixed = import_vpr_place(read_file(require(cfg.fixed_place, "fixed_place")), inst.netlist, inst.arch);
  } else {
    inst.fixed = PlacementState::empty_for(inst.arch, inst.netlist);
  }
  std::vector<BlockId> context;
  for (const Block& b : inst.netlist.blocks()) {
    if (inst.fixed.is_placed(b.id)) continue;
    bool managed = cfg.manage_types.empty();
    for (BlockType t : cfg.manage_types) managed = managed || t == b.type;
    (managed ? inst.managed : context).push_back(b.id);
  }
  if (inst.managed.empty()) throw UsageError("no blocks left to place: every managed block is already fixed");
  // Blocks neither fixed nor managed are placed greedily and then held fixed.
  greedy_complete(inst.arch, inst.netlist, inst.fixed, placement_order(inst.netlist, context));
  return inst;
}

NetworkSpec network_spec(const RunConfig& cfg, const BoardArch& arch) {
  NetworkSpec s = NetworkSpec::for_board(arch.width(), arch.height());
  const json& n = cfg.network;
  read(n, "conv_channels", s.conv_channels, "network");
  read(n, "residual_blocks", s.residual_blocks, "network");
  read(n, "gat_dim", s.gat_dim, "network");
  read(n, "gat_heads", s.gat_heads, "network");
  read(n, "embed_dim", s.embed_dim, "network");
  read(n, "hidden_dim", s.hidden_dim, "network");
  try {
    s.validate();
  } catch (const PlaceError& e) {
    throw UsageError(fmt::format("network: {}", e.what()));
  }
  return s;
}

void write_placement(const fs::path& dir, const std::string& stem, const PlacementState& state, const Instance& inst,
                     const RunConfig& cfg) {
  const std::string nl_name = cfg.netlist ? cfg.netlist->filename().string() : std::string{};
  write_file(dir / (stem + ".place"), export_vpr_place(state, inst.netlist, inst.arch, nl_name));
  write_file(dir / (stem + "_per_net.csv"),
             fmt::format("# config_hash={}\n", cfg.hash) + per_net_csv(total_hpwl(state, inst.netlist)));
}

// Runs each job in its own process, at most `jobs` at a time. Returns the
// number of failed jobs.
int fan_out(const std::vector<std::function<void()>>& tasks, int jobs) {
  int failed = 0;
  if (jobs <= 1) {
    for (const auto& t : tasks) t();
    return 0;
  }
  std::size_t next = 0;
  int running = 0;
  std::fflush(nullptr);
  while (next < tasks.size() || running > 0) {
    while (running < jobs && next < tasks.size()) {
      const pid_t pid = fork();
      if (pid < 0) throw PlaceError(Errc::Io, "fork failed");
      if (pid == 0) {
        int code = 0;
        try {
          tasks[next]();
        } catch (const std::exception& e) {
          std::fprintf(stderr, "error: %s\n", e.what());
          code = 1;
        }
        std::fflush(nullptr);
        _exit(code);
      }
      ++next;
      ++running;
    }
    int status = 0;
    if (wait(&status) > 0) {
      --running;
      if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) ++failed;
    }
  }
  return failed;
}

int cmd_train(const RunConfig& cfg, const fs::path& out_dir, std::ostream& out) {
  const Instance inst = load_instance(cfg);
  const NetworkSpec spec = network_spec(cfg, inst.arch);
  for (std::uint64_t seed : cfg.seeds) {
    const fs::path dir = cfg.seeds.size() == 1 ? out_dir : out_dir / fmt::format("seed{}", seed);
    const TrainResult r = train(inst.arch, inst.netlist, inst.fixed, inst.managed, spec, cfg.ppo, seed);
    write_file(dir / "curve.csv", train_stats_csv(r.stats, cfg.hash));
    write_file(dir / "checkpoint.json", to_checkpoint(r.weights));
    write_placement(dir, "best", r.best_placement, inst, cfg);
    out << fmt::format("seed {} best_hpwl {} normalizer {}\n", seed, r.best_hpwl, r.normalizer);
  }
  return kOk;
}

std::string subtasks_csv(const DecompositionResult& r, std::string_view hash) {
  std::string s = fmt::format("# config_hash={}\n", hash);
  s +=
      "iteration,chunk,slot,had_prev,stored_rep,stored_dec,start_rep,start_dec,start_checkpoint,end_checkpoint,"
      "context_before,context_after,episode_offset,best_hpwl\n";
  for (const auto& t : r.subtasks) {
    s += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", t.iteration, t.chunk, t.slot, t.had_prev ? 1 : 0,
                     hex(t.stored_rep), hex(t.stored_dec), hex(t.start_rep), hex(t.start_dec),
                     hex(t.start_checkpoint), hex(t.end_checkpoint), hex(t.context_before), hex(t.context_after),
                     t.episode_offset, t.best_hpwl);
  }
  return s;
}

int cmd_decompose(const RunConfig& cfg, const fs::path& out_dir, int jobs, std::ostream& out) {
  const Instance inst = load_instance(cfg);
  const NetworkSpec spec = network_spec(cfg, inst.arch);
  const auto& d = cfg.decompose;
  SubtaskPlan plan;
  try {
    plan = make_plan(inst.netlist, inst.managed, d.granularity, d.episodes_per_subtask, d.iterations);
  } catch (const PlaceError& e) {
    throw UsageError(fmt::format("decompose: {}", e.what()));
  }
  std::vector<ReuseSetting> settings;
  for (int s : d.settings) {
    try {
      settings.push_back(ReuseSetting::from_index(s));
    } catch (const PlaceError& e) {
      throw UsageError(fmt::format("decompose: {}", e.what()));
    }
  }

  struct Run {
    std::optional<ReuseSetting> setting;
    std::uint64_t seed;
    fs::path dir;
  };
  std::vector<Run> runs;
  for (const auto& s : settings) {
    for (auto seed : cfg.seeds) runs.push_back({s, seed, out_dir / fmt::format("setting{}_seed{}", s.index(), seed)});
  }
  if (d.include_baseline) {
    for (auto seed : cfg.seeds) runs.push_back({std::nullopt, seed, out_dir / fmt::format("baseline_seed{}", seed)});
  }

  std::vector<std::function<void()>> tasks;
  for (const Run& run : runs) {
    tasks.emplace_back([&, run] {
      ordered_json res;
      if (run.setting) {
        const ReuseSetting setting = *run.setting;
        auto observer = [&](const SubtaskRecord& rec, const ModelWeights& w) {
          write_file(run.dir / checkpoint_name(setting, rec.chunk), to_checkpoint(w));
        };
        const DecompositionResult r =
            run_decomposition(inst.arch, inst.netlist, inst.fixed, plan, setting, spec, cfg.ppo, run.seed, observer);
        write_file(run.dir / "curve.csv", train_stats_csv(r.curve, cfg.hash));
        write_file(run.dir / "boundaries.csv", boundaries_csv(subtask_boundaries(r), cfg.hash));
        write_file(run.dir / "subtasks.csv", subtasks_csv(r, cfg.hash));
        write_placement(run.dir, "final", r.final_placement, inst, cfg);
        res["setting"] = setting.index();
        res["seed"] = run.seed;
        res["final_hpwl"] = r.final_hpwl;
      } else {
        PPOConfig pc = cfg.ppo;
        pc.episodes_total = d.episodes_per_subtask * static_cast<int>(plan.chunks.size()) * d.iterations;
        const TrainResult r = train(inst.arch, inst.netlist, inst.fixed, inst.managed, spec, pc, run.seed);
        write_file(run.dir / "curve.csv", train_stats_csv(r.stats, cfg.hash));
        write_file(run.dir / "checkpoint.json", to_checkpoint(r.weights));
        write_placement(run.dir, "final", r.best_placement, inst, cfg);
        res["setting"] = nullptr;
        res["seed"] = run.seed;
        res["final_hpwl"] = r.best_hpwl;
      }
      write_file(run.dir / "result.json", res.dump(2) + "\n");
    });
  }
  if (fan_out(tasks, jobs) > 0) throw PlaceError(Errc::Io, "one or more runs failed");

  std::vector<SummaryRow> rows;
  const int blocks = static_cast<int>(inst.managed.size());
  auto collect = [&](const std::optional<ReuseSetting>& s) {
    std::vector<double> values;
    for (const Run& run : runs) {
      if (run.setting != s) continue;
      const json res = json::parse(read_file(run.dir / "result.json"));
      values.push_back(res.at("final_hpwl").get<double>());
    }
    return values;
  };
  for (const auto& s : settings) rows.push_back(summary_row(blocks, s, d.granularity, collect(s)));
  if (d.include_baseline) rows.push_back(baseline_row(blocks, collect(std::nullopt)));
  write_file(out_dir / "summary.csv", summary_csv(rows, cfg.hash));
  const std::string table = summary_table(rows);
  write_file(out_dir / "summary.txt", table);
  out << table;
  return kOk;
}

int cmd_baseline(const RunConfig& cfg, const std::string& kind, const fs::path& out_dir, std::ostream& out) {
  if (kind != "greedy" && kind != "random") {
    throw UsageError(fmt::format("baseline kind must be 'greedy' or 'random', got '{}'", kind));
  }
  const Instance inst = load_instance(cfg);
  const auto order = placement_order(inst.netlist, inst.managed);
  const std::vector<std::uint64_t> seeds = kind == "greedy" ? std::vector<std::uint64_t>{0} : cfg.seeds;
  for (auto seed : seeds) {
    PlacementState s = inst.fixed;
    if (kind == "greedy") {
      greedy_complete(inst.arch, inst.netlist, s, order);
    } else {
      Rng rng(derive_seed(seed, {5}));
      random_complete(inst.arch, inst.netlist, s, order, rng);
    }
    validate_state(inst.arch, inst.netlist, s);
    const std::string stem = kind == "greedy" ? "greedy" : fmt::format("random_seed{}", seed);
    write_placement(out_dir, stem, s, inst, cfg);
    const double h = total_hpwl(s, inst.netlist).total;
    if (kind == "greedy") {
      out << fmt::format("greedy hpwl {}\n", h);
    } else {
      out << fmt::format("random seed {} hpwl {}\n", seed, h);
    }
  }
  return kOk;
}

int cmd_gradcheck(bool corrupt, std::uint64_t seed, std::ostream& out) {
  GradcheckOptions opts;
  opts.seed = seed;
  opts.corrupt_gradient = corrupt;
  const auto groups = gradient_check(NetworkSpec::tiny(), opts);
  constexpr double kTol = 1e-4;
  bool ok = true;
  out << fmt::format("{:<28} {:<15} {:>8} {:>14} {}\n", "group", "partition", "checked", "max_rel_error", "status");
  for (const auto& g : groups) {
    const bool pass = g.max_rel_error < kTol;
    ok = ok && pass;
    out << fmt::format("{:<28} {:<15} {:>8} {:>14.3e} {}\n", g.name, to_string(g.partition), g.checked,
                       g.max_rel_error, pass ? "ok" : "FAIL");
  }
  out << (ok ? "gradcheck passed\n" : "gradcheck FAILED\n");
  return ok ? kOk : kFailure;
}

SyntheticParams gen_params(const GenConfig& g, std::uint64_t seed, int& width, int& height, int& io_cap) {
  SyntheticParams p;
  if (g.preset == "tseng") {
    p = {56, 174, 300, 8, seed};
    width = 10;
    height = 10;
    io_cap = 5;
  } else if (g.preset == "small") {
    p = {30, 16, 40, 4, seed};
    width = 8;
    height = 8;
    io_cap = 2;
  } else if (g.preset == "toy") {
    p = {4, 4, 6, 3, seed};
    width = 5;
    height = 5;
    io_cap = 1;
  } else {
    throw UsageError(fmt::format("gen: unknown preset '{}' (tseng, small, toy)", g.preset));
  }
  if (g.n_clb) p.n_clb = *g.n_clb;
  if (g.n_io) p.n_io = *g.n_io;
  if (g.n_nets) p.n_nets = *g.n_nets;
  if (g.max_fanout) p.max_fanout = *g.max_fanout;
  if (g.seed) p.seed = *g.seed;
  if (g.width) width = *g.width;
  if (g.height) height = *g.height;
  if (g.io_capacity) io_cap = *g.io_capacity;
  return p;
}

// IO blocks spread evenly around the ring, walking it clockwise from (0, 0).
PlacementState spread_io(const BoardArch& arch, const Netlist& netlist) {
  std::vector<Position> ring;
  const int w = arch.width();
  const int h = arch.height();
  for (int x = 0; x < w; ++x) ring.push_back({x, 0});
  for (int y = 1; y < h; ++y) ring.push_back({w - 1, y});
  for (int x = w - 2; x >= 0 && h > 1; --x) ring.push_back({x, h - 1});
  for (int y = h - 2; y >= 1 && w > 1; --y) ring.push_back({0, y});
  std::vector<BlockId> io;
  for (const Block& b : netlist.blocks()) {
    if (b.type == BlockType::IO) io.push_back(b.id);
  }
  PlacementState s = PlacementState::empty_for(arch, netlist);
  const std::size_t n = io.size();
  for (std::size_t k = 0; k < n; ++k) {
    Position p = ring[k * ring.size() / n];
    if (s.occupancy(p) >= arch.capacity(p)) {
      throw PlaceError(Errc::InfeasibleParams, "IO ring has too little capacity for the IO blocks");
    }
    place(arch, netlist, s, io[k], p);
  }
  return s;
}

int cmd_gen(const RunConfig& cfg, std::optional<std::string> preset, std::uint64_t seed, const fs::path& out_dir,
            std::ostream& out) {
  GenConfig g = cfg.gen;
  if (preset) g.preset = *preset;
  int w = 0;
  int h = 0;
  int io_cap = 0;
  const SyntheticParams p = gen_params(g, seed, w, h, io_cap);
  const Netlist nl = generate_synthetic(p);
  const BoardArch arch = BoardArch::perimeter_io(w, h, io_cap);
  if (arch.total_capacity(BlockType::CLB) < p.n_clb) {
    throw PlaceError(Errc::InfeasibleParams, fmt::format("{}x{} board has fewer CLB slots than {} CLBs", w, h, p.n_clb));
  }
  const PlacementState fixed = spread_io(arch, nl);
  write_file(out_dir / "netlist.net", serialize_netlist(nl));
  write_file(out_dir / "board.arch", serialize_arch(arch));
  write_file(out_dir / "fixed.place", export_vpr_place(fixed, nl, arch, "netlist.net", true));
  ordered_json c;
  c["netlist"] = "netlist.net";
  c["arch"] = "board.arch";
  c["fixed_place"] = "fixed.place";
  c["manage_types"] = {"CLB"};
  c["seeds"] = {1, 2, 3};
  write_file(out_dir / "config.json", c.dump(2) + "\n");
  out << fmt::format("generated {} CLB + {} IO blocks, {} nets on a {}x{} board in '{}'\n", p.n_clb, p.n_io,
                     nl.num_nets(), w, h, out_dir.string());
  return kOk;
}

int cmd_export(const RunConfig& cfg, std::optional<fs::path> checkpoint, const fs::path& out_dir, std::ostream& out) {
  const Instance inst = load_instance(cfg);
  if (!checkpoint) checkpoint = cfg.checkpoint;
  const ModelWeights w = from_checkpoint(read_file(require(checkpoint, "checkpoint")));
  const PlacementState s = greedy_rollout(inst.arch, inst.netlist, inst.fixed, inst.managed, w);
  validate_state(inst.arch, inst.netlist, s);
  write_placement(out_dir, "export", s, inst, cfg);
  out << fmt::format("export hpwl {}\n", total_hpwl(s, inst.netlist).total);
  return kOk;
}

int cmd_dump_state(const RunConfig& cfg, std::optional<int> step, const fs::path& out_dir, std::ostream& out) {
  const Instance inst = load_instance(cfg);
  const int k = step.value_or(cfg.dump_step);
  const auto order = placement_order(inst.netlist, inst.managed);
  if (k < 0 || k >= static_cast<int>(order.size())) {
    throw UsageError(fmt::format("dump-state: step must be in 0..{}", order.size() - 1));
  }
  PlacementState s = inst.fixed;
  greedy_complete(inst.arch, inst.netlist, s, std::span<const BlockId>(order).first(static_cast<std::size_t>(k)));
  const BlockId id = order[static_cast<std::size_t>(k)];
  const StateTensor t = assemble_state(inst.arch, s, inst.netlist, id);
  const char* names[kNumChannels] = {"capacity", "input", "output", "wire_mask"};
  for (int c = 0; c < kNumChannels; ++c) {
    write_file(out_dir / fmt::format("state_{}.csv", names[c]),
               channel_csv(t.channels[static_cast<std::size_t>(c)]));
  }
  Grid<double> mask(t.width(), t.height(), 0.0);
  for (int i = 0; i < mask.size(); ++i) mask[i] = t.current_mask[i];
  write_file(out_dir / "state_mask.csv", channel_csv(mask));
  const GraphInput g = gather_graph_input(inst.netlist, id, s, inst.arch);
  std::vector<BlockId> ids{id};
  for (BlockId n : inst.netlist.neighbors(id)) ids.push_back(n);
  std::string nodes = "block,type_clb,type_io,type_dsp,type_ram,index,x,y\n";
  for (std::size_t r = 0; r < g.nodes.size(); ++r) {
    const auto& f = g.nodes[r];
    nodes += fmt::format("{},{},{},{},{},{},{},{}\n", inst.netlist.block(ids[r]).name, f[0], f[1], f[2], f[3], f[4],
                         f[5], f[6]);
  }
  write_file(out_dir / "state_nodes.csv", nodes);
  out << fmt::format("state at step {} (block '{}') written to '{}'\n", k, inst.netlist.block(id).name,
                     out_dir.string());
  return kOk;
}

void configure_logging() {
  spdlog::set_pattern("[%l] %v");
  const char* level = std::getenv("PLACE_LOG");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::warn);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  configure_logging();
  CLI::App app{"Reinforcement-learning FPGA placement toolkit", "rlplace"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_path = "out";
  int jobs = 1;
  app.add_option("--config", config_path, "JSON experiment config");
  app.add_option("--seed", seed, "Overrides the config's seed list with one seed");
  app.add_option("--out", out_path, "Output directory")->capture_default_str();
  app.add_option("--jobs", jobs, "Parallel processes for independent runs")->check(CLI::PositiveNumber);

  auto* train_cmd = app.add_subcommand("train", "Train one policy on the whole instance");
  auto* decompose_cmd = app.add_subcommand("decompose", "Divide-and-conquer training over weight-reuse settings");
  auto* baseline_cmd = app.add_subcommand("baseline", "Greedy wire-mask or random placement");
  std::optional<std::string> kind;
  baseline_cmd->add_option("--kind", kind, "greedy or random");
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the network gradients");
  bool corrupt = false;
  gradcheck_cmd->add_flag("--corrupt-gradient", corrupt, "Negative control: perturb the analytic gradient");
  auto* gen_cmd = app.add_subcommand("gen", "Write a synthetic netlist, board and fixed IO placement");
  std::optional<std::string> preset;
  gen_cmd->add_option("--preset", preset, "tseng, small or toy");
  auto* export_cmd = app.add_subcommand("export-place", "Argmax rollout of a checkpoint to a .place file");
  std::optional<std::string> checkpoint;
  export_cmd->add_option("--checkpoint", checkpoint, "Checkpoint JSON");
  auto* dump_cmd = app.add_subcommand("dump-state", "Write the state channels seen at one step");
  std::optional<int> step;
  dump_cmd->add_option("--step", step, "Blocks placed greedily before the dump");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    RunConfig cfg;
    fs::path config_dir = fs::current_path();
    json j = json::object();
    if (!config_path.empty()) {
      const fs::path p(config_path);
      if (!fs::exists(p)) throw UsageError(fmt::format("config file not found: '{}'", p.string()));
      try {
        j = json::parse(read_file(p));
      } catch (const json::parse_error& e) {
        throw UsageError(fmt::format("config '{}': {}", p.string(), e.what()));
      }
      config_dir = fs::absolute(p).parent_path();
    }
    if (seed) j["seeds"] = {*seed};
    cfg = parse_config(j, config_dir);
    const fs::path out_dir(out_path);

    auto needs_config = [&](const char* cmd) {
      if (config_path.empty()) throw UsageError(fmt::format("{}: --config is required", cmd));
    };
    if (train_cmd->parsed()) {
      needs_config("train");
      return cmd_train(cfg, out_dir, out);
    }
    if (decompose_cmd->parsed()) {
      needs_config("decompose");
      return cmd_decompose(cfg, out_dir, jobs, out);
    }
    if (baseline_cmd->parsed()) {
      needs_config("baseline");
      return cmd_baseline(cfg, kind.value_or(cfg.baseline_kind), out_dir, out);
    }
    if (gradcheck_cmd->parsed()) return cmd_gradcheck(corrupt, cfg.seeds.front(), out);
    if (gen_cmd->parsed()) return cmd_gen(cfg, preset, cfg.seeds.front(), out_dir, out);
    if (export_cmd->parsed()) {
      needs_config("export-place");
      std::optional<fs::path> ck;
      if (checkpoint) ck = fs::path(*checkpoint);
      return cmd_export(cfg, ck, out_dir, out);
    }
    if (dump_cmd->parsed()) {
      needs_config("dump-state");
      return cmd_dump_state(cfg, step, out_dir, out);
    }
    return kUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const PlaceError& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return kFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace rlplace::cli
