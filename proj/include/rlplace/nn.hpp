#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rlplace/board.hpp"
#include "rlplace/features.hpp"
#include "rlplace/grid.hpp"
#include "rlplace/netlist.hpp"

namespace rlplace {

// Sizes of the policy/value network. The output grid always matches the
// board grid.
struct NetworkSpec {
  int width = 1;
  int height = 1;
  int conv_channels = 8;
  int residual_blocks = 2;
  int gat_dim = 16;
  int gat_heads = 1;
  int embed_dim = 32;
  int hidden_dim = 64;

  // Throws ShapeMismatch when any dimension is out of range.
  void validate() const;
  [[nodiscard]] int cells() const { return width * height; }

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;

  static NetworkSpec for_board(int width, int height) {
    NetworkSpec s;
    s.width = width;
    s.height = height;
    return s;
  }
  // Small enough for exhaustive finite-difference checks.
  static NetworkSpec tiny(int width = 4, int height = 3);
};

// Representation = board encoder + graph encoder + fusion; decision = policy
// and value heads. The unit of selective reuse between subtasks.
enum class Partition : std::uint8_t { Representation, Decision };
std::string_view to_string(Partition p);

struct ParamInfo {
  std::string name;
  std::vector<int> shape;
  Partition partition = Partition::Representation;
  int fan_in = 1;
  bool is_bias = false;
};

// Stable, ordered parameter schema; a function of the NetworkSpec only.
std::vector<ParamInfo> parameter_schema(const NetworkSpec& spec);

struct NamedTensor {
  std::string name;
  Partition partition = Partition::Representation;
  std::vector<int> shape;
  std::vector<double> data;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

class ModelWeights {
 public:
  ModelWeights() = default;
  static ModelWeights zeros(const NetworkSpec& spec);

  [[nodiscard]] const NetworkSpec& spec() const { return spec_; }
  [[nodiscard]] std::span<NamedTensor> params() { return params_; }
  [[nodiscard]] std::span<const NamedTensor> params() const { return params_; }
  [[nodiscard]] NamedTensor& param(std::string_view name);
  [[nodiscard]] const NamedTensor& param(std::string_view name) const;
  [[nodiscard]] std::size_t num_scalars() const;

  void set_zero();
  // this += scale * other (same schema).
  void axpy(double scale, const ModelWeights& other);

  friend bool operator==(const ModelWeights&, const ModelWeights&) = default;

 private:
  NetworkSpec spec_;
  std::vector<NamedTensor> params_;
};

// Same schema as the weights they differentiate.
using Gradients = ModelWeights;

// Weights uniform in +-1/sqrt(fan_in), biases zero; deterministic per seed.
ModelWeights init_weights(const NetworkSpec& spec, std::uint64_t seed);

// Node features the graph attention layer reads: row 0 is the current block,
// then its netlist neighbours in ascending id order.
struct GraphInput {
  std::vector<NodeFeatures> nodes;
};

GraphInput gather_graph_input(const Netlist& netlist, BlockId id, const PlacementState& placement,
                              const BoardArch& arch);

struct ForwardOutput {
  Grid<double> logits;
  double value = 0.0;
};

// Activations kept by forward() for the reverse pass.
struct ForwardTrace {
  // board encoder, all [channels][cells]
  std::vector<double> input;
  std::vector<double> stem_pre;
  std::vector<std::vector<double>> block_in;
  std::vector<std::vector<double>> block_mid_pre;
  std::vector<std::vector<double>> block_mid;
  std::vector<std::vector<double>> block_sum;
  std::vector<double> features;  // final encoder map, [C][cells]
  std::vector<double> pooled;

  // graph attention
  std::vector<NodeFeatures> nodes;
  std::vector<double> z;           // [nodes][heads * dim]
  std::vector<double> score_pre;   // [nodes][heads], before LeakyReLU
  std::vector<double> attention;   // [nodes][heads]
  std::vector<double> gat_pre;     // [heads * dim], before ELU
  std::vector<double> gat_out;

  // fusion and heads
  std::vector<double> fused_in;
  std::vector<double> fused_pre;
  std::vector<double> fused;
  std::vector<double> policy_hidden_pre;
  std::vector<double> policy_hidden;
  std::vector<double> spatial_gate;
  std::vector<double> value_hidden_pre;
  std::vector<double> value_hidden;
};

// Throws ShapeMismatch if the state or graph input disagrees with the NetworkSpec.
ForwardOutput forward(const ModelWeights& weights, const StateTensor& state, const GraphInput& graph,
                      ForwardTrace* trace = nullptr);
ForwardOutput forward(const ModelWeights& weights, const StateTensor& state, const Netlist& netlist,
                      const PlacementState& placement, const BoardArch& arch);

// Accumulates dL/dparams into `grads` given dL/dlogits and dL/dvalue for the
// forward pass recorded in `trace`.
void backward(const ModelWeights& weights, const ForwardTrace& trace, const Grid<double>& dlogits, double dvalue,
              Gradients& grads);

// Softmax over the legal cells only; illegal cells get exactly 0. Throws
// NoLegalAction on an empty mask.
Grid<double> masked_policy(const Grid<double>& logits, const ActionMask& mask);

struct WeightPartition {
  NetworkSpec spec;
  Partition partition = Partition::Representation;
  std::vector<NamedTensor> params;

  friend bool operator==(const WeightPartition&, const WeightPartition&) = default;
};

std::pair<WeightPartition, WeightPartition> split_weights(const ModelWeights& weights);
// Throws SchemaMismatch unless the halves are exactly the two partitions of
// one spec's schema.
ModelWeights merge_weights(const WeightPartition& representation, const WeightPartition& decision);

// FNV-1a over names, shapes and the raw bytes of every value.
std::uint64_t checksum(std::span<const NamedTensor> params);
inline std::uint64_t checksum(const WeightPartition& part) { return checksum(part.params); }
inline std::uint64_t checksum(const ModelWeights& w) { return checksum(w.params()); }

// Versioned JSON container: spec, named arrays, partition tags.
std::string to_checkpoint(const ModelWeights& weights);
// Throws SchemaMismatch on a malformed container or a schema that does not
// match its own spec.
ModelWeights from_checkpoint(std::string_view text);

struct GradcheckGroup {
  std::string name;
  Partition partition = Partition::Representation;
  int checked = 0;
  double max_rel_error = 0.0;
};

struct GradcheckOptions {
  double step = 1e-5;
  std::uint64_t seed = 1;
  // Negative control: perturbs the analytic gradient before comparison.
  bool corrupt_gradient = false;
};

// Central finite differences against backward() on every scalar parameter,
// through a loss mixing a masked log-probability, a squared value error and
// a linear logit term. Relative error is |a - n| / max(1, |n|).
std::vector<GradcheckGroup> gradient_check(const NetworkSpec& spec, const GradcheckOptions& options = {});

}  // namespace rlplace
