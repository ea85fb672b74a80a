#include "rlplace/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include <fmt/format.h>
#include "json.hpp"

#include "rlplace/error.hpp"
#include "rlplace/rng.hpp"

namespace rlplace {

namespace {

constexpr double kLeakySlope = 0.2;
constexpr int kCheckpointVersion = 1;
constexpr std::string_view kCheckpointFormat = "rlplace-weights";

// Positions of each parameter in schema order.
struct Layout {
  int stem_w = 0;
  int stem_b = 1;
  std::vector<std::array<int, 4>> res;  // conv1.w, conv1.b, conv2.w, conv2.b
  int gat_w = 0, gat_src = 0, gat_dst = 0, gat_b = 0;
  int fuse_w = 0, fuse_b = 0;
  int ph_w = 0, ph_b = 0, pg_w = 0, pg_b = 0, ps_w = 0, ps_b = 0;
  int vh_w = 0, vh_b = 0, vo_w = 0, vo_b = 0;
};

Layout layout_for(const NetworkSpec& spec) {
  Layout l;
  int next = 2;
  for (int r = 0; r < spec.residual_blocks; ++r) {
    l.res.push_back({next, next + 1, next + 2, next + 3});
    next += 4;
  }
  l.gat_w = next++;
  l.gat_src = next++;
  l.gat_dst = next++;
  l.gat_b = next++;
  l.fuse_w = next++;
  l.fuse_b = next++;
  l.ph_w = next++;
  l.ph_b = next++;
  l.pg_w = next++;
  l.pg_b = next++;
  l.ps_w = next++;
  l.ps_b = next++;
  l.vh_w = next++;
  l.vh_b = next++;
  l.vo_w = next++;
  l.vo_b = next++;
  return l;
}

// 3x3, stride 1, zero padding. Tensors are [channels][height][width].
void conv3x3(std::span<const double> in, int cin, std::span<const double> w, std::span<const double> b, int cout,
             int height, int width, std::span<double> out) {
  const int cells = height * width;
  for (int o = 0; o < cout; ++o) {
    double* dst = out.data() + static_cast<std::ptrdiff_t>(o) * cells;
    std::fill(dst, dst + cells, b[static_cast<std::size_t>(o)]);
    for (int i = 0; i < cin; ++i) {
      const double* src = in.data() + static_cast<std::ptrdiff_t>(i) * cells;
      const double* k = w.data() + (static_cast<std::ptrdiff_t>(o) * cin + i) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const int y0 = std::max(0, 1 - ky);
        const int y1 = std::min(height, height + 1 - ky);
        for (int kx = 0; kx < 3; ++kx) {
          const double kv = k[ky * 3 + kx];
          if (kv == 0.0) continue;
          const int x0 = std::max(0, 1 - kx);
          const int x1 = std::min(width, width + 1 - kx);
          for (int y = y0; y < y1; ++y) {
            const double* srow = src + (y + ky - 1) * width + (kx - 1);
            double* drow = dst + y * width;
            for (int x = x0; x < x1; ++x) drow[x] += kv * srow[x];
          }
        }
      }
    }
  }
}

// Accumulates dW, db and (when din is non-empty) din.
void conv3x3_backward(std::span<const double> in, int cin, std::span<const double> w, int cout, int height,
                      int width, std::span<const double> dout, std::span<double> dw, std::span<double> db,
                      std::span<double> din) {
  const int cells = height * width;
  for (int o = 0; o < cout; ++o) {
    const double* g = dout.data() + static_cast<std::ptrdiff_t>(o) * cells;
    double bsum = 0.0;
    for (int c = 0; c < cells; ++c) bsum += g[c];
    db[static_cast<std::size_t>(o)] += bsum;
    for (int i = 0; i < cin; ++i) {
      const double* src = in.data() + static_cast<std::ptrdiff_t>(i) * cells;
      double* dsrc = din.empty() ? nullptr : din.data() + static_cast<std::ptrdiff_t>(i) * cells;
      const std::ptrdiff_t kbase = (static_cast<std::ptrdiff_t>(o) * cin + i) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const int y0 = std::max(0, 1 - ky);
        const int y1 = std::min(height, height + 1 - ky);
        for (int kx = 0; kx < 3; ++kx) {
          const int x0 = std::max(0, 1 - kx);
          const int x1 = std::min(width, width + 1 - kx);
          const double kv = w[static_cast<std::size_t>(kbase + ky * 3 + kx)];
          double acc = 0.0;
          for (int y = y0; y < y1; ++y) {
            const int off = (y + ky - 1) * width + (kx - 1);
            const double* grow = g + y * width;
            for (int x = x0; x < x1; ++x) acc += grow[x] * src[off + x];
            if (dsrc) {
              for (int x = x0; x < x1; ++x) dsrc[off + x] += kv * grow[x];
            }
          }
          dw[static_cast<std::size_t>(kbase + ky * 3 + kx)] += acc;
        }
      }
    }
  }
}

// out = W x + b, W is [rows][cols].
void dense(std::span<const double> w, std::span<const double> b, std::span<const double> x, int rows, int cols,
           std::vector<double>& out) {
  out.assign(static_cast<std::size_t>(rows), 0.0);
  for (int r = 0; r < rows; ++r) {
    const double* wr = w.data() + static_cast<std::ptrdiff_t>(r) * cols;
    double acc = b[static_cast<std::size_t>(r)];
    for (int c = 0; c < cols; ++c) acc += wr[c] * x[static_cast<std::size_t>(c)];
    out[static_cast<std::size_t>(r)] = acc;
  }
}

void dense_backward(std::span<const double> w, std::span<const double> x, std::span<const double> dout, int rows,
                    int cols, std::span<double> dw, std::span<double> db, std::span<double> dx) {
  for (int r = 0; r < rows; ++r) {
    const double g = dout[static_cast<std::size_t>(r)];
    if (g == 0.0) continue;
    db[static_cast<std::size_t>(r)] += g;
    double* dwr = dw.data() + static_cast<std::ptrdiff_t>(r) * cols;
    const double* wr = w.data() + static_cast<std::ptrdiff_t>(r) * cols;
    for (int c = 0; c < cols; ++c) dwr[c] += g * x[static_cast<std::size_t>(c)];
    if (!dx.empty()) {
      for (int c = 0; c < cols; ++c) dx[static_cast<std::size_t>(c)] += g * wr[c];
    }
  }
}

void relu_inplace(std::vector<double>& v) {
  for (double& x : v) x = x > 0.0 ? x : 0.0;
}

std::vector<double> relu_of(const std::vector<double>& v) {
  std::vector<double> out(v);
  relu_inplace(out);
  return out;
}

// d *= 1[pre > 0]
void relu_grad(std::span<const double> pre, std::span<double> d) {
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!(pre[i] > 0.0)) d[i] = 0.0;
  }
}

void put_u64(std::uint64_t& h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xffU;
    h *= 0x100000001b3ULL;
  }
}

}  // namespace

std::string_view to_string(Partition p) {
  return p == Partition::Representation ? "representation" : "decision";
}

NetworkSpec NetworkSpec::tiny(int width, int height) {
  NetworkSpec s;
  s.width = width;
  s.height = height;
  s.conv_channels = 2;
  s.residual_blocks = 1;
  s.gat_dim = 3;
  s.gat_heads = 2;
  s.embed_dim = 4;
  s.hidden_dim = 5;
  return s;
}

void NetworkSpec::validate() const {
  if (width < 1 || height < 1 || conv_channels < 1 || residual_blocks < 0 || gat_dim < 1 || gat_heads < 1 ||
      embed_dim < 1 || hidden_dim < 1) {
    throw PlaceError(Errc::ShapeMismatch, "network dimensions must be >= 1 (residual_blocks >= 0)");
  }
}

std::vector<ParamInfo> parameter_schema(const NetworkSpec& spec) {
  spec.validate();
  const int c = spec.conv_channels;
  const int kd = spec.gat_heads * spec.gat_dim;
  const int e = spec.embed_dim;
  const int hd = spec.hidden_dim;
  const int cells = spec.cells();
  constexpr auto R = Partition::Representation;
  constexpr auto D = Partition::Decision;

  std::vector<ParamInfo> s;
  auto add = [&](std::string name, std::vector<int> shape, Partition p, int fan_in, bool bias) {
    s.push_back({std::move(name), std::move(shape), p, fan_in, bias});
  };
  add("board.conv_in.weight", {c, kNumChannels, 3, 3}, R, kNumChannels * 9, false);
  add("board.conv_in.bias", {c}, R, kNumChannels * 9, true);
  for (int r = 0; r < spec.residual_blocks; ++r) {
    add(fmt::format("board.res{}.conv1.weight", r), {c, c, 3, 3}, R, c * 9, false);
    add(fmt::format("board.res{}.conv1.bias", r), {c}, R, c * 9, true);
    add(fmt::format("board.res{}.conv2.weight", r), {c, c, 3, 3}, R, c * 9, false);
    add(fmt::format("board.res{}.conv2.bias", r), {c}, R, c * 9, true);
  }
  add("graph.gat.weight", {kd, kNodeFeatureDim}, R, kNodeFeatureDim, false);
  add("graph.gat.att_src", {spec.gat_heads, spec.gat_dim}, R, spec.gat_dim, false);
  add("graph.gat.att_dst", {spec.gat_heads, spec.gat_dim}, R, spec.gat_dim, false);
  add("graph.gat.bias", {kd}, R, kNodeFeatureDim, true);
  add("fusion.weight", {e, c + kd}, R, c + kd, false);
  add("fusion.bias", {e}, R, c + kd, true);
  add("policy.hidden.weight", {hd, e}, D, e, false);
  add("policy.hidden.bias", {hd}, D, e, true);
  add("policy.grid.weight", {cells, hd}, D, hd, false);
  add("policy.grid.bias", {cells}, D, hd, true);
  add("policy.spatial.weight", {c, hd}, D, hd, false);
  add("policy.spatial.bias", {c}, D, hd, true);
  add("value.hidden.weight", {hd, e}, D, e, false);
  add("value.hidden.bias", {hd}, D, e, true);
  add("value.out.weight", {1, hd}, D, hd, false);
  add("value.out.bias", {1}, D, hd, true);
  return s;
}

ModelWeights ModelWeights::zeros(const NetworkSpec& spec) {
  ModelWeights w;
  w.spec_ = spec;
  for (const ParamInfo& info : parameter_schema(spec)) {
    std::size_t n = 1;
    for (int d : info.shape) n *= static_cast<std::size_t>(d);
    w.params_.push_back({info.name, info.partition, info.shape, std::vector<double>(n, 0.0)});
  }
  return w;
}

NamedTensor& ModelWeights::param(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw PlaceError(Errc::SchemaMismatch, fmt::format("no parameter named '{}'", name));
}

const NamedTensor& ModelWeights::param(std::string_view name) const {
  return const_cast<ModelWeights*>(this)->param(name);
}

std::size_t ModelWeights::num_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.data.size();
  return n;
}

void ModelWeights::set_zero() {
  for (auto& p : params_) std::fill(p.data.begin(), p.data.end(), 0.0);
}

void ModelWeights::axpy(double scale, const ModelWeights& other) {
  if (params_.size() != other.params_.size()) throw PlaceError(Errc::SchemaMismatch, "axpy over different schemas");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& a = params_[i].data;
    const auto& b = other.params_[i].data;
    for (std::size_t j = 0; j < a.size(); ++j) a[j] += scale * b[j];
  }
}

ModelWeights init_weights(const NetworkSpec& spec, std::uint64_t seed) {
  ModelWeights w = ModelWeights::zeros(spec);
  const auto schema = parameter_schema(spec);
  Rng rng(derive_seed(seed, {0x696e6974ULL}));
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (schema[i].is_bias) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(schema[i].fan_in));
    for (double& v : w.params()[i].data) v = (2.0 * rng.uniform() - 1.0) * bound;
  }
  return w;
}

GraphInput gather_graph_input(const Netlist& netlist, BlockId id, const PlacementState& placement,
                              const BoardArch& arch) {
  GraphInput g;
  const auto nb = netlist.neighbors(id);
  g.nodes.reserve(nb.size() + 1);
  g.nodes.push_back(node_features(netlist, id, placement, arch));
  for (BlockId n : nb) g.nodes.push_back(node_features(netlist, n, placement, arch));
  return g;
}

ForwardOutput forward(const ModelWeights& weights, const StateTensor& state, const GraphInput& graph,
                      ForwardTrace* trace) {
  const NetworkSpec& spec = weights.spec();
  if (state.width() != spec.width || state.height() != spec.height) {
    throw PlaceError(Errc::ShapeMismatch, fmt::format("state is {}x{}, network expects {}x{}", state.width(),
                                                      state.height(), spec.width, spec.height));
  }
  for (const auto& ch : state.channels) {
    if (ch.width() != spec.width || ch.height() != spec.height) {
      throw PlaceError(Errc::ShapeMismatch, "state channel size disagrees with the network");
    }
  }
  if (graph.nodes.empty()) throw PlaceError(Errc::ShapeMismatch, "graph input needs the current block row");

  ForwardTrace local;
  ForwardTrace& t = trace ? *trace : local;
  const Layout l = layout_for(spec);
  const auto P = [&](int idx) -> std::span<const double> {
    return weights.params()[static_cast<std::size_t>(idx)].data;
  };
  const int c = spec.conv_channels;
  const int h = spec.height;
  const int w = spec.width;
  const int cells = spec.cells();
  const int heads = spec.gat_heads;
  const int dim = spec.gat_dim;
  const int kd = heads * dim;

  // board encoder
  t.input.resize(static_cast<std::size_t>(kNumChannels * cells));
  for (int ch = 0; ch < kNumChannels; ++ch) {
    const auto src = state.channels[static_cast<std::size_t>(ch)].cells();
    std::copy(src.begin(), src.end(), t.input.begin() + static_cast<std::ptrdiff_t>(ch) * cells);
  }
  t.stem_pre.assign(static_cast<std::size_t>(c * cells), 0.0);
  conv3x3(t.input, kNumChannels, P(l.stem_w), P(l.stem_b), c, h, w, t.stem_pre);
  std::vector<double> x = relu_of(t.stem_pre);

  const auto blocks = static_cast<std::size_t>(spec.residual_blocks);
  t.block_in.resize(blocks);
  t.block_mid_pre.resize(blocks);
  t.block_mid.resize(blocks);
  t.block_sum.resize(blocks);
  for (std::size_t r = 0; r < blocks; ++r) {
    const auto& ids = l.res[r];
    t.block_in[r] = x;
    t.block_mid_pre[r].assign(static_cast<std::size_t>(c * cells), 0.0);
    conv3x3(x, c, P(ids[0]), P(ids[1]), c, h, w, t.block_mid_pre[r]);
    t.block_mid[r] = relu_of(t.block_mid_pre[r]);
    t.block_sum[r].assign(static_cast<std::size_t>(c * cells), 0.0);
    conv3x3(t.block_mid[r], c, P(ids[2]), P(ids[3]), c, h, w, t.block_sum[r]);
    for (std::size_t i = 0; i < x.size(); ++i) t.block_sum[r][i] += x[i];
    x = relu_of(t.block_sum[r]);
  }
  t.features = std::move(x);
  t.pooled.assign(static_cast<std::size_t>(c), 0.0);
  for (int ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (int i = 0; i < cells; ++i) s += t.features[static_cast<std::size_t>(ch * cells + i)];
    t.pooled[static_cast<std::size_t>(ch)] = s / cells;
  }

  // graph attention, centred on row 0
  t.nodes = graph.nodes;
  const int m = static_cast<int>(t.nodes.size());
  t.z.assign(static_cast<std::size_t>(m * kd), 0.0);
  {
    const auto gw = P(l.gat_w);
    for (int j = 0; j < m; ++j) {
      const auto& xj = t.nodes[static_cast<std::size_t>(j)];
      for (int r = 0; r < kd; ++r) {
        double acc = 0.0;
        for (int f = 0; f < kNodeFeatureDim; ++f) {
          acc += gw[static_cast<std::size_t>(r * kNodeFeatureDim + f)] * xj[static_cast<std::size_t>(f)];
        }
        t.z[static_cast<std::size_t>(j * kd + r)] = acc;
      }
    }
  }
  t.score_pre.assign(static_cast<std::size_t>(m * heads), 0.0);
  t.attention.assign(static_cast<std::size_t>(m * heads), 0.0);
  t.gat_pre.assign(P(l.gat_b).begin(), P(l.gat_b).end());
  {
    const auto asrc = P(l.gat_src);
    const auto adst = P(l.gat_dst);
    for (int k = 0; k < heads; ++k) {
      double src = 0.0;
      for (int d = 0; d < dim; ++d) src += asrc[static_cast<std::size_t>(k * dim + d)] * t.z[static_cast<std::size_t>(k * dim + d)];
      double mx = -std::numeric_limits<double>::infinity();
      std::vector<double> e(static_cast<std::size_t>(m));
      for (int j = 0; j < m; ++j) {
        double dst = 0.0;
        for (int d = 0; d < dim; ++d) {
          dst += adst[static_cast<std::size_t>(k * dim + d)] * t.z[static_cast<std::size_t>(j * kd + k * dim + d)];
        }
        const double pre = src + dst;
        t.score_pre[static_cast<std::size_t>(j * heads + k)] = pre;
        e[static_cast<std::size_t>(j)] = pre > 0.0 ? pre : kLeakySlope * pre;
        mx = std::max(mx, e[static_cast<std::size_t>(j)]);
      }
      double denom = 0.0;
      for (int j = 0; j < m; ++j) {
        e[static_cast<std::size_t>(j)] = std::exp(e[static_cast<std::size_t>(j)] - mx);
        denom += e[static_cast<std::size_t>(j)];
      }
      for (int j = 0; j < m; ++j) {
        const double a = e[static_cast<std::size_t>(j)] / denom;
        t.attention[static_cast<std::size_t>(j * heads + k)] = a;
        for (int d = 0; d < dim; ++d) {
          t.gat_pre[static_cast<std::size_t>(k * dim + d)] += a * t.z[static_cast<std::size_t>(j * kd + k * dim + d)];
        }
      }
    }
  }
  t.gat_out.resize(static_cast<std::size_t>(kd));
  for (int i = 0; i < kd; ++i) {
    const double v = t.gat_pre[static_cast<std::size_t>(i)];
    t.gat_out[static_cast<std::size_t>(i)] = v > 0.0 ? v : std::expm1(v);
  }

  // fusion
  t.fused_in = t.pooled;
  t.fused_in.insert(t.fused_in.end(), t.gat_out.begin(), t.gat_out.end());
  dense(P(l.fuse_w), P(l.fuse_b), t.fused_in, spec.embed_dim, c + kd, t.fused_pre);
  t.fused = relu_of(t.fused_pre);

  // policy head: per-cell bias from the embedding plus an embedding-gated
  // read of the encoder feature map
  dense(P(l.ph_w), P(l.ph_b), t.fused, spec.hidden_dim, spec.embed_dim, t.policy_hidden_pre);
  t.policy_hidden = relu_of(t.policy_hidden_pre);
  std::vector<double> grid;
  dense(P(l.pg_w), P(l.pg_b), t.policy_hidden, cells, spec.hidden_dim, grid);
  dense(P(l.ps_w), P(l.ps_b), t.policy_hidden, c, spec.hidden_dim, t.spatial_gate);

  ForwardOutput out;
  out.logits = Grid<double>(w, h, 0.0);
  for (int i = 0; i < cells; ++i) {
    double v = grid[static_cast<std::size_t>(i)];
    for (int ch = 0; ch < c; ++ch) {
      v += t.spatial_gate[static_cast<std::size_t>(ch)] * t.features[static_cast<std::size_t>(ch * cells + i)];
    }
    out.logits[i] = v;
  }

  // value head
  dense(P(l.vh_w), P(l.vh_b), t.fused, spec.hidden_dim, spec.embed_dim, t.value_hidden_pre);
  t.value_hidden = relu_of(t.value_hidden_pre);
  std::vector<double> v;
  dense(P(l.vo_w), P(l.vo_b), t.value_hidden, 1, spec.hidden_dim, v);
  out.value = v[0];
  return out;
}

ForwardOutput forward(const ModelWeights& weights, const StateTensor& state, const Netlist& netlist,
                      const PlacementState& placement, const BoardArch& arch) {
  return forward(weights, state, gather_graph_input(netlist, state.block, placement, arch));
}

void backward(const ModelWeights& weights, const ForwardTrace& t, const Grid<double>& dlogits, double dvalue,
              Gradients& grads) {
  const NetworkSpec& spec = weights.spec();
  if (!(grads.spec() == spec)) throw PlaceError(Errc::SchemaMismatch, "gradient buffer built for another spec");
  const Layout l = layout_for(spec);
  const auto P = [&](int idx) -> std::span<const double> {
    return weights.params()[static_cast<std::size_t>(idx)].data;
  };
  const auto G = [&](int idx) -> std::span<double> { return grads.params()[static_cast<std::size_t>(idx)].data; };
  const int c = spec.conv_channels;
  const int h = spec.height;
  const int w = spec.width;
  const int cells = spec.cells();
  const int heads = spec.gat_heads;
  const int dim = spec.gat_dim;
  const int kd = heads * dim;
  const int hd = spec.hidden_dim;
  const int e = spec.embed_dim;

  // policy head
  std::vector<double> dlog(dlogits.cells().begin(), dlogits.cells().end());
  std::vector<double> dph(static_cast<std::size_t>(hd), 0.0);
  dense_backward(P(l.pg_w), t.policy_hidden, dlog, cells, hd, G(l.pg_w), G(l.pg_b), dph);
  std::vector<double> dgate(static_cast<std::size_t>(c), 0.0);
  std::vector<double> dfeat(static_cast<std::size_t>(c * cells), 0.0);
  for (int ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    const double gate = t.spatial_gate[static_cast<std::size_t>(ch)];
    for (int i = 0; i < cells; ++i) {
      const double g = dlog[static_cast<std::size_t>(i)];
      acc += g * t.features[static_cast<std::size_t>(ch * cells + i)];
      dfeat[static_cast<std::size_t>(ch * cells + i)] += g * gate;
    }
    dgate[static_cast<std::size_t>(ch)] = acc;
  }
  dense_backward(P(l.ps_w), t.policy_hidden, dgate, c, hd, G(l.ps_w), G(l.ps_b), dph);
  relu_grad(t.policy_hidden_pre, dph);
  std::vector<double> dfused(static_cast<std::size_t>(e), 0.0);
  dense_backward(P(l.ph_w), t.fused, dph, hd, e, G(l.ph_w), G(l.ph_b), dfused);

  // value head
  std::vector<double> dvh(static_cast<std::size_t>(hd), 0.0);
  const double dv[1] = {dvalue};
  dense_backward(P(l.vo_w), t.value_hidden, dv, 1, hd, G(l.vo_w), G(l.vo_b), dvh);
  relu_grad(t.value_hidden_pre, dvh);
  dense_backward(P(l.vh_w), t.fused, dvh, hd, e, G(l.vh_w), G(l.vh_b), dfused);

  // fusion
  relu_grad(t.fused_pre, dfused);
  std::vector<double> din(static_cast<std::size_t>(c + kd), 0.0);
  dense_backward(P(l.fuse_w), t.fused_in, dfused, e, c + kd, G(l.fuse_w), G(l.fuse_b), din);

  // mean pool
  for (int ch = 0; ch < c; ++ch) {
    const double g = din[static_cast<std::size_t>(ch)] / cells;
    for (int i = 0; i < cells; ++i) dfeat[static_cast<std::size_t>(ch * cells + i)] += g;
  }

  // residual blocks, last to first
  std::vector<double> dx = std::move(dfeat);
  for (int r = spec.residual_blocks - 1; r >= 0; --r) {
    const auto ri = static_cast<std::size_t>(r);
    const auto& ids = l.res[ri];
    std::vector<double> dsum = dx;
    relu_grad(t.block_sum[ri], dsum);
    std::vector<double> dmid(static_cast<std::size_t>(c * cells), 0.0);
    conv3x3_backward(t.block_mid[ri], c, P(ids[2]), c, h, w, dsum, G(ids[2]), G(ids[3]), dmid);
    relu_grad(t.block_mid_pre[ri], dmid);
    dx = dsum;  // skip connection
    conv3x3_backward(t.block_in[ri], c, P(ids[0]), c, h, w, dmid, G(ids[0]), G(ids[1]), dx);
  }
  relu_grad(t.stem_pre, dx);
  conv3x3_backward(t.input, kNumChannels, P(l.stem_w), c, h, w, dx, G(l.stem_w), G(l.stem_b), {});

  // graph attention
  const int m = static_cast<int>(t.nodes.size());
  std::vector<double> dpre(static_cast<std::size_t>(kd));
  for (int i = 0; i < kd; ++i) {
    const double v = t.gat_pre[static_cast<std::size_t>(i)];
    const double slope = v > 0.0 ? 1.0 : t.gat_out[static_cast<std::size_t>(i)] + 1.0;
    dpre[static_cast<std::size_t>(i)] = din[static_cast<std::size_t>(c + i)] * slope;
  }
  auto dgb = G(l.gat_b);
  for (int i = 0; i < kd; ++i) dgb[static_cast<std::size_t>(i)] += dpre[static_cast<std::size_t>(i)];

  std::vector<double> dz(static_cast<std::size_t>(m * kd), 0.0);
  const auto asrc = P(l.gat_src);
  const auto adst = P(l.gat_dst);
  auto dasrc = G(l.gat_src);
  auto dadst = G(l.gat_dst);
  for (int k = 0; k < heads; ++k) {
    std::vector<double> dalpha(static_cast<std::size_t>(m));
    double weighted = 0.0;
    for (int j = 0; j < m; ++j) {
      const double a = t.attention[static_cast<std::size_t>(j * heads + k)];
      double da = 0.0;
      for (int d = 0; d < dim; ++d) {
        const auto zi = static_cast<std::size_t>(j * kd + k * dim + d);
        const double g = dpre[static_cast<std::size_t>(k * dim + d)];
        dz[zi] += a * g;
        da += g * t.z[zi];
      }
      dalpha[static_cast<std::size_t>(j)] = da;
      weighted += a * da;
    }
    double dsrc = 0.0;
    for (int j = 0; j < m; ++j) {
      const double a = t.attention[static_cast<std::size_t>(j * heads + k)];
      const double de = a * (dalpha[static_cast<std::size_t>(j)] - weighted);
      const double pre = t.score_pre[static_cast<std::size_t>(j * heads + k)];
      const double ds = de * (pre > 0.0 ? 1.0 : kLeakySlope);
      dsrc += ds;
      for (int d = 0; d < dim; ++d) {
        const auto ai = static_cast<std::size_t>(k * dim + d);
        const auto zi = static_cast<std::size_t>(j * kd + k * dim + d);
        dadst[ai] += ds * t.z[zi];
        dz[zi] += ds * adst[ai];
      }
    }
    for (int d = 0; d < dim; ++d) {
      const auto ai = static_cast<std::size_t>(k * dim + d);
      dasrc[ai] += dsrc * t.z[ai];
      dz[ai] += dsrc * asrc[ai];
    }
  }
  auto dgw = G(l.gat_w);
  for (int j = 0; j < m; ++j) {
    const auto& xj = t.nodes[static_cast<std::size_t>(j)];
    for (int r = 0; r < kd; ++r) {
      const double g = dz[static_cast<std::size_t>(j * kd + r)];
      if (g == 0.0) continue;
      for (int f = 0; f < kNodeFeatureDim; ++f) {
        dgw[static_cast<std::size_t>(r * kNodeFeatureDim + f)] += g * xj[static_cast<std::size_t>(f)];
      }
    }
  }
}

Grid<double> masked_policy(const Grid<double>& logits, const ActionMask& mask) {
  if (logits.width() != mask.width() || logits.height() != mask.height()) {
    throw PlaceError(Errc::ShapeMismatch, "logits and mask differ in size");
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < mask.size(); ++i) {
    if (mask[i]) mx = std::max(mx, logits[i]);
  }
  if (mx == -std::numeric_limits<double>::infinity()) {
    throw PlaceError(Errc::NoLegalAction, "no legal cell in the action mask");
  }
  Grid<double> p(logits.width(), logits.height(), 0.0);
  double z = 0.0;
  for (int i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (double& v : p.cells()) v /= z;
  return p;
}

std::pair<WeightPartition, WeightPartition> split_weights(const ModelWeights& weights) {
  WeightPartition rep{weights.spec(), Partition::Representation, {}};
  WeightPartition dec{weights.spec(), Partition::Decision, {}};
  for (const auto& p : weights.params()) {
    (p.partition == Partition::Representation ? rep : dec).params.push_back(p);
  }
  return {std::move(rep), std::move(dec)};
}

ModelWeights merge_weights(const WeightPartition& representation, const WeightPartition& decision) {
  if (representation.partition != Partition::Representation || decision.partition != Partition::Decision) {
    throw PlaceError(Errc::SchemaMismatch, "merge_weights expects (representation, decision)");
  }
  if (!(representation.spec == decision.spec)) {
    throw PlaceError(Errc::SchemaMismatch, "partitions come from different network specs");
  }
  ModelWeights out = ModelWeights::zeros(representation.spec);
  std::size_t ri = 0;
  std::size_t di = 0;
  for (auto& p : out.params()) {
    const bool is_rep = p.partition == Partition::Representation;
    const auto& src = is_rep ? representation.params : decision.params;
    std::size_t& idx = is_rep ? ri : di;
    if (idx >= src.size() || src[idx].name != p.name || src[idx].shape != p.shape ||
        src[idx].data.size() != p.data.size() || src[idx].partition != p.partition) {
      throw PlaceError(Errc::SchemaMismatch, fmt::format("partition does not match schema at '{}'", p.name));
    }
    p.data = src[idx].data;
    ++idx;
  }
  if (ri != representation.params.size() || di != decision.params.size()) {
    throw PlaceError(Errc::SchemaMismatch, "partition carries parameters outside the schema");
  }
  return out;
}

std::uint64_t checksum(std::span<const NamedTensor> params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params) {
    for (char ch : p.name) {
      h ^= static_cast<unsigned char>(ch);
      h *= 0x100000001b3ULL;
    }
    for (int d : p.shape) put_u64(h, static_cast<std::uint64_t>(d));
    for (double v : p.data) {
      std::uint64_t bits = 0;
      std::memcpy(&bits, &v, sizeof bits);
      put_u64(h, bits);
    }
  }
  return h;
}

std::string to_checkpoint(const ModelWeights& weights) {
  const NetworkSpec& s = weights.spec();
  nlohmann::ordered_json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["spec"] = {{"width", s.width},           {"height", s.height},       {"conv_channels", s.conv_channels},
               {"residual_blocks", s.residual_blocks}, {"gat_dim", s.gat_dim}, {"gat_heads", s.gat_heads},
               {"embed_dim", s.embed_dim},   {"hidden_dim", s.hidden_dim}};
  auto params = nlohmann::ordered_json::array();
  for (const auto& p : weights.params()) {
    nlohmann::ordered_json e;
    e["name"] = p.name;
    e["partition"] = std::string(to_string(p.partition));
    e["shape"] = p.shape;
    e["data"] = p.data;
    params.push_back(std::move(e));
  }
  j["params"] = std::move(params);
  return j.dump() + "\n";
}

ModelWeights from_checkpoint(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw PlaceError(Errc::SchemaMismatch, fmt::format("checkpoint is not valid JSON: {}", e.what()));
  }
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat) {
      throw PlaceError(Errc::SchemaMismatch, "not an rlplace weight checkpoint");
    }
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw PlaceError(Errc::SchemaMismatch, fmt::format("unsupported checkpoint version {}", j.at("version").dump()));
    }
    const auto& js = j.at("spec");
    NetworkSpec s;
    s.width = js.at("width").get<int>();
    s.height = js.at("height").get<int>();
    s.conv_channels = js.at("conv_channels").get<int>();
    s.residual_blocks = js.at("residual_blocks").get<int>();
    s.gat_dim = js.at("gat_dim").get<int>();
    s.gat_heads = js.at("gat_heads").get<int>();
    s.embed_dim = js.at("embed_dim").get<int>();
    s.hidden_dim = js.at("hidden_dim").get<int>();
    ModelWeights w = ModelWeights::zeros(s);
    const auto& jp = j.at("params");
    if (jp.size() != w.params().size()) {
      throw PlaceError(Errc::SchemaMismatch, fmt::format("checkpoint has {} parameters, schema expects {}", jp.size(),
                                                         w.params().size()));
    }
    for (std::size_t i = 0; i < jp.size(); ++i) {
      auto& p = w.params()[i];
      const auto& e = jp[i];
      if (e.at("name").get<std::string>() != p.name || e.at("partition").get<std::string>() != to_string(p.partition) ||
          e.at("shape").get<std::vector<int>>() != p.shape) {
        throw PlaceError(Errc::SchemaMismatch, fmt::format("parameter {} does not match schema entry '{}'", i, p.name));
      }
      auto data = e.at("data").get<std::vector<double>>();
      if (data.size() != p.data.size()) {
        throw PlaceError(Errc::SchemaMismatch, fmt::format("parameter '{}' has {} values, expected {}", p.name,
                                                           data.size(), p.data.size()));
      }
      p.data = std::move(data);
    }
    return w;
  } catch (const nlohmann::json::exception& e) {
    throw PlaceError(Errc::SchemaMismatch, fmt::format("malformed checkpoint: {}", e.what()));
  }
}

namespace {

// Synthetic inputs for the gradient check: random channels, a partial mask
// and a small neighbourhood of random node features.
struct GradcheckCase {
  StateTensor state;
  GraphInput graph;
  Grid<double> logit_weights;
  int action = 0;
  double target = 0.0;
};

GradcheckCase make_gradcheck_case(const NetworkSpec& spec, Rng& rng) {
  GradcheckCase gc;
  for (auto& ch : gc.state.channels) {
    ch = Grid<double>(spec.width, spec.height);
    for (double& v : ch.cells()) v = rng.uniform();
  }
  gc.state.current_mask = ActionMask(spec.width, spec.height, 0);
  for (auto& v : gc.state.current_mask.cells()) v = rng.uniform() < 0.6 ? 1 : 0;
  gc.state.current_mask[0] = 1;
  std::vector<int> legal;
  for (int i = 0; i < gc.state.current_mask.size(); ++i) {
    if (gc.state.current_mask[i]) legal.push_back(i);
  }
  gc.action = legal[static_cast<std::size_t>(rng.below(static_cast<int>(legal.size())))];
  for (int n = 0; n < 4; ++n) {
    NodeFeatures f{};
    f[static_cast<std::size_t>(rng.below(kNumBlockTypes))] = 1.0;
    for (std::size_t k = 4; k < f.size(); ++k) f[k] = 2.0 * rng.uniform() - 1.0;
    gc.graph.nodes.push_back(f);
  }
  gc.state.current_block = gc.graph.nodes[0];
  gc.logit_weights = Grid<double>(spec.width, spec.height);
  for (double& v : gc.logit_weights.cells()) v = rng.uniform() - 0.5;
  gc.target = rng.uniform() * 2.0 - 1.0;
  return gc;
}

// L = -log p(action) + 0.5 (V - target)^2 + sum_i c_i z_i
double gradcheck_loss(const ForwardOutput& out, const GradcheckCase& gc, Grid<double>* dlogits, double* dvalue) {
  const Grid<double> p = masked_policy(out.logits, gc.state.current_mask);
  double loss = -std::log(p[gc.action]) + 0.5 * (out.value - gc.target) * (out.value - gc.target);
  for (int i = 0; i < out.logits.size(); ++i) loss += gc.logit_weights[i] * out.logits[i];
  if (dlogits) {
    *dlogits = Grid<double>(out.logits.width(), out.logits.height(), 0.0);
    for (int i = 0; i < out.logits.size(); ++i) {
      (*dlogits)[i] = p[i] - (i == gc.action ? 1.0 : 0.0) + gc.logit_weights[i];
    }
  }
  if (dvalue) *dvalue = out.value - gc.target;
  return loss;
}

}  // namespace

std::vector<GradcheckGroup> gradient_check(const NetworkSpec& spec, const GradcheckOptions& options) {
  ModelWeights w = init_weights(spec, options.seed);
  // Non-zero biases so every bias path is exercised.
  Rng rng(derive_seed(options.seed, {0x67726164ULL}));
  for (auto& p : w.params()) {
    for (double& v : p.data) {
      if (v == 0.0) v = 0.2 * (rng.uniform() - 0.5);
    }
  }
  const GradcheckCase gc = make_gradcheck_case(spec, rng);

  ForwardTrace trace;
  const ForwardOutput out = forward(w, gc.state, gc.graph, &trace);
  Grid<double> dlogits;
  double dvalue = 0.0;
  gradcheck_loss(out, gc, &dlogits, &dvalue);
  Gradients grads = ModelWeights::zeros(spec);
  backward(w, trace, dlogits, dvalue, grads);
  if (options.corrupt_gradient) {
    for (auto& p : grads.params()) {
      for (double& v : p.data) v = v * 1.01 + 1e-3;
    }
  }

  std::vector<GradcheckGroup> groups;
  for (std::size_t pi = 0; pi < w.params().size(); ++pi) {
    auto& param = w.params()[pi];
    GradcheckGroup g{param.name, param.partition, 0, 0.0};
    for (std::size_t k = 0; k < param.data.size(); ++k) {
      const double orig = param.data[k];
      param.data[k] = orig + options.step;
      const double lp = gradcheck_loss(forward(w, gc.state, gc.graph), gc, nullptr, nullptr);
      param.data[k] = orig - options.step;
      const double lm = gradcheck_loss(forward(w, gc.state, gc.graph), gc, nullptr, nullptr);
      param.data[k] = orig;
      const double numeric = (lp - lm) / (2.0 * options.step);
      const double analytic = grads.params()[pi].data[k];
      const double rel = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
      g.max_rel_error = std::max(g.max_rel_error, rel);
      ++g.checked;
    }
    groups.push_back(std::move(g));
  }
  return groups;
}

}  // namespace rlplace
