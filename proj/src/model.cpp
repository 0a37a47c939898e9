#include "sake/model.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace sake {

namespace {

thread_local ForwardProfile* g_profile = nullptr;

struct StageTimer {
  double* sink;
  std::chrono::steady_clock::time_point start;
  explicit StageTimer(double* s) : sink(s) {
    if (sink) start = std::chrono::steady_clock::now();
  }
  ~StageTimer() {
    if (sink) *sink += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

Tensor glorot_uniform(int64_t fan_in, int64_t fan_out, Shape shape, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t = rand_uniform(std::move(shape), rng, -bound, bound);
  t.set_requires_grad(true);
  return t;
}

Linear make_linear(int64_t in, int64_t out, std::mt19937_64& rng, bool bias = true) {
  Linear l;
  l.w = glorot_uniform(in, out, {in, out}, rng);
  if (bias) {
    l.b = Tensor(Shape{out});
    l.b.set_requires_grad(true);
  }
  return l;
}

Mlp2 make_mlp2(int64_t in, int64_t hidden, int64_t out, std::mt19937_64& rng) {
  return Mlp2{make_linear(in, hidden, rng), make_linear(hidden, out, rng)};
}

std::vector<int32_t> dst_of(const EdgeList& edges) {
  std::vector<int32_t> dst;
  dst.reserve(edges.size());
  for (const auto& e : edges) dst.push_back(e.second);
  return dst;
}

std::vector<int32_t> src_of(const EdgeList& edges) {
  std::vector<int32_t> src;
  src.reserve(edges.size());
  for (const auto& e : edges) src.push_back(e.first);
  return src;
}

}  // namespace

void set_forward_profile(ForwardProfile* profile) { g_profile = profile; }

Tensor linear_apply(const Tensor& x, const Linear& l) {
  Tensor out = matmul(x, l.w);
  if (l.b.defined()) out = add(out, l.b);
  return out;
}

Tensor mlp2_silu(const Mlp2& m, const Tensor& x) {
  return silu(linear_apply(silu(linear_apply(x, m.l0)), m.l1));
}

EdgeList complete_digraph(int64_t n_nodes) {
  EdgeList edges;
  edges.reserve(n_nodes * (n_nodes - 1));
  for (int32_t u = 0; u < n_nodes; ++u) {
    for (int32_t v = 0; v < n_nodes; ++v) {
      if (u != v) edges.emplace_back(u, v);
    }
  }
  return edges;
}

SakeModelParams make_sake_model(const SakeConfig& config) {
  if (config.depth < 0 || config.width < 1 || config.heads < 1) {
    throw std::invalid_argument("model config: depth >= 0, width >= 1, heads >= 1 required");
  }
  if (config.width % config.heads != 0) {
    throw std::invalid_argument("model config: heads must divide width");
  }
  if (config.lambda_count() < 1) throw std::invalid_argument("model config: n_lambda >= 1");
  if (config.n_rbf < 2) throw std::invalid_argument("model config: n_rbf >= 2");

  std::mt19937_64 rng(config.seed);
  const int64_t C = config.width;
  const int64_t L = config.lambda_count();
  const int64_t H = config.heads;

  SakeModelParams model;
  model.config = config;
  model.embed_in = make_linear(config.attr_dim, C, rng);
  model.layers.reserve(config.depth);
  for (int64_t k = 0; k < config.depth; ++k) {
    SakeLayerParams p;
    p.edge_mlp = make_mlp2(2 * C + 1 + config.n_rbf, C, C, rng);
    p.filter_net = make_linear(2 * C, config.n_rbf, rng);
    p.attn_vec = glorot_uniform(C, H, {C, H}, rng);
    if (config.cutoff > 0) {
      for (int64_t h = 1; h <= H; ++h) {
        p.head_cutoffs.push_back(config.cutoff * static_cast<double>(h) / static_cast<double>(H));
      }
    }
    p.spatial_proj = make_linear(C, L, rng, /*bias=*/false);
    p.spatial_mlp = make_mlp2(L, C, C, rng);
    p.gate_mlp = make_mlp2(C, C, 1, rng);
    p.velocity_mix = glorot_uniform(L, 1, {L}, rng);
    p.node_mlp = make_mlp2(3 * C, C, C, rng);
    model.layers.push_back(std::move(p));
  }
  model.energy_head = make_mlp2(C, C, 1, rng);
  return model;
}

namespace {

void visit_linear(const std::string& prefix, const Linear& l,
                  std::vector<std::pair<std::string, Tensor>>& out) {
  out.emplace_back(prefix + ".w", l.w);
  if (l.b.defined()) out.emplace_back(prefix + ".b", l.b);
}

void visit_mlp2(const std::string& prefix, const Mlp2& m,
                std::vector<std::pair<std::string, Tensor>>& out) {
  visit_linear(prefix + ".0", m.l0, out);
  visit_linear(prefix + ".1", m.l1, out);
}

}  // namespace

std::vector<std::pair<std::string, Tensor>> named_parameters(const SakeModelParams& model) {
  std::vector<std::pair<std::string, Tensor>> out;
  visit_linear("embed_in", model.embed_in, out);
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    const std::string pre = "layers." + std::to_string(k);
    const SakeLayerParams& p = model.layers[k];
    visit_mlp2(pre + ".edge_mlp", p.edge_mlp, out);
    visit_linear(pre + ".filter_net", p.filter_net, out);
    out.emplace_back(pre + ".attn_vec", p.attn_vec);
    visit_linear(pre + ".spatial_proj", p.spatial_proj, out);
    visit_mlp2(pre + ".spatial_mlp", p.spatial_mlp, out);
    visit_mlp2(pre + ".gate_mlp", p.gate_mlp, out);
    out.emplace_back(pre + ".velocity_mix", p.velocity_mix);
    visit_mlp2(pre + ".node_mlp", p.node_mlp, out);
  }
  visit_mlp2("energy_head", model.energy_head, out);
  return out;
}

Tensor edge_embed(const SakeLayerParams& p, const SakeConfig& cfg, const Tensor& h,
                  const EdgeGeometry& geo, const EdgeList& edges) {
  if (p.filter_net.w.extent(1) != cfg.n_rbf) {
    throw std::invalid_argument("edge_embed: filter output width does not match RBF count");
  }
  const Tensor hu = gather_rows(h, src_of(edges));
  const Tensor hv = gather_rows(h, dst_of(edges));
  const Tensor pair = concat({hu, hv}, 1);
  const Tensor filt = silu(linear_apply(pair, p.filter_net));
  const Tensor rbf = rbf_expand(geo.dist, cfg.n_rbf, cfg.d_max);
  const Tensor conv = mul(rbf, filt);
  const Tensor dist_col = reshape(geo.dist, {geo.dist.numel(), 1});
  return mlp2_silu(p.edge_mlp, concat({pair, dist_col, conv}, 1));
}

namespace {

// Per-(destination, head) max of the raw scores, looked up per edge.
// Detached: softmax is shift-invariant, so subtracting a constant leaves
// values and gradients exact while keeping exp() in range.
Tensor segment_max_const(const Tensor& scores, const std::vector<int32_t>& dst, int64_t n_nodes) {
  const int64_t n_heads = scores.extent(1);
  std::vector<double> mx(n_nodes * n_heads, -1e300);
  const auto& sv = scores.value();
  for (std::size_t e = 0; e < dst.size(); ++e) {
    for (int64_t head = 0; head < n_heads; ++head) {
      double& m = mx[dst[e] * n_heads + head];
      m = std::max(m, sv[e * n_heads + head]);
    }
  }
  Tensor out(scores.shape());
  auto& ov = out.value();
  for (std::size_t e = 0; e < dst.size(); ++e) {
    for (int64_t head = 0; head < n_heads; ++head) {
      ov[e * n_heads + head] = mx[dst[e] * n_heads + head];
    }
  }
  return out;
}

}  // namespace

Tensor combined_attention(const SakeLayerParams& p, const Tensor& h_e, const EdgeGeometry& geo,
                          const EdgeList& edges, int64_t n_nodes) {
  const std::vector<int32_t> dst = dst_of(edges);
  const int64_t n_heads = p.attn_vec.extent(1);

  const Tensor scores = celu(matmul(h_e, p.attn_vec));  // [E x H]
  const Tensor shifted = exp(sub(scores, segment_max_const(scores, dst, n_nodes)));
  const Tensor sem_denom = gather_rows(scatter_add_rows(shifted, dst, n_nodes), dst);
  const Tensor semantic = div(shifted, sem_denom);

  Tensor prod;
  if (p.head_cutoffs.empty()) {
    prod = semantic;
  } else {
    std::vector<Tensor> cols;
    cols.reserve(n_heads);
    for (int64_t head = 0; head < n_heads; ++head) {
      Tensor w = cutoff_weight(geo.dist, p.head_cutoffs[head]);
      cols.push_back(reshape(w, {w.numel(), 1}));
    }
    prod = mul(concat(cols, 1), semantic);
  }
  const Tensor denom = gather_rows(add_scalar(scatter_add_rows(prod, dst, n_nodes), 1e-10), dst);
  return div(prod, denom);
}

Tensor apply_attention(const Tensor& h_e, const Tensor& att) {
  const int64_t width = h_e.extent(1);
  const int64_t n_heads = att.extent(1);
  if (width % n_heads != 0) {
    throw std::invalid_argument("apply_attention: heads must divide embedding width");
  }
  return mul(h_e, repeat_cols(att, width / n_heads));
}

Tensor edge_combinations(const SakeLayerParams& p, const Tensor& h_e_att, const EdgeGeometry& geo,
                         const EdgeList& edges, int64_t n_nodes) {
  // tanh bounds each scalar coefficient to (-1, 1); the direction vectors
  // stay untouched so the combination remains exactly equivariant
  const Tensor lam = tanh(linear_apply(h_e_att, p.spatial_proj));  // [E x L]
  return scatter_add_rows(row_outer(lam, geo.unit), dst_of(edges), n_nodes);
}

namespace {

Tensor spatial_from_combinations(const SakeLayerParams& p, const Tensor& combos) {
  const Tensor norms = sqrt(add_scalar(reduce_sum(square(combos), 2), kNormEps * kNormEps));
  return mlp2_silu(p.spatial_mlp, norms);
}

std::pair<Tensor, Tensor> velocity_from_combinations(const SakeLayerParams& p, const Tensor& h,
                                                     const Tensor& v, const Tensor& x,
                                                     const Tensor& combos) {
  const Tensor gate_pre = linear_apply(silu(linear_apply(h, p.gate_mlp.l0)), p.gate_mlp.l1);
  const Tensor gate = mul_scalar(sigmoid(gate_pre), 2.0);  // velocity scaling in (0, 2)
  const Tensor v_scaled = scale_rows(v, reshape(gate, {gate.extent(0)}));
  const Tensor additive = contract_axis1(combos, p.velocity_mix);
  const Tensor v_next = add(v_scaled, additive);
  return {v_next, add(x, v_next)};
}

}  // namespace

Tensor spatial_attention(const SakeLayerParams& p, const Tensor& h_e_att, const EdgeGeometry& geo,
                         const EdgeList& edges, int64_t n_nodes) {
  return spatial_from_combinations(p, edge_combinations(p, h_e_att, geo, edges, n_nodes));
}

std::pair<Tensor, Tensor> velocity_position_update(const SakeLayerParams& p, const Tensor& h,
                                                   const Tensor& v, const Tensor& x,
                                                   const Tensor& h_e_att, const EdgeGeometry& geo,
                                                   const EdgeList& edges) {
  return velocity_from_combinations(p, h, v, x,
                                    edge_combinations(p, h_e_att, geo, edges, h.extent(0)));
}

GraphState sake_layer_forward(const SakeLayerParams& p, const SakeConfig& cfg,
                              const GraphState& state) {
  const int64_t n_nodes = state.n_nodes();
  EdgeGeometry geo;
  {
    StageTimer t(g_profile ? &g_profile->geometry : nullptr);
    geo = compute_edge_geometry(state.x, state.edges);
  }
  Tensor h_e;
  {
    StageTimer t(g_profile ? &g_profile->edge_embed : nullptr);
    h_e = edge_embed(p, cfg, state.h, geo, state.edges);
  }
  Tensor h_e_att;
  {
    StageTimer t(g_profile ? &g_profile->attention : nullptr);
    h_e_att = apply_attention(h_e, combined_attention(p, h_e, geo, state.edges, n_nodes));
  }
  Tensor combos, h_sa, a_v;
  {
    StageTimer t(g_profile ? &g_profile->spatial : nullptr);
    combos = edge_combinations(p, h_e_att, geo, state.edges, n_nodes);
    h_sa = spatial_from_combinations(p, combos);
    a_v = scatter_add_rows(h_e_att, dst_of(state.edges), n_nodes);
  }
  std::pair<Tensor, Tensor> vx;
  {
    StageTimer t(g_profile ? &g_profile->velocity : nullptr);
    vx = velocity_from_combinations(p, state.h, state.v, state.x, combos);
  }
  GraphState out;
  {
    StageTimer t(g_profile ? &g_profile->node_update : nullptr);
    out.h = mlp2_silu(p.node_mlp, concat({state.h, a_v, h_sa}, 1));
  }
  out.v = vx.first;
  out.x = vx.second;
  out.node_attr = state.node_attr;
  out.edges = state.edges;
  return out;
}

GraphState model_forward(const SakeModelParams& model, const GraphState& state) {
  if (state.node_attr.extent(1) != model.config.attr_dim) {
    throw std::invalid_argument("model_forward: node_attr width " +
                                std::to_string(state.node_attr.extent(1)) +
                                " does not match encoder input " +
                                std::to_string(model.config.attr_dim));
  }
  GraphState cur = state;
  cur.h = linear_apply(state.node_attr, model.embed_in);
  if (!cur.v.defined()) cur.v = Tensor(Shape{cur.x.extent(0), cur.x.extent(1)});
  for (const SakeLayerParams& layer : model.layers) {
    cur = sake_layer_forward(layer, model.config, cur);
  }
  return cur;
}

std::pair<double, Tensor> predict_energy_forces(const SakeModelParams& model,
                                                const GraphState& state) {
  GraphState input = state;
  input.x = Tensor::from_data(state.x.shape(), state.x.value());
  input.x.set_requires_grad(true);

  Tape tape;
  Tape::Scope scope(tape);
  GraphState out = model_forward(model, input);
  Tensor energy = sum_all(
      linear_apply(silu(linear_apply(out.h, model.energy_head.l0)), model.energy_head.l1));
  if (!std::isfinite(energy.item())) {
    throw std::runtime_error("predict_energy_forces: non-finite energy");
  }
  tape.backward(energy);

  Tensor forces(input.x.shape());
  const auto& g = input.x.grad();
  for (int64_t i = 0; i < forces.numel(); ++i) forces.value()[i] = -g[i];
  return {energy.item(), forces};
}

Tensor forecast_positions(const SakeModelParams& model, const GraphState& state) {
  if (!state.v.defined()) {
    throw std::invalid_argument("forecast_positions needs initial velocities");
  }
  return model_forward(model, state).x;
}

Tensor theorem1_lambda_oracle(const Tensor& x, int32_t center) {
  if (x.rank() != 2) throw std::invalid_argument("positions must be [N x n]");
  const int64_t n_nodes = x.extent(0);
  const int64_t dim = x.extent(1);
  if (center < 0 || center >= n_nodes) throw std::invalid_argument("center out of range");
  const int64_t m = n_nodes - 1;

  // raw displacements x_v - x_u per neighbor; f = identity in the proof
  Tensor vecs(Shape{m, dim});
  int64_t row = 0;
  for (int64_t u = 0; u < n_nodes; ++u) {
    if (u == static_cast<int64_t>(center)) continue;
    for (int64_t k = 0; k < dim; ++k) {
      vecs.value()[row * dim + k] = x.value()[center * dim + k] - x.value()[u * dim + k];
    }
    ++row;
  }

  // lambda sets [i = j] and [k = j] - [l = j], one row per combination
  const int64_t n_combo = m + m * m;
  Tensor weights(Shape{n_combo, m});
  for (int64_t i = 0; i < m; ++i) weights.value()[i * m + i] = 1.0;
  for (int64_t k = 0; k < m; ++k) {
    for (int64_t l = 0; l < m; ++l) {
      double* row_w = weights.value().data() + (m + k * m + l) * m;
      row_w[k] += 1.0;
      row_w[l] -= 1.0;
    }
  }

  const Tensor combos = matmul(weights, vecs);  // [n_combo x dim]
  Tensor matrix(Shape{m, m});
  auto norm_of = [&](int64_t r) {
    double acc = 0.0;
    for (int64_t k = 0; k < dim; ++k) {
      const double v = combos.value()[r * dim + k];
      acc += v * v;
    }
    return std::sqrt(acc);
  };
  for (int64_t i = 0; i < m; ++i) matrix.value()[i * m + i] = norm_of(i);
  for (int64_t k = 0; k < m; ++k) {
    for (int64_t l = 0; l < m; ++l) {
      if (k != l) matrix.value()[k * m + l] = norm_of(m + k * m + l);
    }
  }
  return matrix;
}

}  // namespace sake
