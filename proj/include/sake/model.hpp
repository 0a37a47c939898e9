#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sake/geometry.hpp"
#include "sake/tensor.hpp"

namespace sake {

/// Node embeddings, positions, velocities, raw attributes, and the directed
/// edge list they live on. One layer maps a GraphState to a new GraphState;
/// inputs are never mutated.
struct GraphState {
  Tensor h;          // [N x C]; undefined until the input encoder ran
  Tensor x;          // [N x n]
  Tensor v;          // [N x n]
  Tensor node_attr;  // [N x A]
  EdgeList edges;

  int64_t n_nodes() const { return x.extent(0); }
};

struct Linear {
  Tensor w;  // [in x out]
  Tensor b;  // [out]; undefined for bias-free projections
};

struct Mlp2 {
  Linear l0, l1;
};

struct SakeConfig {
  int64_t depth = 4;
  int64_t width = 32;
  int64_t n_lambda = 0;  // 0: defaults to width
  int64_t heads = 4;
  int64_t n_rbf = 50;
  double d_max = 5.0;  // radial basis grid end
  double cutoff = 0.0;  // distance-cutoff range d0; 0 disables the cutoff
  int64_t attr_dim = 1;
  int64_t dim = 3;
  uint64_t seed = 2666;

  int64_t lambda_count() const { return n_lambda > 0 ? n_lambda : width; }
};

struct SakeLayerParams {
  Mlp2 edge_mlp;        // (2C + 1 + n_rbf) -> C -> C, silu
  Linear filter_net;    // 2C -> n_rbf, silu
  Tensor attn_vec;      // [C x H] semantic attention vectors
  std::vector<double> head_cutoffs;  // per-head d0; empty when disabled
  Linear spatial_proj;  // C -> n_lambda, bias-free
  Mlp2 spatial_mlp;     // n_lambda -> C -> C, silu
  Mlp2 gate_mlp;        // C -> C -> 1, final activation 2*sigmoid
  Tensor velocity_mix;  // [n_lambda]
  Mlp2 node_mlp;        // 3C -> C -> C, silu
};

struct SakeModelParams {
  SakeConfig config;
  Linear embed_in;  // A -> C
  std::vector<SakeLayerParams> layers;
  Mlp2 energy_head;  // C -> C -> 1, linear output
};

SakeModelParams make_sake_model(const SakeConfig& config);

/// Stable, ordered traversal used by the optimizer and checkpoints. The
/// returned tensors share storage with the model.
std::vector<std::pair<std::string, Tensor>> named_parameters(const SakeModelParams& model);

Tensor linear_apply(const Tensor& x, const Linear& l);
Tensor mlp2_silu(const Mlp2& m, const Tensor& x);

EdgeList complete_digraph(int64_t n_nodes);

/// phi_e(h_u + h_v + |e| + RBF(|e|) * f_r(h_u + h_v)), per edge; width C.
Tensor edge_embed(const SakeLayerParams& p, const SakeConfig& cfg, const Tensor& h,
                  const EdgeGeometry& geo, const EdgeList& edges);

/// Per-head semantic softmax times distance cutoff, renormalized over each
/// node's incoming edges; [E x H].
Tensor combined_attention(const SakeLayerParams& p, const Tensor& h_e, const EdgeGeometry& geo,
                          const EdgeList& edges, int64_t n_nodes);

/// Head h of the combined weights scales columns [h*C/H, (h+1)*C/H) of h_e.
Tensor apply_attention(const Tensor& h_e, const Tensor& att);

/// Linear combinations sum_u lambda_i(h_e) * unit_uv per node; [N x L x n].
Tensor edge_combinations(const SakeLayerParams& p, const Tensor& h_e_att, const EdgeGeometry& geo,
                         const EdgeList& edges, int64_t n_nodes);

/// Smoothed norms of the combinations fed through the output network; [N x C].
Tensor spatial_attention(const SakeLayerParams& p, const Tensor& h_e_att, const EdgeGeometry& geo,
                         const EdgeList& edges, int64_t n_nodes);

std::pair<Tensor, Tensor> velocity_position_update(const SakeLayerParams& p, const Tensor& h,
                                                   const Tensor& v, const Tensor& x,
                                                   const Tensor& h_e_att, const EdgeGeometry& geo,
                                                   const EdgeList& edges);

GraphState sake_layer_forward(const SakeLayerParams& p, const SakeConfig& cfg,
                              const GraphState& state);

/// Encoder then depth layers; h invariant, (x, v) equivariant.
GraphState model_forward(const SakeModelParams& model, const GraphState& state);

/// E = sum_v energy_head(h_v); F = -dE/dx via the tape. Runs its own tape.
std::pair<double, Tensor> predict_energy_forces(const SakeModelParams& model,
                                                const GraphState& state);

/// Final-layer positions as the predicted future configuration.
Tensor forecast_positions(const SakeModelParams& model, const GraphState& state);

/// Iverson-bracket lambda sets from the universality proof: recovers the
/// center+neighbor distance matrix through the spatial-attention linear
/// combinations with f = identity. Entry (i,i) = |x_v - x_ui|,
/// (i,j) = |x_uj - x_ui|.
Tensor theorem1_lambda_oracle(const Tensor& x, int32_t center);

/// Wall-time accumulators (seconds) for the layer stages; enabled while a
/// profile pointer is installed.
struct ForwardProfile {
  double geometry = 0, edge_embed = 0, attention = 0, spatial = 0, velocity = 0, node_update = 0;
  double total() const {
    return geometry + edge_embed + attention + spatial + velocity + node_update;
  }
};
void set_forward_profile(ForwardProfile* profile);

}  // namespace sake
