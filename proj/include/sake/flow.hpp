#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sake/model.hpp"
#include "sake/tensor.hpp"

namespace sake {

/// Scale output left the safe range for exp(); training catches this and
/// retries with a smaller step.
struct ScaleRangeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Primary coordinates, auxiliary coordinates, and the running log-det.
/// Both halves keep zero center of gravity through every coupling.
struct AugmentedState {
  Tensor z;       // [N x n]
  Tensor a;       // [N x n]
  Tensor logdet;  // scalar, on the tape during training
};

struct CouplingLayer {
  bool z_conditions = true;  // true: z conditions and a is transformed
  SakeModelParams sake_net;
  Linear scale_head;  // C -> 1, zero-initialised so the coupling starts as identity
};

struct FlowConfig {
  int64_t couplings = 4;
  int64_t dim = 2;
  int64_t width = 16;
  int64_t sake_depth = 1;
  int64_t heads = 4;
  int64_t n_rbf = 20;
  double d_max = 5.0;
  uint64_t seed = 2666;
};

struct FlowStack {
  FlowConfig config;
  std::vector<CouplingLayer> layers;
};

/// Alternating z->a / a->z couplings, each exactly the identity at init
/// (zero velocity mixers and zero scale heads).
FlowStack make_flow(const FlowConfig& config);

std::vector<std::pair<std::string, Tensor>> named_parameters(const FlowStack& flow);

void save_flow(const std::string& path, const FlowStack& flow);
FlowStack load_flow(const std::string& path);

/// x - mean(x) per coordinate; idempotent.
Tensor project_center(const Tensor& x);

double max_center_offset(const Tensor& x);

/// -((N-1) n / 2) log(2 pi) - |z|^2 / 2 on the zero-center subspace.
/// Throws if the input is not centered (1e-9 per coordinate).
Tensor centered_gaussian_logp(const Tensor& z);

Tensor sample_centered_gaussian(int64_t n_nodes, int64_t dim, std::mt19937_64& rng);

/// Equal-weight two-scale Gaussian mixture projected to the centered
/// subspace; the synthetic target for flow training sanity.
Tensor sample_scale_mixture(int64_t n_nodes, int64_t dim, std::mt19937_64& rng);

/// Passive half -> exp(S) * passive + T with (T, S) from the SAKE net on the
/// conditioning half; logdet += S * (N-1) * n.
AugmentedState coupling_forward(const CouplingLayer& layer, const AugmentedState& s);
/// Exact algebraic inverse; logdet decremented symmetrically.
AugmentedState coupling_inverse(const CouplingLayer& layer, const AugmentedState& s);

AugmentedState flow_forward(const FlowStack& flow, AugmentedState s);
AugmentedState flow_inverse(const FlowStack& flow, AugmentedState s);

/// log p(x, a) - log q_a(a) with an explicit auxiliary draw; differentiable.
Tensor flow_logprob_with_aux(const FlowStack& flow, const Tensor& x, const Tensor& aux);
/// Marginal-likelihood estimate with a seeded auxiliary draw.
double flow_logprob(const FlowStack& flow, const Tensor& x, uint64_t aux_seed);

/// z, a from centered Gaussians through the forward stack; returns the x half.
Tensor flow_sample(const FlowStack& flow, int64_t n_nodes, uint64_t seed);

}  // namespace sake
