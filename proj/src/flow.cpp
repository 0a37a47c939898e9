#include "sake/flow.hpp"

#include <cmath>

#include "sake/checkpoint.hpp"

namespace sake {

FlowStack make_flow(const FlowConfig& config) {
  if (config.couplings < 1) throw std::invalid_argument("flow needs at least one coupling");
  FlowStack flow;
  flow.config = config;
  std::mt19937_64 rng(config.seed);
  for (int64_t k = 0; k < config.couplings; ++k) {
    CouplingLayer layer;
    layer.z_conditions = (k % 2 == 0);
    SakeConfig net;
    net.depth = config.sake_depth;
    net.width = config.width;
    net.heads = config.heads;
    net.n_rbf = config.n_rbf;
    net.d_max = config.d_max;
    net.cutoff = 0.0;
    net.attr_dim = 1;
    net.dim = config.dim;
    net.seed = rng();
    layer.sake_net = make_sake_model(net);
    // identity at init: no positional displacement, zero log-scale
    for (auto& lp : layer.sake_net.layers) {
      for (auto& v : lp.velocity_mix.value()) v = 0.0;
    }
    layer.scale_head.w = Tensor(Shape{config.width, 1});
    layer.scale_head.w.set_requires_grad(true);
    layer.scale_head.b = Tensor(Shape{1});
    layer.scale_head.b.set_requires_grad(true);
    flow.layers.push_back(std::move(layer));
  }
  return flow;
}

std::vector<std::pair<std::string, Tensor>> named_parameters(const FlowStack& flow) {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t k = 0; k < flow.layers.size(); ++k) {
    const std::string prefix = "flow." + std::to_string(k) + ".";
    for (auto& [name, t] : named_parameters(flow.layers[k].sake_net)) {
      out.emplace_back(prefix + name, t);
    }
    out.emplace_back(prefix + "scale_head.w", flow.layers[k].scale_head.w);
    out.emplace_back(prefix + "scale_head.b", flow.layers[k].scale_head.b);
  }
  return out;
}

void save_flow(const std::string& path, const FlowStack& flow) {
  MetaMap meta;
  meta.emplace_back("kind", "flow");
  meta.emplace_back("couplings", std::to_string(flow.config.couplings));
  meta.emplace_back("dim", std::to_string(flow.config.dim));
  meta.emplace_back("width", std::to_string(flow.config.width));
  meta.emplace_back("sake_depth", std::to_string(flow.config.sake_depth));
  meta.emplace_back("heads", std::to_string(flow.config.heads));
  meta.emplace_back("n_rbf", std::to_string(flow.config.n_rbf));
  meta.emplace_back("d_max", std::to_string(flow.config.d_max));
  meta.emplace_back("seed", std::to_string(flow.config.seed));
  save_checkpoint(path, meta, named_parameters(flow));
}

FlowStack load_flow(const std::string& path) {
  LoadedCheckpoint ckpt = load_checkpoint(path);
  if (ckpt.meta_value("kind") != "flow") {
    throw std::runtime_error("checkpoint kind is not a flow: " + path);
  }
  FlowConfig config;
  config.couplings = std::stoll(ckpt.meta_value("couplings"));
  config.dim = std::stoll(ckpt.meta_value("dim"));
  config.width = std::stoll(ckpt.meta_value("width"));
  config.sake_depth = std::stoll(ckpt.meta_value("sake_depth"));
  config.heads = std::stoll(ckpt.meta_value("heads"));
  config.n_rbf = std::stoll(ckpt.meta_value("n_rbf"));
  config.d_max = std::stod(ckpt.meta_value("d_max"));
  config.seed = std::stoull(ckpt.meta_value("seed"));
  FlowStack flow = make_flow(config);
  fill_parameters(ckpt, named_parameters(flow));
  return flow;
}

Tensor project_center(const Tensor& x) {
  return sub(x, reduce_mean(x, 0));
}

double max_center_offset(const Tensor& x) {
  const int64_t n_nodes = x.extent(0), dim = x.extent(1);
  double worst = 0.0;
  for (int64_t k = 0; k < dim; ++k) {
    double acc = 0.0;
    for (int64_t i = 0; i < n_nodes; ++i) acc += x.value()[i * dim + k];
    worst = std::max(worst, std::abs(acc / static_cast<double>(n_nodes)));
  }
  return worst;
}

Tensor centered_gaussian_logp(const Tensor& z) {
  if (z.rank() != 2) throw std::invalid_argument("centered_gaussian_logp expects [N x n]");
  if (max_center_offset(z) > 1e-9) {
    throw std::invalid_argument("centered_gaussian_logp: input is not centered");
  }
  const double dof = static_cast<double>((z.extent(0) - 1) * z.extent(1));
  const Tensor quad = mul_scalar(sum_all(square(z)), -0.5);
  return add_scalar(quad, -0.5 * dof * std::log(2.0 * M_PI));
}

Tensor sample_centered_gaussian(int64_t n_nodes, int64_t dim, std::mt19937_64& rng) {
  return project_center(randn({n_nodes, dim}, rng));
}

Tensor sample_scale_mixture(int64_t n_nodes, int64_t dim, std::mt19937_64& rng) {
  const double scale = (rng() & 1) ? 1.6 : 0.5;
  return project_center(randn({n_nodes, dim}, rng, scale));
}

namespace {

// (T, S) from the SAKE net on the conditioning half: T is the centered
// positional displacement, S the node-averaged scalar scale head.
std::pair<Tensor, Tensor> coupling_nets(const CouplingLayer& layer, const Tensor& cond) {
  GraphState state;
  state.x = cond;
  state.v = Tensor(Shape{cond.extent(0), cond.extent(1)});
  state.node_attr = Tensor(Shape{cond.extent(0), 1}, 1.0);
  state.edges = complete_digraph(cond.extent(0));
  GraphState out = model_forward(layer.sake_net, state);
  Tensor translation = project_center(sub(out.x, cond));
  Tensor scale = mean_all(linear_apply(out.h, layer.scale_head));
  if (std::abs(scale.item()) > 20.0) {
    throw ScaleRangeError("coupling scale " + std::to_string(scale.item()) +
                          " outside +-20; exp() would explode");
  }
  return {translation, scale};
}

}  // namespace

AugmentedState coupling_forward(const CouplingLayer& layer, const AugmentedState& s) {
  const Tensor& cond = layer.z_conditions ? s.z : s.a;
  const Tensor& passive = layer.z_conditions ? s.a : s.z;
  auto [translation, scale] = coupling_nets(layer, cond);
  const double dof = static_cast<double>((cond.extent(0) - 1) * cond.extent(1));
  Tensor moved = add(mul(passive, exp(scale)), translation);
  AugmentedState out;
  out.z = layer.z_conditions ? s.z : moved;
  out.a = layer.z_conditions ? moved : s.a;
  out.logdet = add(s.logdet, mul_scalar(scale, dof));
  return out;
}

AugmentedState coupling_inverse(const CouplingLayer& layer, const AugmentedState& s) {
  const Tensor& cond = layer.z_conditions ? s.z : s.a;
  const Tensor& passive = layer.z_conditions ? s.a : s.z;
  auto [translation, scale] = coupling_nets(layer, cond);
  const double dof = static_cast<double>((cond.extent(0) - 1) * cond.extent(1));
  Tensor moved = mul(sub(passive, translation), exp(mul_scalar(scale, -1.0)));
  AugmentedState out;
  out.z = layer.z_conditions ? s.z : moved;
  out.a = layer.z_conditions ? moved : s.a;
  out.logdet = sub(s.logdet, mul_scalar(scale, dof));
  return out;
}

AugmentedState flow_forward(const FlowStack& flow, AugmentedState s) {
  for (const CouplingLayer& layer : flow.layers) s = coupling_forward(layer, s);
  return s;
}

AugmentedState flow_inverse(const FlowStack& flow, AugmentedState s) {
  for (auto it = flow.layers.rbegin(); it != flow.layers.rend(); ++it) {
    s = coupling_inverse(*it, s);
  }
  return s;
}

Tensor flow_logprob_with_aux(const FlowStack& flow, const Tensor& x, const Tensor& aux) {
  if (max_center_offset(x) > 1e-9) {
    throw std::invalid_argument("flow_logprob: x is not centered");
  }
  AugmentedState s{x, aux, Tensor::scalar(0.0)};
  AugmentedState latent = flow_inverse(flow, s);
  Tensor joint = add(add(centered_gaussian_logp(latent.z), centered_gaussian_logp(latent.a)),
                     latent.logdet);
  return sub(joint, centered_gaussian_logp(aux));
}

double flow_logprob(const FlowStack& flow, const Tensor& x, uint64_t aux_seed) {
  std::mt19937_64 rng(aux_seed);
  const Tensor aux = sample_centered_gaussian(x.extent(0), x.extent(1), rng);
  return flow_logprob_with_aux(flow, x, aux).item();
}

Tensor flow_sample(const FlowStack& flow, int64_t n_nodes, uint64_t seed) {
  std::mt19937_64 rng(seed);
  AugmentedState s;
  s.z = sample_centered_gaussian(n_nodes, flow.config.dim, rng);
  s.a = sample_centered_gaussian(n_nodes, flow.config.dim, rng);
  s.logdet = Tensor::scalar(0.0);
  return flow_forward(flow, s).z;
}

}  // namespace sake
