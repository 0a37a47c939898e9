#include "sake/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace sake {

PropertyResult PropertyResult::make(std::string suite, uint64_t seed, double deviation,
                                    double tolerance) {
  PropertyResult r;
  r.suite = std::move(suite);
  r.seed = seed;
  r.deviation = deviation;
  r.tolerance = tolerance;
  r.pass = deviation <= tolerance;
  return r;
}

std::string format_report(const std::vector<PropertyResult>& results) {
  std::ostringstream os;
  for (const PropertyResult& r : results) {
    char line[160];
    std::snprintf(line, sizeof line, "%s\t%llu\t%.6g\t%.6g\t%s\n", r.suite.c_str(),
                  static_cast<unsigned long long>(r.seed), r.deviation, r.tolerance,
                  r.pass ? "pass" : "FAIL");
    os << line;
  }
  return os.str();
}

namespace {

double rel_dev(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return 1e300;
  double worst = 0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    const double diff = std::abs(a.value()[i] - b.value()[i]);
    const double scale = std::max({1.0, std::abs(a.value()[i]), std::abs(b.value()[i])});
    worst = std::max(worst, diff / scale);
  }
  return worst;
}

GraphState random_graph_state(int64_t n_nodes, int64_t dim, uint64_t seed) {
  std::mt19937_64 rng(seed);
  GraphState s;
  s.x = randn({n_nodes, dim}, rng);
  s.v = randn({n_nodes, dim}, rng, 0.5);
  s.node_attr = randn({n_nodes, 1}, rng);
  s.edges = complete_digraph(n_nodes);
  return s;
}

GraphState transform_graph_state(const EnTransform& t, const GraphState& s) {
  GraphState out;
  out.x = transform_positions(t, s.x);
  out.v = transform_vectors(t, s.v);
  out.node_attr = permute_rows(t, s.node_attr);
  if (s.h.defined()) out.h = permute_rows(t, s.h);
  out.edges = permute_edges(t, s.edges);
  return out;
}

}  // namespace

PropertyResult check_equivariance(const StateMap& fn, int64_t dim, int64_t n_seeds, double tol,
                                  const std::string& suite, uint64_t seed_base, int64_t n_nodes) {
  double worst = 0;
  uint64_t worst_seed = seed_base;
  for (int64_t s = 0; s < n_seeds; ++s) {
    const uint64_t seed = seed_base + static_cast<uint64_t>(s);
    GraphState state = random_graph_state(n_nodes, dim, seed);
    EnTransform t = random_en_transform(dim, n_nodes, seed ^ 0x5eed5eedULL);

    GraphState out = fn(state);
    GraphState out_t = fn(transform_graph_state(t, state));

    double dev = 0;
    if (out.h.defined()) dev = std::max(dev, rel_dev(permute_rows(t, out.h), out_t.h));
    dev = std::max(dev, rel_dev(transform_positions(t, out.x), out_t.x));
    if (out.v.defined()) dev = std::max(dev, rel_dev(transform_vectors(t, out.v), out_t.v));
    if (dev > worst) {
      worst = dev;
      worst_seed = seed;
    }
  }
  return PropertyResult::make(suite, worst_seed, worst, tol);
}

std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& fn,
                                     std::vector<double> point, double h) {
  std::vector<double> grad(point.size());
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double keep = point[i];
    point[i] = keep + h;
    const double up = fn(point);
    point[i] = keep - h;
    const double dn = fn(point);
    point[i] = keep;
    grad[i] = (up - dn) / (2.0 * h);
  }
  return grad;
}

std::vector<Tensor> centered_subspace_basis(int64_t n_nodes, int64_t dim) {
  // Helmert-style vectors orthogonal to the all-ones direction, one per
  // coordinate axis.
  std::vector<Tensor> basis;
  basis.reserve((n_nodes - 1) * dim);
  for (int64_t m = 1; m < n_nodes; ++m) {
    std::vector<double> col(n_nodes, 0.0);
    for (int64_t i = 0; i < m; ++i) col[i] = 1.0;
    col[m] = -static_cast<double>(m);
    double norm = 0;
    for (double v : col) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : col) v /= norm;
    for (int64_t k = 0; k < dim; ++k) {
      Tensor b(Shape{n_nodes, dim});
      for (int64_t i = 0; i < n_nodes; ++i) b.value()[i * dim + k] = col[i];
      basis.push_back(std::move(b));
    }
  }
  return basis;
}

double numeric_subspace_logdet(const std::function<Tensor(const Tensor&)>& map,
                               const Tensor& point, const std::vector<Tensor>& basis, double h) {
  const int64_t d = static_cast<int64_t>(basis.size());
  std::vector<double> jac(d * d);
  for (int64_t col = 0; col < d; ++col) {
    Tensor up(point.shape()), dn(point.shape());
    for (int64_t i = 0; i < point.numel(); ++i) {
      up.value()[i] = point.value()[i] + h * basis[col].value()[i];
      dn.value()[i] = point.value()[i] - h * basis[col].value()[i];
    }
    const Tensor fu = map(up);
    const Tensor fd = map(dn);
    for (int64_t row = 0; row < d; ++row) {
      double acc = 0;
      for (int64_t i = 0; i < point.numel(); ++i) {
        acc += (fu.value()[i] - fd.value()[i]) * basis[row].value()[i];
      }
      jac[row * d + col] = acc / (2.0 * h);
    }
  }
  // log |det| by Gaussian elimination with partial pivoting
  double logdet = 0;
  for (int64_t c = 0; c < d; ++c) {
    int64_t piv = c;
    for (int64_t r = c + 1; r < d; ++r) {
      if (std::abs(jac[r * d + c]) > std::abs(jac[piv * d + c])) piv = r;
    }
    const double p = jac[piv * d + c];
    if (std::abs(p) < 1e-12) {
      throw std::runtime_error("numeric_subspace_logdet: singular Jacobian");
    }
    if (piv != c) {
      for (int64_t k = 0; k < d; ++k) std::swap(jac[piv * d + k], jac[c * d + k]);
    }
    logdet += std::log(std::abs(p));
    for (int64_t r = c + 1; r < d; ++r) {
      const double f = jac[r * d + c] / p;
      for (int64_t k = c; k < d; ++k) jac[r * d + k] -= f * jac[c * d + k];
    }
  }
  return logdet;
}

// ---------------------------------------------------------------------------
// suites

namespace {

SakeConfig verify_model_config(int64_t dim, uint64_t seed) {
  SakeConfig cfg;
  cfg.depth = 2;
  cfg.width = 16;
  cfg.heads = 4;
  cfg.n_rbf = 16;
  cfg.d_max = 5.0;
  cfg.cutoff = 0.0;
  cfg.dim = dim;
  cfg.attr_dim = 1;
  cfg.seed = seed;
  return cfg;
}

FlowConfig verify_flow_config(uint64_t seed) {
  FlowConfig cfg;
  cfg.couplings = 4;
  cfg.dim = 2;
  cfg.width = 8;
  cfg.sake_depth = 1;
  cfg.heads = 4;
  cfg.n_rbf = 8;
  cfg.seed = seed;
  return cfg;
}

void randomize_flow_params(FlowStack& flow, uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& layer : flow.layers) {
    for (auto& lp : layer.sake_net.layers) {
      for (auto& v : lp.velocity_mix.value()) v = 0.3 * normal_sample(rng);
    }
    for (auto& v : layer.scale_head.w.value()) v = 0.05 * normal_sample(rng);
    layer.scale_head.b.value()[0] = 0.05 * normal_sample(rng);
  }
}

std::vector<PropertyResult> equivariance_suite(const VerifyOptions& opt) {
  std::vector<PropertyResult> out;
  for (int64_t dim : {2, 3, 5}) {
    SakeModelParams model = make_sake_model(verify_model_config(dim, opt.seed + dim));
    StateMap fn = [&model](const GraphState& s) { return model_forward(model, s); };
    PropertyResult r =
        check_equivariance(fn, dim, opt.equivariance_seeds, 1e-8,
                           "equivariance", opt.seed + 10 * dim, /*n_nodes=*/5);
    out.push_back(std::move(r));
  }
  return out;
}

PropertyResult gradient_suite(const VerifyOptions& opt) {
  // analytic forces against central differences on random 5-node graphs
  SakeModelParams model = make_sake_model(verify_model_config(3, opt.seed + 1));
  double worst = 0;
  uint64_t worst_seed = opt.seed;
  for (int g = 0; g < 20; ++g) {
    const uint64_t seed = opt.seed + 100 + g;
    GraphState s = random_graph_state(5, 3, seed);
    s.v = Tensor(Shape{5, 3});
    auto [energy, forces] = predict_energy_forces(model, s);
    auto fn = [&](const std::vector<double>& flat) {
      GraphState probe = s;
      probe.x = Tensor::from_data(s.x.shape(), flat);
      return predict_energy_forces(model, probe).first;
    };
    const std::vector<double> fd = finite_diff_grad(fn, s.x.value());
    for (int64_t i = 0; i < forces.numel(); ++i) {
      const double want = -fd[i];
      const double scale = std::max(1e-3, std::max(std::abs(want), std::abs(forces.value()[i])));
      const double dev = std::abs(forces.value()[i] - want) / scale;
      if (dev > worst) {
        worst = dev;
        worst_seed = seed;
      }
    }
  }
  return PropertyResult::make("gradient", worst_seed, worst, 1e-4);
}

PropertyResult theorem1_suite(const VerifyOptions& opt) {
  double worst = 0;
  uint64_t worst_seed = opt.seed;
  for (int trial = 0; trial < 100; ++trial) {
    const uint64_t seed = opt.seed + 200 + trial;
    std::mt19937_64 rng(seed);
    const int64_t m = 2 + static_cast<int64_t>(rng() % 7);  // up to 8 neighbors
    Tensor x = randn({m + 1, 3}, rng);
    const auto center = static_cast<int32_t>(rng() % (m + 1));
    Tensor mat = theorem1_lambda_oracle(x, center);
    std::vector<int64_t> nbrs;
    for (int64_t u = 0; u <= m; ++u) {
      if (u != center) nbrs.push_back(u);
    }
    auto dist = [&](int64_t a, int64_t b) {
      double acc = 0;
      for (int64_t k = 0; k < 3; ++k) {
        const double d = x.value()[a * 3 + k] - x.value()[b * 3 + k];
        acc += d * d;
      }
      return std::sqrt(acc);
    };
    for (std::size_t i = 0; i < nbrs.size(); ++i) {
      for (std::size_t j = 0; j < nbrs.size(); ++j) {
        const double want = (i == j) ? dist(center, nbrs[i]) : dist(nbrs[i], nbrs[j]);
        const double dev = std::abs(mat.value()[i * m + j] - want);
        if (dev > worst) {
          worst = dev;
          worst_seed = seed;
        }
      }
    }
  }
  return PropertyResult::make("theorem1", worst_seed, worst, 1e-10);
}

PropertyResult flow_roundtrip_suite(const VerifyOptions& opt) {
  FlowStack flow = make_flow(verify_flow_config(opt.seed + 2));
  randomize_flow_params(flow, opt.seed + 3);
  double worst = 0;
  uint64_t worst_seed = opt.seed;
  for (int trial = 0; trial < 50; ++trial) {
    const uint64_t seed = opt.seed + 300 + trial;
    std::mt19937_64 rng(seed);
    AugmentedState s{sample_centered_gaussian(4, 2, rng), sample_centered_gaussian(4, 2, rng),
                     Tensor::scalar(0.0)};
    AugmentedState round = flow_inverse(flow, flow_forward(flow, s));
    double dev = std::abs(round.logdet.item());
    for (int64_t i = 0; i < s.z.numel(); ++i) {
      dev = std::max(dev, std::abs(round.z.value()[i] - s.z.value()[i]));
      dev = std::max(dev, std::abs(round.a.value()[i] - s.a.value()[i]));
    }
    if (dev > worst) {
      worst = dev;
      worst_seed = seed;
    }
  }
  return PropertyResult::make("flow_roundtrip", worst_seed, worst, 1e-6);
}

PropertyResult flow_logdet_suite(const VerifyOptions& opt) {
  // accumulated logdet against the numeric subspace Jacobian, N=3, n=2
  const int64_t n_nodes = 3, dim = 2;
  FlowConfig fc = verify_flow_config(opt.seed + 4);
  fc.dim = dim;
  double worst = 0;
  uint64_t worst_seed = opt.seed;
  for (int trial = 0; trial < 5; ++trial) {
    const uint64_t seed = opt.seed + 400 + trial;
    FlowStack flow = make_flow(fc);
    randomize_flow_params(flow, seed);
    std::mt19937_64 rng(seed);
    AugmentedState s{sample_centered_gaussian(n_nodes, dim, rng),
                     sample_centered_gaussian(n_nodes, dim, rng), Tensor::scalar(0.0)};
    AugmentedState out = flow_forward(flow, s);
    const double claimed = out.logdet.item();

    // joint map on (z, a) through the product of centered subspaces
    std::vector<Tensor> half = centered_subspace_basis(n_nodes, dim);
    std::vector<Tensor> joint;
    for (const Tensor& b : half) {
      Tensor zb(Shape{2 * n_nodes, dim});
      std::copy(b.value().begin(), b.value().end(), zb.value().begin());
      joint.push_back(zb);
    }
    for (const Tensor& b : half) {
      Tensor ab(Shape{2 * n_nodes, dim});
      std::copy(b.value().begin(), b.value().end(), ab.value().begin() + n_nodes * dim);
      joint.push_back(ab);
    }
    Tensor packed(Shape{2 * n_nodes, dim});
    std::copy(s.z.value().begin(), s.z.value().end(), packed.value().begin());
    std::copy(s.a.value().begin(), s.a.value().end(), packed.value().begin() + n_nodes * dim);

    auto joint_map = [&](const Tensor& p) {
      AugmentedState in;
      in.z = Tensor(Shape{n_nodes, dim});
      in.a = Tensor(Shape{n_nodes, dim});
      std::copy(p.value().begin(), p.value().begin() + n_nodes * dim, in.z.value().begin());
      std::copy(p.value().begin() + n_nodes * dim, p.value().end(), in.a.value().begin());
      in.logdet = Tensor::scalar(0.0);
      AugmentedState o = flow_forward(flow, in);
      Tensor flat(Shape{2 * n_nodes, dim});
      std::copy(o.z.value().begin(), o.z.value().end(), flat.value().begin());
      std::copy(o.a.value().begin(), o.a.value().end(), flat.value().begin() + n_nodes * dim);
      return flat;
    };
    const double numeric = numeric_subspace_logdet(joint_map, packed, joint, 1e-6);
    const double dev = std::abs(numeric - claimed);
    if (dev > worst) {
      worst = dev;
      worst_seed = seed;
    }
  }
  return PropertyResult::make("flow_logdet", worst_seed, worst, 1e-4);
}

double median_forward_seconds(const SakeModelParams& model, const GraphState& state, int reps) {
  std::vector<double> times;
  times.reserve(reps);
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    GraphState out = model_forward(model, state);
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double>(t1 - t0).count());
    if (!all_finite(out.x)) throw std::runtime_error("bench forward produced non-finite output");
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

GraphState bench_state(int64_t n_nodes, int64_t n_edges, uint64_t seed) {
  std::mt19937_64 rng(seed);
  GraphState s;
  s.x = randn({n_nodes, 3}, rng);
  s.v = randn({n_nodes, 3}, rng, 0.5);
  s.node_attr = randn({n_nodes, 1}, rng);
  s.edges.reserve(n_edges);
  for (int64_t e = 0; e < n_edges; ++e) {
    int32_t u = static_cast<int32_t>(rng() % n_nodes);
    int32_t v = static_cast<int32_t>(rng() % n_nodes);
    while (v == u) v = static_cast<int32_t>(rng() % n_nodes);
    s.edges.emplace_back(u, v);
  }
  return s;
}

PropertyResult scaling_suite(const VerifyOptions& opt, BenchReport* report_out) {
  SakeConfig cfg = verify_model_config(3, opt.seed + 5);
  cfg.width = 32;
  cfg.depth = 2;
  cfg.n_rbf = 50;
  SakeModelParams model = make_sake_model(cfg);

  BenchReport report;
  const int64_t n_nodes = 128;
  const std::vector<int64_t> sizes{2048, 4096, 8192};
  for (int64_t n_edges : sizes) {
    GraphState s = bench_state(n_nodes, n_edges, opt.seed + 600 + n_edges);
    model_forward(model, s);  // warm caches
    const double t = median_forward_seconds(model, s, 5);
    report.sweep.push_back({n_edges, t});
  }
  // least-squares slope of log(t) on log(E)
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(report.sweep.size());
  for (const BenchPoint& p : report.sweep) {
    const double lx = std::log(static_cast<double>(p.edges));
    const double ly = std::log(p.seconds);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  report.exponent = (n * sxy - sx * sy) / (n * sxx - sx * sx);

  // stage breakdown at the largest size
  {
    GraphState s = bench_state(n_nodes, sizes.back(), opt.seed + 600 + sizes.back());
    ForwardProfile profile;
    set_forward_profile(&profile);
    const auto t0 = std::chrono::steady_clock::now();
    model_forward(model, s);
    const auto t1 = std::chrono::steady_clock::now();
    set_forward_profile(nullptr);
    report.profile = profile;
    const double wall = std::chrono::duration<double>(t1 - t0).count();
    report.profile_coverage = wall > 0 ? profile.total() / wall : 0;
  }
  if (report_out) *report_out = report;

  const double dev = std::abs(report.exponent - 1.05);
  return PropertyResult::make("scaling", opt.seed, dev, 0.25);
}

// Deliberately broken layer: raw coordinates leak into the embeddings.
GraphState broken_state_map(const SakeModelParams& model, const GraphState& s) {
  GraphState out = model_forward(model, s);
  out.h = concat({out.h, out.x}, 1);
  return out;
}

// Mutant that skips the unit normalization of the direction field: uses the
// raw displacement in the combinations. Still equivariant, but the dedicated
// normalization check catches it.
Tensor mutant_combinations(const SakeLayerParams& p, const Tensor& h_e_att,
                           const EdgeGeometry& geo, const EdgeList& edges, int64_t n_nodes,
                           bool normalize) {
  const Tensor lam = tanh(linear_apply(h_e_att, p.spatial_proj));
  std::vector<int32_t> dst;
  dst.reserve(edges.size());
  for (const auto& e : edges) dst.push_back(e.second);
  return scatter_add_rows(row_outer(lam, normalize ? geo.unit : geo.vec), dst, n_nodes);
}

GraphState mutant_layer_forward(const SakeModelParams& model, const GraphState& state,
                                bool normalize) {
  const SakeLayerParams& p = model.layers[0];
  const SakeConfig& cfg = model.config;
  GraphState cur = state;
  cur.h = linear_apply(state.node_attr, model.embed_in);
  const int64_t n_nodes = cur.n_nodes();
  EdgeGeometry geo = compute_edge_geometry(cur.x, cur.edges);
  Tensor h_e = edge_embed(p, cfg, cur.h, geo, cur.edges);
  Tensor h_e_att = apply_attention(h_e, combined_attention(p, h_e, geo, cur.edges, n_nodes));
  Tensor combos = mutant_combinations(p, h_e_att, geo, cur.edges, n_nodes, normalize);
  Tensor norms = sqrt(add_scalar(reduce_sum(square(combos), 2), kNormEps * kNormEps));
  Tensor h_sa = mlp2_silu(p.spatial_mlp, norms);
  std::vector<int32_t> dst;
  for (const auto& e : cur.edges) dst.push_back(e.second);
  Tensor a_v = scatter_add_rows(h_e_att, dst, n_nodes);
  Tensor gate = mul_scalar(
      sigmoid(linear_apply(silu(linear_apply(cur.h, p.gate_mlp.l0)), p.gate_mlp.l1)), 2.0);
  Tensor v_next =
      add(scale_rows(cur.v, reshape(gate, {n_nodes})), contract_axis1(combos, p.velocity_mix));
  GraphState out;
  out.h = mlp2_silu(p.node_mlp, concat({cur.h, a_v, h_sa}, 1));
  out.v = v_next;
  out.x = add(cur.x, v_next);
  out.node_attr = cur.node_attr;
  out.edges = cur.edges;
  return out;
}

// Max |norm - 1| of the direction field on well-separated random configs.
double normalization_defect(bool normalize, uint64_t seed) {
  double worst = 0;
  for (int trial = 0; trial < 10; ++trial) {
    GraphState s = random_graph_state(5, 3, seed + trial);
    EdgeGeometry geo = compute_edge_geometry(s.x, s.edges);
    const Tensor& field = normalize ? geo.unit : geo.vec;
    for (int64_t e = 0; e < geo.dist.numel(); ++e) {
      if (geo.dist.value()[e] < 0.1) continue;
      double norm = 0;
      for (int64_t k = 0; k < 3; ++k) {
        const double v = field.value()[e * 3 + k];
        norm += v * v;
      }
      worst = std::max(worst, std::abs(std::sqrt(norm) - 1.0));
    }
  }
  return worst;
}

PropertyResult mutation_suite(const VerifyOptions& opt) {
  int misbehaved = 0;

  // control 1: coordinate leak must fail the equivariance check
  {
    SakeModelParams model = make_sake_model(verify_model_config(3, opt.seed + 6));
    StateMap fn = [&model](const GraphState& s) { return broken_state_map(model, s); };
    PropertyResult r = check_equivariance(fn, 3, 20, 1e-8, "control", opt.seed + 700);
    if (r.pass) ++misbehaved;  // it was supposed to fail
  }
  // control 2: skipping unit normalization still passes equivariance...
  {
    SakeModelParams model = make_sake_model(verify_model_config(3, opt.seed + 7));
    StateMap fn = [&model](const GraphState& s) { return mutant_layer_forward(model, s, false); };
    PropertyResult r = check_equivariance(fn, 3, 20, 1e-8, "control", opt.seed + 800);
    if (!r.pass) ++misbehaved;
  }
  // ...but the dedicated normalization check must catch it
  {
    if (normalization_defect(false, opt.seed + 900) <= 1e-9) ++misbehaved;
    if (normalization_defect(true, opt.seed + 900) > 1e-9) ++misbehaved;
  }
  return PropertyResult::make("mutation", opt.seed, static_cast<double>(misbehaved), 0.0);
}

}  // namespace

const std::vector<std::string> kVerifySuites = {
    "equivariance", "gradient", "theorem1", "flow_roundtrip", "flow_logdet", "scaling",
    "mutation"};

std::vector<PropertyResult> run_verify(const VerifyOptions& options) {
  auto wants = [&](const std::string& name) {
    return options.suite.empty() || options.suite == name;
  };
  std::vector<PropertyResult> results;
  if (wants("equivariance")) {
    for (PropertyResult& r : equivariance_suite(options)) results.push_back(std::move(r));
  }
  if (wants("gradient")) results.push_back(gradient_suite(options));
  if (wants("theorem1")) results.push_back(theorem1_suite(options));
  if (wants("flow_roundtrip")) results.push_back(flow_roundtrip_suite(options));
  if (wants("flow_logdet")) results.push_back(flow_logdet_suite(options));
  if (wants("scaling")) results.push_back(scaling_suite(options, nullptr));
  if (wants("mutation")) results.push_back(mutation_suite(options));
  if (results.empty()) {
    throw std::invalid_argument("unknown verify suite: " + options.suite);
  }
  return results;
}

BenchReport run_bench(uint64_t seed) {
  VerifyOptions opt;
  opt.seed = seed;
  BenchReport report;
  scaling_suite(opt, &report);

  // repeat-spread at the middle size
  SakeConfig cfg = verify_model_config(3, seed + 5);
  cfg.width = 32;
  cfg.depth = 2;
  cfg.n_rbf = 50;
  SakeModelParams model = make_sake_model(cfg);
  GraphState s = bench_state(128, 4096, seed + 4242);
  model_forward(model, s);
  std::vector<double> times;
  for (int r = 0; r < 7; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    model_forward(model, s);
    times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  const double tmin = *std::min_element(times.begin(), times.end());
  const double tmax = *std::max_element(times.begin(), times.end());
  report.spread = (tmax - tmin) / tmin;
  return report;
}

std::string format_bench(const BenchReport& report) {
  std::ostringstream os;
  char line[200];
  for (const BenchPoint& p : report.sweep) {
    std::snprintf(line, sizeof line, "edges=%lld forward_s=%.6f\n",
                  static_cast<long long>(p.edges), p.seconds);
    os << line;
  }
  std::snprintf(line, sizeof line, "scaling_exponent=%.4f repeat_spread=%.3f\n", report.exponent,
                report.spread);
  os << line;
  const ForwardProfile& f = report.profile;
  std::snprintf(line, sizeof line,
                "profile geometry=%.6f edge_embed=%.6f attention=%.6f spatial=%.6f "
                "velocity=%.6f node_update=%.6f coverage=%.3f\n",
                f.geometry, f.edge_embed, f.attention, f.spatial, f.velocity, f.node_update,
                report.profile_coverage);
  os << line;
  return os.str();
}

}  // namespace sake
