#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "sake/checkpoint.hpp"
#include "sake/model.hpp"

using namespace sake;

namespace {

SakeConfig small_config(int64_t dim, double cutoff = 0.0) {
  SakeConfig cfg;
  cfg.depth = 2;
  cfg.width = 8;
  cfg.heads = 4;
  cfg.n_rbf = 10;
  cfg.d_max = 5.0;
  cfg.cutoff = cutoff;
  cfg.dim = dim;
  cfg.attr_dim = 1;
  cfg.seed = 2666;
  return cfg;
}

GraphState random_state(int64_t n_nodes, int64_t dim, uint64_t seed, int64_t attr_dim = 1) {
  std::mt19937_64 rng(seed);
  GraphState s;
  s.x = randn({n_nodes, dim}, rng);
  s.v = randn({n_nodes, dim}, rng, 0.5);
  s.node_attr = randn({n_nodes, attr_dim}, rng);
  s.edges = complete_digraph(n_nodes);
  return s;
}

GraphState transform_state(const EnTransform& t, const GraphState& s) {
  GraphState out;
  out.x = transform_positions(t, s.x);
  out.v = transform_vectors(t, s.v);
  out.node_attr = permute_rows(t, s.node_attr);
  if (s.h.defined()) out.h = permute_rows(t, s.h);
  out.edges = permute_edges(t, s.edges);
  return out;
}

double max_rel_dev(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double worst = 0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    const double diff = std::abs(a.value()[i] - b.value()[i]);
    const double scale = std::max({1.0, std::abs(a.value()[i]), std::abs(b.value()[i])});
    worst = std::max(worst, diff / scale);
  }
  return worst;
}

}  // namespace

TEST_CASE("edge embeddings: determinism and distance-only geometry dependence") {
  SakeConfig cfg = small_config(3);
  SakeModelParams model = make_sake_model(cfg);
  const SakeLayerParams& layer = model.layers[0];

  GraphState s = random_state(4, 3, 7);
  s.h = linear_apply(s.node_attr, model.embed_in);
  EdgeGeometry geo = compute_edge_geometry(s.x, s.edges);
  Tensor e1 = edge_embed(layer, cfg, s.h, geo, s.edges);
  Tensor e2 = edge_embed(layer, cfg, s.h, geo, s.edges);
  CHECK(e1.value() == e2.value());

  // rotating all positions leaves the embedding bit-identical only up to the
  // norm computation; distances agree to fp so embeddings agree tightly
  EnTransform rot = random_en_transform(3, 4, 11);
  rot.translation.assign(3, 0.0);
  rot.permutation = {0, 1, 2, 3};
  EdgeGeometry geo_rot = compute_edge_geometry(transform_positions(rot, s.x), s.edges);
  Tensor e3 = edge_embed(layer, cfg, s.h, geo_rot, s.edges);
  CHECK(max_rel_dev(e1, e3) < 1e-12);
}

TEST_CASE("edge embedding matches an unbatched straight-line oracle") {
  SakeConfig cfg = small_config(3);
  cfg.depth = 1;
  SakeModelParams model = make_sake_model(cfg);
  const SakeLayerParams& layer = model.layers[0];
  const int64_t C = cfg.width;

  GraphState s = random_state(4, 3, 13);
  s.h = linear_apply(s.node_attr, model.embed_in);
  EdgeGeometry geo = compute_edge_geometry(s.x, s.edges);
  Tensor batched = edge_embed(layer, cfg, s.h, geo, s.edges);

  auto silu_d = [](double v) { return v / (1.0 + std::exp(-v)); };
  auto linear_row = [&](const std::vector<double>& in, const Linear& l) {
    const int64_t fin = l.w.extent(0), fout = l.w.extent(1);
    std::vector<double> out(fout, 0.0);
    for (int64_t o = 0; o < fout; ++o) {
      double acc = l.b.defined() ? l.b.value()[o] : 0.0;
      for (int64_t i = 0; i < fin; ++i) acc += in[i] * l.w.value()[i * fout + o];
      out[o] = acc;
    }
    return out;
  };

  const double spacing = cfg.d_max / (cfg.n_rbf - 1);
  for (std::size_t e = 0; e < s.edges.size(); ++e) {
    const auto [u, v] = s.edges[e];
    std::vector<double> pair;
    for (int64_t c = 0; c < C; ++c) pair.push_back(s.h.value()[u * C + c]);
    for (int64_t c = 0; c < C; ++c) pair.push_back(s.h.value()[v * C + c]);
    const double dist = geo.dist.value()[e];

    std::vector<double> filt = linear_row(pair, layer.filter_net);
    for (auto& f : filt) f = silu_d(f);
    std::vector<double> input = pair;
    input.push_back(dist);
    for (int64_t k = 0; k < cfg.n_rbf; ++k) {
      const double d = dist - spacing * k;
      input.push_back(std::exp(-d * d / (2 * spacing * spacing)) * filt[k]);
    }
    std::vector<double> hid = linear_row(input, layer.edge_mlp.l0);
    for (auto& hh : hid) hh = silu_d(hh);
    std::vector<double> out = linear_row(hid, layer.edge_mlp.l1);
    for (auto& oo : out) oo = silu_d(oo);
    for (int64_t c = 0; c < C; ++c) {
      CHECK(std::abs(out[c] - batched.value()[e * C + c]) < 1e-12);
    }
  }
}

TEST_CASE("combined attention weights normalize per node") {
  SakeConfig cfg = small_config(2, /*cutoff=*/2.0);
  SakeModelParams model = make_sake_model(cfg);
  const SakeLayerParams& layer = model.layers[0];

  SUBCASE("single incoming edge within cutoff gets weight 1") {
    GraphState s = random_state(2, 2, 3);
    s.x = Tensor::from_data({2, 2}, {0, 0, 0.2, 0});  // inside every head's range
    s.edges = {{0, 1}};
    s.h = linear_apply(s.node_attr, model.embed_in);
    EdgeGeometry geo = compute_edge_geometry(s.x, s.edges);
    Tensor h_e = edge_embed(layer, cfg, s.h, geo, s.edges);
    Tensor att = combined_attention(layer, h_e, geo, s.edges, 2);
    for (int64_t head = 0; head < cfg.heads; ++head) {
      CHECK(att.value()[head] == doctest::Approx(1.0).epsilon(1e-9));
    }
  }

  SUBCASE("two symmetric incoming edges get 0.5 each") {
    GraphState s;
    s.x = Tensor::from_data({3, 2}, {-0.4, 0, 0, 0, 0.4, 0});
    s.node_attr = Tensor::from_data({3, 1}, {1.0, 2.0, 1.0});
    s.edges = {{0, 1}, {2, 1}};
    s.h = linear_apply(s.node_attr, model.embed_in);
    EdgeGeometry geo = compute_edge_geometry(s.x, s.edges);
    Tensor h_e = edge_embed(layer, cfg, s.h, geo, s.edges);
    Tensor att = combined_attention(layer, h_e, geo, s.edges, 3);
    for (int64_t i = 0; i < att.numel(); ++i) {
      CHECK(att.value()[i] == doctest::Approx(0.5).epsilon(1e-9));
    }
  }

  SUBCASE("per node per head sums are 0 or 1") {
    // a tight cluster whose members only hear each other (all edges well
    // inside every head's range) plus one node that only hears far edges
    GraphState s = random_state(7, 2, 17);
    s.x = Tensor::from_data({7, 2}, {0, 0,    0.15, 0,  0, 0.15,  0.1, 0.1,
                                     0.05, 0, 0, 0.05,  25, 0});
    s.edges = complete_digraph(6);
    for (int32_t u = 0; u < 6; ++u) s.edges.emplace_back(u, 6);
    s.h = linear_apply(s.node_attr, model.embed_in);
    EdgeGeometry geo = compute_edge_geometry(s.x, s.edges);
    Tensor h_e = edge_embed(layer, cfg, s.h, geo, s.edges);
    Tensor att = combined_attention(layer, h_e, geo, s.edges, 7);
    std::vector<double> sums(7 * cfg.heads, 0.0);
    for (std::size_t e = 0; e < s.edges.size(); ++e) {
      for (int64_t head = 0; head < cfg.heads; ++head) {
        sums[s.edges[e].second * cfg.heads + head] += att.value()[e * cfg.heads + head];
      }
    }
    int zeros = 0;
    for (double v : sums) {
      const bool zero = std::abs(v) < 1e-9;
      const bool one = std::abs(v - 1.0) < 1e-9;
      CHECK((zero || one));
      zeros += zero;
    }
    CHECK(zeros == cfg.heads);  // exactly the isolated node
  }
}

TEST_CASE("spatial attention mechanics") {
  SUBCASE("single neighbor with unit weight gives norm 1") {
    // one incoming unit-length edge and lambda = 1: |1 * unit| = 1
    Tensor unit_combo = Tensor::from_data({1, 1, 3}, {0.6, 0.8, 0.0});
    Tensor norms = sqrt(add_scalar(reduce_sum(square(unit_combo), 2), kNormEps * kNormEps));
    CHECK(norms.value()[0] == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("antipodal equal-weight neighbors cancel to the norm floor") {
    SakeConfig cfg = small_config(3);
    SakeModelParams model = make_sake_model(cfg);
    SakeLayerParams& layer = model.layers[0];
    // lambda(h_e) = 1 for every combination on both edges: uniform projection
    // weights applied to an all-ones edge embedding
    for (auto& v : layer.spatial_proj.w.value()) v = 1.0 / static_cast<double>(cfg.width);

    GraphState s;
    s.x = Tensor::from_data({3, 3}, {1, 0, 0, 0, 0, 0, -1, 0, 0});
    s.node_attr = Tensor(Shape{3, 1}, 1.0);
    s.edges = {{0, 1}, {2, 1}};
    EdgeGeometry geo = compute_edge_geometry(s.x, s.edges);
    Tensor ones = Tensor(Shape{2, cfg.width}, 1.0);
    Tensor combos = edge_combinations(layer, ones, geo, s.edges, 3);
    Tensor norms = sqrt(add_scalar(reduce_sum(square(combos), 2), kNormEps * kNormEps));
    // node 1 received +x and -x directions with equal weight
    for (int64_t l = 0; l < cfg.lambda_count(); ++l) {
      CHECK(norms.value()[1 * cfg.lambda_count() + l] == doctest::Approx(kNormEps));
    }
  }

  SUBCASE("invariant to global rotation+reflection+translation") {
    SakeConfig cfg = small_config(3);
    SakeModelParams model = make_sake_model(cfg);
    const SakeLayerParams& layer = model.layers[0];
    for (int seed = 0; seed < 20; ++seed) {
      GraphState s = random_state(5, 3, 100 + seed);
      s.h = linear_apply(s.node_attr, model.embed_in);
      EnTransform t = random_en_transform(3, 5, 200 + seed);
      GraphState st = transform_state(t, s);

      EdgeGeometry geo = compute_edge_geometry(s.x, s.edges);
      Tensor h_e = edge_embed(layer, cfg, s.h, geo, s.edges);
      Tensor h_e_att = apply_attention(h_e, combined_attention(layer, h_e, geo, s.edges, 5));
      Tensor out = spatial_attention(layer, h_e_att, geo, s.edges, 5);

      EdgeGeometry geo_t = compute_edge_geometry(st.x, st.edges);
      Tensor h_e_t = edge_embed(layer, cfg, st.h, geo_t, st.edges);
      Tensor h_e_att_t =
          apply_attention(h_e_t, combined_attention(layer, h_e_t, geo_t, st.edges, 5));
      Tensor out_t = spatial_attention(layer, h_e_att_t, geo_t, st.edges, 5);

      CHECK(max_rel_dev(permute_rows(t, out), out_t) < 1e-9);
    }
  }
}

TEST_CASE("theorem 1 oracle recovers distance matrices") {
  SUBCASE("single neighbor") {
    Tensor x = Tensor::from_data({2, 3}, {0, 0, 0, 1, 2, 2});
    Tensor m = theorem1_lambda_oracle(x, 0);
    CHECK(m.numel() == 1);
    CHECK(m.value()[0] == doctest::Approx(3.0).epsilon(1e-12));
  }

  SUBCASE("equilateral triangle of neighbors") {
    const double h = std::sqrt(3.0) / 2.0;
    Tensor x = Tensor::from_data({4, 3}, {0, 0, 5,       // center, off-plane
                                          0, 0, 0, 1, 0, 0, 0.5, h, 0});
    Tensor m = theorem1_lambda_oracle(x, 0);
    for (int64_t i = 0; i < 3; ++i) {
      for (int64_t j = 0; j < 3; ++j) {
        if (i != j) CHECK(m.value()[i * 3 + j] == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }

  SUBCASE("random clouds match direct pairwise distances") {
    std::mt19937_64 rng(55);
    for (int trial = 0; trial < 100; ++trial) {
      const int64_t n = 2 + static_cast<int64_t>(rng() % 8);  // up to 8 neighbors
      Tensor x = randn({n + 1, 3}, rng);
      const auto center = static_cast<int32_t>(rng() % (n + 1));
      Tensor m = theorem1_lambda_oracle(x, center);
      std::vector<int64_t> nbrs;
      for (int64_t u = 0; u <= n; ++u) {
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
        CHECK(std::abs(m.value()[i * n + i] - dist(center, nbrs[i])) < 1e-10);
        for (std::size_t j = 0; j < nbrs.size(); ++j) {
          if (i != j) CHECK(std::abs(m.value()[i * n + j] - dist(nbrs[i], nbrs[j])) < 1e-10);
        }
      }
    }
  }
}

TEST_CASE("velocity update: no incoming edges leaves gated velocity only") {
  SakeConfig cfg = small_config(3);
  SakeModelParams model = make_sake_model(cfg);
  const SakeLayerParams& layer = model.layers[0];

  GraphState s = random_state(2, 3, 23);
  s.edges = {};  // no edges at all
  s.h = linear_apply(s.node_attr, model.embed_in);
  EdgeGeometry geo = compute_edge_geometry(s.x, s.edges);
  Tensor h_e_att(Shape{0, cfg.width});
  auto [v_next, x_next] = velocity_position_update(layer, s.h, s.v, s.x, h_e_att, geo, s.edges);

  // oracle: gate per node times v, zero additive
  Tensor gate = mul_scalar(
      sigmoid(linear_apply(silu(linear_apply(s.h, layer.gate_mlp.l0)), layer.gate_mlp.l1)), 2.0);
  for (int64_t i = 0; i < 2; ++i) {
    for (int64_t k = 0; k < 3; ++k) {
      CHECK(v_next.value()[i * 3 + k] ==
            doctest::Approx(gate.value()[i] * s.v.value()[i * 3 + k]).epsilon(1e-14));
      CHECK(x_next.value()[i * 3 + k] ==
            doctest::Approx(s.x.value()[i * 3 + k] + v_next.value()[i * 3 + k]).epsilon(1e-14));
    }
  }
}

TEST_CASE("velocity additive term is tanh-bounded") {
  SakeConfig cfg = small_config(3);
  SakeModelParams model = make_sake_model(cfg);
  const SakeLayerParams& layer = model.layers[0];
  double mix_l1 = 0;
  for (double w : layer.velocity_mix.value()) mix_l1 += std::abs(w);

  const int64_t n_nodes = 6;
  GraphState s = random_state(n_nodes, 3, 29);
  s.v = Tensor(Shape{n_nodes, 3});  // isolate the additive part
  s.h = linear_apply(s.node_attr, model.embed_in);
  EdgeGeometry geo = compute_edge_geometry(s.x, s.edges);
  Tensor h_e = edge_embed(layer, cfg, s.h, geo, s.edges);
  Tensor h_e_att = apply_attention(h_e, combined_attention(layer, h_e, geo, s.edges, n_nodes));
  auto [v_next, x_next] = velocity_position_update(layer, s.h, s.v, s.x, h_e_att, geo, s.edges);
  // each edge contributes a tanh-bounded coefficient times a unit direction
  const double bound = mix_l1 * static_cast<double>(n_nodes - 1);
  for (double v : v_next.value()) CHECK(std::abs(v) <= bound + 1e-12);
}

TEST_CASE("layer forward: equivariance, single node, isomorphic graphs") {
  SUBCASE("h invariant, x and v equivariant under EnTransform") {
    for (int64_t dim : {2, 3, 5}) {
      SakeConfig cfg = small_config(dim);
      SakeModelParams model = make_sake_model(cfg);
      for (int seed = 0; seed < 10; ++seed) {
        GraphState s = random_state(5, dim, 400 + seed);
        s.h = linear_apply(s.node_attr, model.embed_in);
        EnTransform t = random_en_transform(dim, 5, 500 + seed);
        GraphState st = transform_state(t, s);

        GraphState out = sake_layer_forward(model.layers[0], cfg, s);
        GraphState out_t = sake_layer_forward(model.layers[0], cfg, st);

        CHECK(max_rel_dev(permute_rows(t, out.h), out_t.h) < 1e-9);
        CHECK(max_rel_dev(transform_positions(t, out.x), out_t.x) < 1e-9);
        CHECK(max_rel_dev(transform_vectors(t, out.v), out_t.v) < 1e-9);
      }
    }
  }

  SUBCASE("one-node graph stays finite and follows the gate") {
    SakeConfig cfg = small_config(3);
    SakeModelParams model = make_sake_model(cfg);
    GraphState s = random_state(1, 3, 31);
    s.edges = {};
    s.h = linear_apply(s.node_attr, model.embed_in);
    GraphState out = sake_layer_forward(model.layers[0], cfg, s);
    CHECK(all_finite(out.h));
    Tensor gate = mul_scalar(
        sigmoid(linear_apply(silu(linear_apply(s.h, model.layers[0].gate_mlp.l0)),
                             model.layers[0].gate_mlp.l1)),
        2.0);
    for (int64_t k = 0; k < 3; ++k) {
      CHECK(out.x.value()[k] ==
            doctest::Approx(s.x.value()[k] + gate.value()[0] * s.v.value()[k]).epsilon(1e-14));
    }
  }
}

TEST_CASE("model forward basics") {
  SUBCASE("depth 0 leaves geometry untouched") {
    SakeConfig cfg = small_config(3);
    cfg.depth = 0;
    SakeModelParams model = make_sake_model(cfg);
    GraphState s = random_state(4, 3, 37);
    GraphState out = model_forward(model, s);
    CHECK(out.x.value() == s.x.value());
    CHECK(out.v.value() == s.v.value());
    CHECK(out.h.defined());
  }

  SUBCASE("full-stack equivariance for n in {2,3,5}") {
    for (int64_t dim : {2, 3, 5}) {
      SakeConfig cfg = small_config(dim);
      SakeModelParams model = make_sake_model(cfg);
      for (int seed = 0; seed < 5; ++seed) {
        GraphState s = random_state(5, dim, 700 + seed);
        EnTransform t = random_en_transform(dim, 5, 800 + seed);
        GraphState st = transform_state(t, s);
        GraphState out = model_forward(model, s);
        GraphState out_t = model_forward(model, st);
        CHECK(max_rel_dev(permute_rows(t, out.h), out_t.h) < 1e-8);
        CHECK(max_rel_dev(transform_positions(t, out.x), out_t.x) < 1e-8);
        CHECK(max_rel_dev(transform_vectors(t, out.v), out_t.v) < 1e-8);
      }
    }
  }

  SUBCASE("attribute width mismatch is refused") {
    SakeConfig cfg = small_config(3);
    SakeModelParams model = make_sake_model(cfg);
    GraphState s = random_state(3, 3, 41, /*attr_dim=*/2);
    CHECK_THROWS_AS(model_forward(model, s), std::invalid_argument);
  }
}

TEST_CASE("energy and forces") {
  SakeConfig cfg = small_config(3);
  SakeModelParams model = make_sake_model(cfg);

  SUBCASE("energy invariant, forces rotate, translation changes nothing") {
    for (int seed = 0; seed < 5; ++seed) {
      GraphState s = random_state(5, 3, 900 + seed);
      s.v = Tensor(Shape{5, 3});
      auto [e0, f0] = predict_energy_forces(model, s);

      EnTransform t = random_en_transform(3, 5, 950 + seed);
      GraphState st = transform_state(t, s);
      auto [e1, f1] = predict_energy_forces(model, st);
      CHECK(std::abs(e0 - e1) / std::max(1.0, std::abs(e0)) < 1e-8);
      CHECK(max_rel_dev(transform_vectors(t, f0), f1) < 1e-8);

      EnTransform shift = identity_transform(3, 5);
      shift.translation = {0.3, -1.2, 0.8};
      auto [e2, f2] = predict_energy_forces(model, transform_state(shift, s));
      CHECK(std::abs(e0 - e2) < 1e-9 * std::max(1.0, std::abs(e0)));
      CHECK(max_rel_dev(f0, f2) < 1e-9);
    }
  }

  SUBCASE("forces match central finite differences") {
    GraphState s = random_state(5, 3, 999);
    s.v = Tensor(Shape{5, 3});
    auto [energy, forces] = predict_energy_forces(model, s);
    const double h = 1e-5;
    for (int64_t i = 0; i < s.x.numel(); ++i) {
      GraphState sp = s, sm = s;
      sp.x = Tensor::from_data(s.x.shape(), s.x.value());
      sm.x = Tensor::from_data(s.x.shape(), s.x.value());
      sp.x.value()[i] += h;
      sm.x.value()[i] -= h;
      const double ep = predict_energy_forces(model, sp).first;
      const double em = predict_energy_forces(model, sm).first;
      const double fd = -(ep - em) / (2 * h);
      const double scale = std::max(1e-3, std::abs(fd));
      CHECK(std::abs(forces.value()[i] - fd) / scale < 1e-4);
    }
  }
}

TEST_CASE("forecast positions") {
  SakeConfig cfg = small_config(3);
  SakeModelParams model = make_sake_model(cfg);

  SUBCASE("frozen kinetics returns the initial configuration") {
    SakeModelParams frozen = make_sake_model(cfg);
    for (auto& layer : frozen.layers) {
      for (auto& v : layer.velocity_mix.value()) v = 0.0;
      for (auto& v : layer.gate_mlp.l1.w.value()) v = 0.0;
      layer.gate_mlp.l1.b.value()[0] = -1000.0;  // sigmoid underflows to 0
    }
    GraphState s = random_state(5, 3, 1234);
    Tensor pred = forecast_positions(frozen, s);
    CHECK(pred.value() == s.x.value());
  }

  SUBCASE("equivariance and determinism") {
    GraphState s = random_state(5, 3, 4321);
    EnTransform t = random_en_transform(3, 5, 777);
    Tensor a = forecast_positions(model, s);
    Tensor b = forecast_positions(model, transform_state(t, s));
    CHECK(max_rel_dev(transform_positions(t, a), b) < 1e-8);
    Tensor again = forecast_positions(model, s);
    CHECK(a.value() == again.value());
  }
}

TEST_CASE("checkpoint round-trip and mismatch rejection") {
  SakeConfig cfg = small_config(3);
  SakeModelParams model = make_sake_model(cfg);
  const std::string path = "test_model_ckpt.bin";
  save_model(path, model);

  SakeModelParams loaded = load_model(path);
  auto a = named_parameters(model);
  auto b = named_parameters(loaded);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(a[i].second.value() == b[i].second.value());
  }

  GraphState s = random_state(4, 3, 2025);
  CHECK(forecast_positions(model, s).value() == forecast_positions(loaded, s).value());

  // tamper with a stored shape: loader must reject
  LoadedCheckpoint raw = load_checkpoint(path);
  SakeConfig other = cfg;
  other.width = 16;
  SakeModelParams wider = make_sake_model(other);
  CHECK_THROWS_AS(fill_parameters(raw, named_parameters(wider)), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("spanning property: least-squares lambda reproduces targets in the edge span") {
  // pre-tanh aggregate sum_u w_u * unit_u can hit any vector in the span of
  // linearly independent edge directions when n_lambda >= m
  std::mt19937_64 rng(31415);
  for (int trial = 0; trial < 50; ++trial) {
    const int64_t dim = 3;
    const int64_t m = 1 + static_cast<int64_t>(rng() % 3);  // m <= n edges
    Tensor x = randn({m + 1, dim}, rng);
    EdgeList edges;
    for (int32_t u = 1; u <= m; ++u) edges.emplace_back(u, 0);
    EdgeGeometry geo = compute_edge_geometry(x, edges);

    // target inside the span
    std::vector<double> coef(m);
    for (auto& c : coef) c = normal_sample(rng);
    std::vector<double> target(dim, 0.0);
    for (int64_t e = 0; e < m; ++e) {
      for (int64_t k = 0; k < dim; ++k) target[k] += coef[e] * geo.unit.value()[e * dim + k];
    }

    // normal equations for w: (U^T U) w = U^T y with U columns = unit vectors
    std::vector<double> gram(m * m, 0.0), rhs(m, 0.0);
    for (int64_t i = 0; i < m; ++i) {
      for (int64_t j = 0; j < m; ++j) {
        double acc = 0;
        for (int64_t k = 0; k < dim; ++k) {
          acc += geo.unit.value()[i * dim + k] * geo.unit.value()[j * dim + k];
        }
        gram[i * m + j] = acc;
      }
      double acc = 0;
      for (int64_t k = 0; k < dim; ++k) acc += geo.unit.value()[i * dim + k] * target[k];
      rhs[i] = acc;
    }
    // solve by Gaussian elimination with partial pivoting
    for (int64_t c = 0; c < m; ++c) {
      int64_t piv = c;
      for (int64_t r = c + 1; r < m; ++r) {
        if (std::abs(gram[r * m + c]) > std::abs(gram[piv * m + c])) piv = r;
      }
      for (int64_t k = 0; k < m; ++k) std::swap(gram[piv * m + k], gram[c * m + k]);
      std::swap(rhs[piv], rhs[c]);
      for (int64_t r = c + 1; r < m; ++r) {
        const double f = gram[r * m + c] / gram[c * m + c];
        for (int64_t k = c; k < m; ++k) gram[r * m + k] -= f * gram[c * m + k];
        rhs[r] -= f * rhs[c];
      }
    }
    std::vector<double> w(m);
    for (int64_t r = m - 1; r >= 0; --r) {
      double acc = rhs[r];
      for (int64_t k = r + 1; k < m; ++k) acc -= gram[r * m + k] * w[k];
      w[r] = acc / gram[r * m + r];
    }

    // aggregate with those weights through the combination machinery
    Tensor lam = Tensor::from_data({m, 1}, w);
    Tensor combo = scatter_add_rows(row_outer(lam, geo.unit), std::vector<int32_t>(m, 0), 1);
    double residual = 0;
    for (int64_t k = 0; k < dim; ++k) {
      residual = std::max(residual, std::abs(combo.value()[k] - target[k]));
    }
    CHECK(residual < 1e-8);
  }
}
