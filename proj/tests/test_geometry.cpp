#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sake/geometry.hpp"

using namespace sake;

TEST_CASE("edge geometry: 3-4-5 triangle") {
  Tensor x = Tensor::from_data({2, 3}, {0, 0, 0, 3, 4, 0});
  EdgeGeometry geo = compute_edge_geometry(x, {{0, 1}});
  CHECK(geo.vec.value() == std::vector<double>{3, 4, 0});
  CHECK(std::abs(geo.dist.value()[0] - 5.0) < 1e-10);
  CHECK(std::abs(geo.unit.value()[0] - 0.6) < 1e-10);
}

TEST_CASE("edge geometry: coincident points stay finite") {
  Tensor x = Tensor::from_data({2, 2}, {1, 1, 1, 1});
  EdgeGeometry geo = compute_edge_geometry(x, {{0, 1}});
  CHECK(geo.dist.value()[0] == doctest::Approx(kNormEps).epsilon(1e-12));
  CHECK(all_finite(geo.unit));
  double norm = 0;
  for (double v : geo.unit.value()) norm += v * v;
  CHECK(std::sqrt(norm) <= 1.0 + 1e-9);
}

TEST_CASE("edge geometry rejects self-edges") {
  Tensor x = Tensor::from_data({2, 2}, {0, 0, 1, 0});
  CHECK_THROWS_AS(compute_edge_geometry(x, {{1, 1}}), std::invalid_argument);
}

TEST_CASE("distances invariant under random rotation") {
  std::mt19937_64 rng(3);
  for (int64_t n : {2, 3, 5}) {
    Tensor x = randn({6, n}, rng);
    EdgeList edges;
    for (int32_t u = 0; u < 6; ++u) {
      for (int32_t v = 0; v < 6; ++v) {
        if (u != v) edges.emplace_back(u, v);
      }
    }
    EnTransform t = random_en_transform(n, 6, 99 + n);
    Tensor xt = transform_positions(t, x);
    EdgeGeometry a = compute_edge_geometry(x, edges);
    EdgeGeometry b = compute_edge_geometry(xt, permute_edges(t, edges));
    for (int64_t e = 0; e < a.dist.numel(); ++e) {
      CHECK(std::abs(a.dist.value()[e] - b.dist.value()[e]) < 1e-9);
    }
  }
}

TEST_CASE("rbf expansion peaks and decay") {
  const int64_t nb = 50;
  const double dmax = 5.0;
  const double spacing = dmax / (nb - 1);
  Tensor d = Tensor::from_data({2}, {spacing * 7, spacing * 7 + spacing});
  Tensor out = rbf_expand(d, nb, dmax);
  CHECK(out.value()[7] == doctest::Approx(1.0));
  CHECK(out.value()[nb + 7] == doctest::Approx(std::exp(-0.5)));

  // outputs in (0,1] up to double underflow, monotone decay from each center
  Tensor grid(Shape{101});
  for (int i = 0; i <= 100; ++i) grid.value()[i] = dmax * i / 100.0;
  Tensor g = rbf_expand(grid, nb, dmax);
  for (int i = 0; i <= 100; ++i) {
    for (int64_t k = 0; k < nb; ++k) {
      const double v = g.value()[i * nb + k];
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      const double z = (grid.value()[i] - spacing * k) / spacing;
      if (z * z / 2 < 700) CHECK(v > 0.0);  // representable without underflow
    }
  }
  for (int64_t k = 0; k < nb; ++k) {
    const double mu = spacing * k;
    for (int i = 0; i + 1 <= 100; ++i) {
      const double d0 = grid.value()[i], d1 = grid.value()[i + 1];
      if (d0 >= mu) CHECK(g.value()[(i + 1) * nb + k] <= g.value()[i * nb + k] + 1e-15);
      if (d1 <= mu) CHECK(g.value()[(i + 1) * nb + k] >= g.value()[i * nb + k] - 1e-15);
    }
  }

  // bit-identical on transformed configurations (same distances in, same out)
  Tensor g2 = rbf_expand(grid, nb, dmax);
  CHECK(g.value() == g2.value());
}

TEST_CASE("cutoff weight endpoints and smoothness") {
  const double d0 = 2.5;
  Tensor d = Tensor::from_data({3}, {0.0, d0, d0 / 2});
  Tensor w = cutoff_weight(d, d0);
  CHECK(w.value()[0] == doctest::Approx(1.0));
  CHECK(w.value()[1] == doctest::Approx(0.0));
  CHECK(w.value()[2] == doctest::Approx(0.5));

  // C1 at the cutoff: one-sided numerical derivatives agree
  const double h = 1e-7;
  auto eval = [&](double dist) {
    return cutoff_weight(Tensor::from_data({1}, {dist}), d0).value()[0];
  };
  const double left = (eval(d0) - eval(d0 - h)) / h;
  const double right = (eval(d0 + h) - eval(d0)) / h;
  CHECK(std::abs(left - right) < 1e-6);
  CHECK(std::abs(left) < 1e-6);
}

TEST_CASE("random transforms are orthogonal and reproducible") {
  for (int64_t n : {2, 3, 5}) {
    EnTransform t = random_en_transform(n, 5, 1234);
    CHECK(orthogonality_defect(t) < 1e-10);
    CHECK(std::abs(std::abs(rotation_det(t)) - 1.0) < 1e-10);
    EnTransform t2 = random_en_transform(n, 5, 1234);
    CHECK(t.rotation == t2.rotation);
    CHECK(t.translation == t2.translation);
    CHECK(t.permutation == t2.permutation);
  }
}

TEST_CASE("reflection frequency near one half") {
  int neg = 0;
  const int trials = 1000;
  for (int s = 0; s < trials; ++s) {
    if (rotation_det(random_en_transform(3, 4, 5000 + s)) < 0) ++neg;
  }
  const double frac = static_cast<double>(neg) / trials;
  CHECK(frac > 0.42);
  CHECK(frac < 0.58);
}

TEST_CASE("apply_transform basics") {
  Tensor x = Tensor::from_data({2, 2}, {1, 0, 0, 2});
  Tensor v = Tensor::from_data({2, 2}, {1, 1, -1, 0});

  EnTransform id = identity_transform(2, 2);
  CHECK(transform_positions(id, x).value() == x.value());

  EnTransform tr = identity_transform(2, 2);
  tr.translation = {3, -1};
  CHECK(transform_vectors(tr, v).value() == v.value());  // velocities do not translate
  CHECK(transform_positions(tr, x).value() == std::vector<double>{4, -1, 3, 1});
}

TEST_CASE("transform composition") {
  std::mt19937_64 rng(17);
  for (int s = 0; s < 20; ++s) {
    const int64_t n = 3;
    Tensor x = randn({5, n}, rng);
    EnTransform t1 = random_en_transform(n, 5, 100 + s);
    EnTransform t2 = random_en_transform(n, 5, 200 + s);
    Tensor two_step = transform_positions(t2, transform_positions(t1, x));
    Tensor one_step = transform_positions(compose(t2, t1), x);
    for (int64_t i = 0; i < x.numel(); ++i) {
      CHECK(std::abs(two_step.value()[i] - one_step.value()[i]) < 1e-10);
    }
  }
}

TEST_CASE("pairwise distances invariant under full transform, n in {2,3,5}") {
  std::mt19937_64 rng(31);
  for (int64_t n : {2, 3, 5}) {
    for (int s = 0; s < 10; ++s) {
      Tensor x = randn({7, n}, rng);
      EnTransform t = random_en_transform(n, 7, 900 + 10 * n + s);
      Tensor xt = transform_positions(t, x);
      for (int32_t i = 0; i < 7; ++i) {
        for (int32_t j = i + 1; j < 7; ++j) {
          double da = 0, db = 0;
          for (int64_t k = 0; k < n; ++k) {
            const double a = x.value()[i * n + k] - x.value()[j * n + k];
            const double b =
                xt.value()[t.permutation[i] * n + k] - xt.value()[t.permutation[j] * n + k];
            da += a * a;
            db += b * b;
          }
          CHECK(std::abs(std::sqrt(da) - std::sqrt(db)) < 1e-9);
        }
      }
    }
  }
}

TEST_CASE("geometry is differentiable through the smoothed norm") {
  Tape tape;
  Tape::Scope scope(tape);
  Tensor x = Tensor::from_data({2, 3}, {0, 0, 0, 3, 4, 0});
  x.set_requires_grad(true);
  EdgeGeometry geo = compute_edge_geometry(x, {{0, 1}});
  backward(sum_all(geo.dist));
  // d|e|/dx_v = unit vector; d/dx_u = -unit
  CHECK(x.grad()[3] == doctest::Approx(0.6).epsilon(1e-9));
  CHECK(x.grad()[0] == doctest::Approx(-0.6).epsilon(1e-9));
}
