#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "sake/geometry.hpp"
#include "sake/nbody.hpp"
#include "sake/tensor.hpp"

using namespace sake;

TEST_CASE("like charges repel along the separation axis") {
  NBodySystem sys;
  sys.charges = {1, 1};
  sys.positions = {0, 0, 0, 2, 0, 0};
  sys.velocities = std::vector<double>(6, 0.0);
  auto f = coulomb_forces(sys);
  CHECK(f[0] < 0);       // particle 0 pushed in -x
  CHECK(f[3] == -f[0]);  // equal and opposite
  CHECK(f[1] == 0);
  CHECK(f[2] == 0);
}

TEST_CASE("internal forces conserve momentum") {
  std::mt19937_64 rng(5);
  NBodySystem sys;
  sys.charges = {1, -1, 1, -1, 1};
  sys.positions.resize(15);
  sys.velocities.assign(15, 0.0);
  for (auto& p : sys.positions) p = normal_sample(rng);
  auto f = coulomb_forces(sys);
  for (int64_t k = 0; k < 3; ++k) {
    double total = 0;
    for (int64_t i = 0; i < 5; ++i) total += f[i * 3 + k];
    CHECK(std::abs(total) < 1e-12);
  }
}

TEST_CASE("forces match a per-pair summation oracle") {
  std::mt19937_64 rng(9);
  NBodySystem sys;
  sys.charges = {1, -1, 1};
  sys.positions.resize(9);
  sys.velocities.assign(9, 0.0);
  for (auto& p : sys.positions) p = normal_sample(rng);
  auto f = coulomb_forces(sys);
  for (int64_t i = 0; i < 3; ++i) {
    for (int64_t k = 0; k < 3; ++k) {
      double acc = 0;
      for (int64_t j = 0; j < 3; ++j) {
        if (j == i) continue;
        double r2 = sys.softening * sys.softening;
        for (int64_t d = 0; d < 3; ++d) {
          const double dx = sys.positions[i * 3 + d] - sys.positions[j * 3 + d];
          r2 += dx * dx;
        }
        acc += sys.charges[i] * sys.charges[j] *
               (sys.positions[i * 3 + k] - sys.positions[j * 3 + k]) / std::pow(r2, 1.5);
      }
      CHECK(std::abs(f[i * 3 + k] - acc) < 1e-12);
    }
  }
}

TEST_CASE("leapfrog: free drift, reversibility, energy conservation") {
  SUBCASE("zero forces advance positions by v*dt") {
    NBodySystem sys;
    sys.charges = {1, 1};
    sys.softening = 0.1;
    sys.positions = {0, 0, 0, 1e6, 0, 0};  // effectively non-interacting
    sys.velocities = {1, 2, 3, -1, 0, 0};
    NBodySystem out = leapfrog_step(sys, 0.5);
    CHECK(out.positions[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(out.positions[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out.positions[2] == doctest::Approx(1.5).epsilon(1e-12));
  }

  SUBCASE("step(dt) then step(-dt) returns the initial state") {
    std::mt19937_64 rng(11);
    NBodySystem sys;
    sys.charges = {1, -1, 1, -1};
    sys.positions.resize(12);
    sys.velocities.resize(12);
    for (auto& p : sys.positions) p = normal_sample(rng);
    for (auto& v : sys.velocities) v = 0.3 * normal_sample(rng);
    NBodySystem back = leapfrog_step(leapfrog_step(sys, 1e-2), -1e-2);
    for (int64_t i = 0; i < 12; ++i) {
      CHECK(std::abs(back.positions[i] - sys.positions[i]) < 1e-9);
      CHECK(std::abs(back.velocities[i] - sys.velocities[i]) < 1e-9);
    }
  }

  SUBCASE("bound pair conserves energy over 1000 steps") {
    NBodySystem sys;
    sys.charges = {1, -1};
    sys.softening = 0.1;
    const double d = 1.0;
    // circular orbit about the center of mass
    const double f_mag = d / std::pow(d * d + sys.softening * sys.softening, 1.5);
    const double v_orb = std::sqrt(f_mag * d / 2.0);
    sys.positions = {d / 2, 0, 0, -d / 2, 0, 0};
    sys.velocities = {0, v_orb, 0, 0, -v_orb, 0};
    const double e0 = total_energy(sys);
    NBodySystem cur = sys;
    for (int s = 0; s < 1000; ++s) cur = leapfrog_step(cur, 1e-3);
    CHECK(std::abs(total_energy(cur) - e0) / std::abs(e0) < 1e-4);
  }
}

TEST_CASE("dataset generation: determinism, sizes, file round-trip") {
  DatasetConfig cfg;
  cfg.n_train = 12;
  cfg.n_valid = 6;
  cfg.n_test = 6;
  cfg.steps = 50;
  cfg.seed = 42;

  TrajectoryDataset a = generate_dataset(cfg);
  TrajectoryDataset b = generate_dataset(cfg);
  CHECK(a.train.size() == 12);
  CHECK(a.valid.size() == 6);
  CHECK(a.test.size() == 6);
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train[i].x1 == b.train[i].x1);
  }
  for (const auto& rec : a.train) {
    for (double v : rec.x1) CHECK(std::isfinite(v));
  }

  const std::string path = "test_nbody_ds.txt";
  write_dataset(path, a);
  write_dataset(path + ".again", a);
  {
    std::ifstream f1(path), f2(path + ".again");
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);  // byte-identical
  }
  TrajectoryDataset rt = read_dataset(path);
  CHECK(rt.config.particles == cfg.particles);
  CHECK(rt.config.dt == cfg.dt);
  REQUIRE(rt.train.size() == a.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    CHECK(rt.train[i].charges == a.train[i].charges);
    CHECK(rt.train[i].x0 == a.train[i].x0);
    CHECK(rt.train[i].v0 == a.train[i].v0);
    CHECK(rt.train[i].x1 == a.train[i].x1);
  }
  std::remove(path.c_str());
  std::remove((path + ".again").c_str());
}

TEST_CASE("the simulated physics is E(n)-equivariant") {
  DatasetConfig cfg;
  cfg.n_train = 1;
  cfg.n_valid = 1;
  cfg.n_test = 1;
  cfg.steps = 200;
  cfg.seed = 77;
  TrajectoryDataset ds = generate_dataset(cfg);
  const TrajectoryRecord& rec = ds.train[0];

  for (int s = 0; s < 5; ++s) {
    EnTransform t = random_en_transform(3, cfg.particles, 1000 + s);
    Tensor x0 = Tensor::from_data({cfg.particles, 3}, rec.x0);
    Tensor v0 = Tensor::from_data({cfg.particles, 3}, rec.v0);
    Tensor x0t = transform_positions(t, x0);
    Tensor v0t = transform_vectors(t, v0);
    std::vector<double> charges_t(cfg.particles);
    for (int64_t i = 0; i < cfg.particles; ++i) charges_t[t.permutation[i]] = rec.charges[i];

    TrajectoryRecord sim =
        simulate_record(charges_t, x0t.value(), v0t.value(), 3, cfg.steps, cfg.dt, cfg.softening);
    Tensor want = transform_positions(t, Tensor::from_data({cfg.particles, 3}, rec.x1));
    for (int64_t i = 0; i < want.numel(); ++i) {
      CHECK(std::abs(sim.x1[i] - want.value()[i]) < 1e-6);
    }
  }
}

TEST_CASE("trivial propagation is a weak baseline") {
  // the spread of x1 around x0 + v0*T is what a model has to learn
  DatasetConfig cfg;
  cfg.n_train = 50;
  cfg.n_valid = 1;
  cfg.n_test = 1;
  cfg.steps = 1000;
  cfg.seed = 3;
  TrajectoryDataset ds = generate_dataset(cfg);
  const double horizon = cfg.dt * static_cast<double>(cfg.steps);
  double mse = 0;
  int64_t count = 0;
  for (const auto& rec : ds.train) {
    for (std::size_t i = 0; i < rec.x1.size(); ++i) {
      const double pred = rec.x0[i] + horizon * rec.v0[i];
      mse += (pred - rec.x1[i]) * (pred - rec.x1[i]);
      ++count;
    }
  }
  mse /= static_cast<double>(count);
  CHECK(mse > 1e-4);  // interactions matter over this horizon
  CHECK(mse < 10.0);  // but trajectories stay bounded
}
