#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sake/flow.hpp"
#include "sake/model.hpp"

namespace sake {

struct PropertyResult {
  std::string suite;
  uint64_t seed;      // the seed to replay (worst offender for multi-seed runs)
  double deviation;
  double tolerance;
  bool pass;          // deviation <= tolerance

  static PropertyResult make(std::string suite, uint64_t seed, double deviation,
                             double tolerance);
};

/// One line per result: suite seed deviation tolerance pass, tab-separated.
std::string format_report(const std::vector<PropertyResult>& results);

using StateMap = std::function<GraphState(const GraphState&)>;

/// Transform-and-compare: random state + random EnTransform per seed;
/// deviation is the max over h (invariant, permuted), x (full transform) and
/// v (rotation+permutation only).
PropertyResult check_equivariance(const StateMap& fn, int64_t dim, int64_t n_seeds, double tol,
                                  const std::string& suite, uint64_t seed_base,
                                  int64_t n_nodes = 5);

/// Central differences per coordinate.
std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& fn,
                                     std::vector<double> point, double h = 1e-5);

/// Orthonormal basis of the zero-center subspace of [N x n] configurations,
/// dimension (N-1)*n.
std::vector<Tensor> centered_subspace_basis(int64_t n_nodes, int64_t dim);

/// log |det| of the finite-difference Jacobian of `map` expressed in the
/// given basis; throws on a numerically singular Jacobian.
double numeric_subspace_logdet(const std::function<Tensor(const Tensor&)>& map,
                               const Tensor& point, const std::vector<Tensor>& basis,
                               double h = 1e-6);

struct VerifyOptions {
  std::string suite;            // empty: all suites
  int64_t equivariance_seeds = 200;
  uint64_t seed = 2666;
};

extern const std::vector<std::string> kVerifySuites;

std::vector<PropertyResult> run_verify(const VerifyOptions& options);

struct BenchPoint {
  int64_t edges;
  double seconds;
};

struct BenchReport {
  std::vector<BenchPoint> sweep;
  double exponent = 0;       // log-log slope of forward time vs edge count
  double spread = 0;         // max relative deviation across repeats
  ForwardProfile profile;    // stage breakdown at the largest size
  double profile_coverage = 0;  // profiled fraction of measured wall time
};

BenchReport run_bench(uint64_t seed = 2666);
std::string format_bench(const BenchReport& report);

}  // namespace sake
