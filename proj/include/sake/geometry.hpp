#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "sake/tensor.hpp"

namespace sake {

/// Smoothing inside norms; keeps directions and force gradients finite at
/// coincident points.
constexpr double kNormEps = 1e-10;

using EdgeList = std::vector<std::pair<int32_t, int32_t>>;  // (u, v), u -> v

struct EdgeGeometry {
  Tensor vec;   // [E x n], x_v - x_u
  Tensor dist;  // [E], sqrt(|vec|^2 + eps^2)
  Tensor unit;  // [E x n], vec / dist
};

/// Per-edge displacement, smoothed norm, and direction. Differentiable in x.
EdgeGeometry compute_edge_geometry(const Tensor& x, const EdgeList& edges);

/// Gaussian bases with centers evenly spaced on [0, d_max], sigma = spacing.
Tensor rbf_expand(const Tensor& dist, int64_t n_basis, double d_max);

/// 0.5*(cos(pi*d/d0) + 1) for d <= d0, else 0; C1 at d0.
Tensor cutoff_weight(const Tensor& dist, double d0);

/// Dense row-major n x n matrix plus offset; small fixed-size linear algebra
/// for the test harness.
struct EnTransform {
  int64_t dim = 0;
  std::vector<double> rotation;     // n x n orthogonal, det +/-1; applied as x R
  std::vector<double> translation;  // length n
  std::vector<int32_t> permutation;  // node i moves to slot permutation[i]
};

/// Haar-ish orthogonal matrix (QR with sign correction, 50% extra
/// reflection), Gaussian translation, uniform permutation over n_nodes.
EnTransform random_en_transform(int64_t dim, int64_t n_nodes, uint64_t seed);

EnTransform identity_transform(int64_t dim, int64_t n_nodes);

/// t2 after t1 as a single transform.
EnTransform compose(const EnTransform& t2, const EnTransform& t1);

/// x' = P(x R + 1 t^T); v' = P(v R): velocities rotate and permute but do
/// not translate.
Tensor transform_positions(const EnTransform& t, const Tensor& x);
Tensor transform_vectors(const EnTransform& t, const Tensor& v);
EdgeList permute_edges(const EnTransform& t, const EdgeList& edges);
/// Row permutation only (invariant per-node quantities).
Tensor permute_rows(const EnTransform& t, const Tensor& h);

double orthogonality_defect(const EnTransform& t);  // max |R R^T - I|
double rotation_det(const EnTransform& t);

}  // namespace sake
