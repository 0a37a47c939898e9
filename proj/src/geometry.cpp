#include "sake/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sake {

EdgeGeometry compute_edge_geometry(const Tensor& x, const EdgeList& edges) {
  if (x.rank() != 2) throw std::invalid_argument("positions must be [N x n]");
  const int64_t n_nodes = x.extent(0);
  std::vector<int32_t> src, dst;
  src.reserve(edges.size());
  dst.reserve(edges.size());
  for (const auto& [u, v] : edges) {
    if (u == v) throw std::invalid_argument("self-edge " + std::to_string(u) + " in edge list");
    if (u < 0 || v < 0 || u >= n_nodes || v >= n_nodes) {
      throw std::invalid_argument("edge endpoint out of range");
    }
    src.push_back(u);
    dst.push_back(v);
  }
  EdgeGeometry geo;
  geo.vec = sub(gather_rows(x, dst), gather_rows(x, src));
  Tensor sq = reduce_sum(square(geo.vec), 1);
  geo.dist = sqrt(add_scalar(sq, kNormEps * kNormEps));
  geo.unit = scale_rows(geo.vec, div(Tensor::scalar(1.0), geo.dist));
  return geo;
}

Tensor rbf_expand(const Tensor& dist, int64_t n_basis, double d_max) {
  if (n_basis < 2) throw std::invalid_argument("rbf_expand needs n_basis >= 2");
  if (d_max <= 0) throw std::invalid_argument("rbf_expand needs d_max > 0");
  if (dist.rank() != 1) throw std::invalid_argument("rbf_expand expects a vector of distances");
  const double spacing = d_max / static_cast<double>(n_basis - 1);
  const double inv_two_sigma_sq = 1.0 / (2.0 * spacing * spacing);
  const int64_t n = dist.numel();

  Tensor out(Shape{n, n_basis});
  const auto& dv = dist.value();
  auto& ov = out.value();
  for (int64_t e = 0; e < n; ++e) {
    for (int64_t k = 0; k < n_basis; ++k) {
      const double d = dv[e] - spacing * static_cast<double>(k);
      ov[e * n_basis + k] = std::exp(-d * d * inv_two_sigma_sq);
    }
  }
  if (Tape::active() && dist.requires_grad()) {
    Tensor dc = dist, outc = out;
    Tape::active()->record([dc, outc, n, n_basis, spacing, inv_two_sigma_sq]() {
      const auto& g = outc.node()->grad;
      if (g.empty()) return;
      Tensor d_mut = dc;
      auto& gd = d_mut.grad();
      const auto& dv2 = dc.value();
      const auto& ov2 = outc.value();
      for (int64_t e = 0; e < n; ++e) {
        double acc = 0.0;
        for (int64_t k = 0; k < n_basis; ++k) {
          const double d = dv2[e] - spacing * static_cast<double>(k);
          acc += g[e * n_basis + k] * ov2[e * n_basis + k] * (-2.0 * d * inv_two_sigma_sq);
        }
        gd[e] += acc;
      }
    });
    out.set_requires_grad(true);
  }
  return out;
}

Tensor cutoff_weight(const Tensor& dist, double d0) {
  if (d0 <= 0) throw std::invalid_argument("cutoff_weight needs d0 > 0");
  const int64_t n = dist.numel();
  Tensor out(dist.shape());
  const auto& dv = dist.value();
  auto& ov = out.value();
  for (int64_t i = 0; i < n; ++i) {
    ov[i] = dv[i] <= d0 ? 0.5 * (std::cos(M_PI * dv[i] / d0) + 1.0) : 0.0;
  }
  if (Tape::active() && dist.requires_grad()) {
    Tensor dc = dist, outc = out;
    Tape::active()->record([dc, outc, n, d0]() {
      const auto& g = outc.node()->grad;
      if (g.empty()) return;
      Tensor d_mut = dc;
      auto& gd = d_mut.grad();
      const auto& dv2 = dc.value();
      for (int64_t i = 0; i < n; ++i) {
        if (dv2[i] <= d0) gd[i] += g[i] * (-0.5 * M_PI / d0) * std::sin(M_PI * dv2[i] / d0);
      }
    });
    out.set_requires_grad(true);
  }
  return out;
}

namespace {

// Modified Gram-Schmidt with a second sweep; n stays tiny here.
void orthonormalize_columns(std::vector<double>& a, int64_t n) {
  for (int64_t j = 0; j < n; ++j) {
    for (int sweep = 0; sweep < 2; ++sweep) {
      for (int64_t k = 0; k < j; ++k) {
        double dot = 0.0;
        for (int64_t i = 0; i < n; ++i) dot += a[i * n + k] * a[i * n + j];
        for (int64_t i = 0; i < n; ++i) a[i * n + j] -= dot * a[i * n + k];
      }
    }
    double norm = 0.0;
    for (int64_t i = 0; i < n; ++i) norm += a[i * n + j] * a[i * n + j];
    norm = std::sqrt(norm);
    for (int64_t i = 0; i < n; ++i) a[i * n + j] /= norm;
  }
}

double det_small(std::vector<double> m, int64_t n) {
  double det = 1.0;
  for (int64_t c = 0; c < n; ++c) {
    int64_t piv = c;
    for (int64_t r = c + 1; r < n; ++r) {
      if (std::abs(m[r * n + c]) > std::abs(m[piv * n + c])) piv = r;
    }
    if (m[piv * n + c] == 0.0) return 0.0;
    if (piv != c) {
      for (int64_t k = 0; k < n; ++k) std::swap(m[piv * n + k], m[c * n + k]);
      det = -det;
    }
    det *= m[c * n + c];
    for (int64_t r = c + 1; r < n; ++r) {
      const double f = m[r * n + c] / m[c * n + c];
      for (int64_t k = c; k < n; ++k) m[r * n + k] -= f * m[c * n + k];
    }
  }
  return det;
}

}  // namespace

EnTransform random_en_transform(int64_t dim, int64_t n_nodes, uint64_t seed) {
  if (dim < 1) throw std::invalid_argument("transform dimension must be >= 1");
  std::mt19937_64 rng(seed);
  EnTransform t;
  t.dim = dim;
  t.rotation.resize(dim * dim);
  for (auto& v : t.rotation) v = normal_sample(rng);
  orthonormalize_columns(t.rotation, dim);
  if (det_small(t.rotation, dim) < 0) {
    // normalize to det +1 so the coin below controls the reflection
    for (int64_t i = 0; i < dim; ++i) t.rotation[i * dim] = -t.rotation[i * dim];
  }
  if (uniform_sample(rng, 0.0, 1.0) < 0.5) {
    for (int64_t i = 0; i < dim; ++i) t.rotation[i * dim] = -t.rotation[i * dim];
  }
  t.translation.resize(dim);
  for (auto& v : t.translation) v = 2.0 * normal_sample(rng);
  t.permutation.resize(n_nodes);
  std::iota(t.permutation.begin(), t.permutation.end(), 0);
  for (int64_t i = n_nodes - 1; i > 0; --i) {
    const auto j = static_cast<int64_t>(rng() % static_cast<uint64_t>(i + 1));
    std::swap(t.permutation[i], t.permutation[j]);
  }
  return t;
}

EnTransform identity_transform(int64_t dim, int64_t n_nodes) {
  EnTransform t;
  t.dim = dim;
  t.rotation.assign(dim * dim, 0.0);
  for (int64_t i = 0; i < dim; ++i) t.rotation[i * dim + i] = 1.0;
  t.translation.assign(dim, 0.0);
  t.permutation.resize(n_nodes);
  std::iota(t.permutation.begin(), t.permutation.end(), 0);
  return t;
}

EnTransform compose(const EnTransform& t2, const EnTransform& t1) {
  if (t1.dim != t2.dim || t1.permutation.size() != t2.permutation.size()) {
    throw std::invalid_argument("compose: transforms disagree on dimensions");
  }
  const int64_t n = t1.dim;
  EnTransform out;
  out.dim = n;
  out.rotation.assign(n * n, 0.0);
  // x R1 R2
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t k = 0; k < n; ++k) {
      const double r1 = t1.rotation[i * n + k];
      for (int64_t j = 0; j < n; ++j) out.rotation[i * n + j] += r1 * t2.rotation[k * n + j];
    }
  }
  out.translation.assign(n, 0.0);
  for (int64_t j = 0; j < n; ++j) {
    double acc = t2.translation[j];
    for (int64_t k = 0; k < n; ++k) acc += t1.translation[k] * t2.rotation[k * n + j];
    out.translation[j] = acc;
  }
  out.permutation.resize(t1.permutation.size());
  for (std::size_t i = 0; i < t1.permutation.size(); ++i) {
    out.permutation[i] = t2.permutation[t1.permutation[i]];
  }
  return out;
}

namespace {

Tensor apply_linear(const EnTransform& t, const Tensor& x, bool translate) {
  if (x.rank() != 2 || x.extent(1) != t.dim) {
    throw std::invalid_argument("transform: shape " + shape_str(x.shape()) +
                                " does not match dim " + std::to_string(t.dim));
  }
  const int64_t rows = x.extent(0), n = t.dim;
  if (rows != static_cast<int64_t>(t.permutation.size())) {
    throw std::invalid_argument("transform: permutation size does not match node count");
  }
  Tensor out(x.shape());
  const auto& xv = x.value();
  auto& ov = out.value();
  for (int64_t r = 0; r < rows; ++r) {
    const int64_t pr = t.permutation[r];
    for (int64_t j = 0; j < n; ++j) {
      double acc = translate ? t.translation[j] : 0.0;
      for (int64_t k = 0; k < n; ++k) acc += xv[r * n + k] * t.rotation[k * n + j];
      ov[pr * n + j] = acc;
    }
  }
  return out;
}

}  // namespace

Tensor transform_positions(const EnTransform& t, const Tensor& x) {
  return apply_linear(t, x, true);
}

Tensor transform_vectors(const EnTransform& t, const Tensor& v) {
  return apply_linear(t, v, false);
}

EdgeList permute_edges(const EnTransform& t, const EdgeList& edges) {
  EdgeList out;
  out.reserve(edges.size());
  for (const auto& [u, v] : edges) out.emplace_back(t.permutation[u], t.permutation[v]);
  return out;
}

Tensor permute_rows(const EnTransform& t, const Tensor& h) {
  const int64_t rows = h.extent(0);
  const int64_t block = rows == 0 ? 0 : h.numel() / rows;
  Tensor out(h.shape());
  for (int64_t r = 0; r < rows; ++r) {
    std::copy(h.value().begin() + r * block, h.value().begin() + (r + 1) * block,
              out.value().begin() + t.permutation[r] * block);
  }
  return out;
}

double orthogonality_defect(const EnTransform& t) {
  const int64_t n = t.dim;
  double worst = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      double dot = 0.0;
      for (int64_t k = 0; k < n; ++k) dot += t.rotation[i * n + k] * t.rotation[j * n + k];
      worst = std::max(worst, std::abs(dot - (i == j ? 1.0 : 0.0)));
    }
  }
  return worst;
}

double rotation_det(const EnTransform& t) { return det_small(t.rotation, t.dim); }

}  // namespace sake
