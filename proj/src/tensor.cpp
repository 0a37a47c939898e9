#include "sake/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>

namespace sake {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) {
  for (int64_t d : shape) {
    if (d < 0) throw std::invalid_argument("negative extent in shape " + shape_str(shape));
  }
  d_ = std::make_shared<TensorData>();
  d_->value.assign(static_cast<std::size_t>(shape_numel(shape)), fill);
  d_->shape = std::move(shape);
}

Tensor Tensor::scalar(double v) {
  Tensor t(Shape{});
  t.d_->value[0] = v;
  return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
    throw std::invalid_argument("data length " + std::to_string(data.size()) +
                                " does not fill shape " + shape_str(shape));
  }
  Tensor t;
  t.d_ = std::make_shared<TensorData>();
  t.d_->shape = std::move(shape);
  t.d_->value = std::move(data);
  return t;
}

double Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item() on non-scalar tensor " + shape_str(shape()));
  return d_->value[0];
}

Tensor& Tensor::set_requires_grad(bool b) {
  d_->requires_grad = b;
  return *this;
}

std::vector<double>& Tensor::grad() {
  if (d_->grad.empty()) d_->grad.assign(d_->value.size(), 0.0);
  return d_->grad;
}

void Tensor::zero_grad() {
  std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
}

namespace {

thread_local Tape* g_active_tape = nullptr;

inline std::vector<double>* grad_sink(const std::shared_ptr<TensorData>& t) {
  if (!t->requires_grad) return nullptr;
  if (t->grad.empty()) t->grad.assign(t->value.size(), 0.0);
  return &t->grad;
}

inline bool track(const Tensor& t) {
  return g_active_tape != nullptr && t.requires_grad();
}

inline void mark_output(Tensor& out) { out.set_requires_grad(true); }

}  // namespace

Tape::Scope::Scope(Tape& t) : prev_(g_active_tape) { g_active_tape = &t; }
Tape::Scope::~Scope() { g_active_tape = prev_; }
Tape* Tape::active() { return g_active_tape; }

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward needs a scalar loss, got " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    // Constant loss: nothing on the tape feeds it; all grads stay zero.
    clear();
    return;
  }
  auto node = loss.handle();
  if (node->grad.empty()) node->grad.assign(1, 0.0);
  node->grad[0] = 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  clear();
}

void backward(const Tensor& loss) {
  Tape* t = Tape::active();
  if (!t) throw std::runtime_error("backward called with no active tape");
  t->backward(loss);
}

// ---------------------------------------------------------------------------
// broadcast helpers

namespace {

// Valid pairs: equal shapes, scalar vs anything, or the smaller shape a
// trailing suffix of the larger. Element i of the larger maps to i % numel
// of the smaller.
bool is_suffix_of(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  const std::size_t off = big.size() - small.size();
  for (std::size_t i = 0; i < small.size(); ++i) {
    if (big[off + i] != small[i]) return false;
  }
  return true;
}

struct BinaryPlan {
  bool a_is_big;
  int64_t n_big;
  int64_t n_small;
};

BinaryPlan plan_binary(const Tensor& a, const Tensor& b, const char* opname) {
  BinaryPlan p{};
  if (a.shape() == b.shape()) {
    p.a_is_big = true;
    p.n_big = a.numel();
    p.n_small = a.numel();
    return p;
  }
  const bool a_big_ok = b.numel() == 1 || is_suffix_of(b.shape(), a.shape());
  const bool b_big_ok = a.numel() == 1 || is_suffix_of(a.shape(), b.shape());
  if (!a_big_ok && !b_big_ok) {
    throw std::invalid_argument(std::string(opname) + ": broadcast mismatch " +
                                shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  // when both qualify (e.g. two one-element tensors) the higher rank wins
  p.a_is_big = a_big_ok && (!b_big_ok || a.rank() >= b.rank());
  p.n_big = p.a_is_big ? a.numel() : b.numel();
  p.n_small = p.a_is_big ? b.numel() : a.numel();
  return p;
}

template <class Fwd, class BackA, class BackB>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, Fwd fwd,
                 BackA back_a, BackB back_b) {
  BinaryPlan p = plan_binary(a, b, name);
  const Tensor& big = p.a_is_big ? a : b;
  Tensor out(big.shape());
  const auto& av = a.value();
  const auto& bv = b.value();
  auto& ov = out.value();
  const int64_t ns = p.n_small;
  if (p.a_is_big) {
    for (int64_t i = 0; i < p.n_big; ++i) ov[i] = fwd(av[i], bv[ns == 1 ? 0 : i % ns]);
  } else {
    for (int64_t i = 0; i < p.n_big; ++i) ov[i] = fwd(av[ns == 1 ? 0 : i % ns], bv[i]);
  }
  if (g_active_tape && (a.requires_grad() || b.requires_grad())) {
    Tensor outc = out;
    Tensor ac = a, bc = b;
    g_active_tape->record([p, ac, bc, outc, back_a, back_b]() {
      const auto& g = outc.node()->grad;
      if (g.empty()) return;
      const auto& av2 = ac.value();
      const auto& bv2 = bc.value();
      const auto& ov2 = outc.value();
      auto* ga = grad_sink(ac.handle());
      auto* gb = grad_sink(bc.handle());
      const int64_t ns = p.n_small;
      for (int64_t i = 0; i < p.n_big; ++i) {
        const int64_t is = ns == 1 ? 0 : i % ns;
        const int64_t ia = p.a_is_big ? i : is;
        const int64_t ib = p.a_is_big ? is : i;
        if (ga) (*ga)[ia] += back_a(g[i], av2[ia], bv2[ib], ov2[i]);
        if (gb) (*gb)[ib] += back_b(g[i], av2[ia], bv2[ib], ov2[i]);
      }
    });
    mark_output(out);
  }
  return out;
}

template <class Fwd, class Back>
Tensor unary_op(const Tensor& x, Fwd fwd, Back back) {
  Tensor out(x.shape());
  const auto& xv = x.value();
  auto& ov = out.value();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) ov[i] = fwd(xv[i]);
  if (track(x)) {
    Tensor outc = out, xc = x;
    g_active_tape->record([xc, outc, back]() {
      const auto& g = outc.node()->grad;
      if (g.empty()) return;
      auto* gx = grad_sink(xc.handle());
      if (!gx) return;
      const auto& xv2 = xc.value();
      const auto& ov2 = outc.value();
      const int64_t n2 = static_cast<int64_t>(xv2.size());
      for (int64_t i = 0; i < n2; ++i) (*gx)[i] += g[i] * back(xv2[i], ov2[i]);
    });
    mark_output(out);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double g, double, double, double) { return g; },
      [](double g, double, double, double) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double g, double, double, double) { return g; },
      [](double g, double, double, double) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double g, double, double y, double) { return g * y; },
      [](double g, double x, double, double) { return g * x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  // div by zero yields a non-finite result that propagates; no clamping.
  return binary_op(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double g, double, double y, double) { return g / y; },
      [](double g, double, double y, double o) { return -g * o / y; });
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary_op(
      a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double c) {
  return unary_op(
      a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}

Tensor silu(const Tensor& x) {
  return unary_op(
      x, [](double v) { return v / (1.0 + std::exp(-v)); },
      [](double v, double) {
        const double s = 1.0 / (1.0 + std::exp(-v));
        return s * (1.0 + v * (1.0 - s));
      });
}

Tensor celu(const Tensor& x) {
  return unary_op(
      x, [](double v) { return v > 0.0 ? v : std::expm1(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : std::exp(v); });
}

Tensor tanh(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::tanh(v); },
      [](double, double o) { return 1.0 - o * o; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double o) { return o * (1.0 - o); });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::exp(v); },
      [](double, double o) { return o; });
}

Tensor log(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor square(const Tensor& x) {
  return unary_op(
      x, [](double v) { return v * v; },
      [](double v, double) { return 2.0 * v; });
}

Tensor sqrt(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::sqrt(v); },
      [](double v, double o) { return v == 0.0 ? 0.0 : 0.5 / o; });
}

// ---------------------------------------------------------------------------
// matmul

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0)) {
    throw std::invalid_argument("matmul dimension error: " + shape_str(a.shape()) + " by " +
                                shape_str(b.shape()));
  }
  const int64_t m = a.extent(0), k = a.extent(1), p = b.extent(1);
  Tensor out(Shape{m, p});
  {
    const double* av = a.value().data();
    const double* bv = b.value().data();
    double* ov = out.value().data();
#pragma omp parallel for schedule(static) if (m * k * p > 65536)
    for (int64_t i = 0; i < m; ++i) {
      double* orow = ov + i * p;
      const double* arow = av + i * k;
      for (int64_t kk = 0; kk < k; ++kk) {
        const double aik = arow[kk];
        const double* brow = bv + kk * p;
        for (int64_t j = 0; j < p; ++j) orow[j] += aik * brow[j];
      }
    }
  }
  if (g_active_tape && (a.requires_grad() || b.requires_grad())) {
    Tensor ac = a, bc = b, outc = out;
    g_active_tape->record([ac, bc, outc, m, k, p]() {
      const auto& g = outc.node()->grad;
      if (g.empty()) return;
      const double* gv = g.data();
      if (auto* ga = grad_sink(ac.handle())) {
        // da = g . b^T
        const double* bv = bc.value().data();
        double* gad = ga->data();
#pragma omp parallel for schedule(static) if (m * k * p > 65536)
        for (int64_t i = 0; i < m; ++i) {
          const double* grow = gv + i * p;
          double* garow = gad + i * k;
          for (int64_t kk = 0; kk < k; ++kk) {
            const double* brow = bv + kk * p;
            double acc = 0.0;
            for (int64_t j = 0; j < p; ++j) acc += grow[j] * brow[j];
            garow[kk] += acc;
          }
        }
      }
      if (auto* gb = grad_sink(bc.handle())) {
        // db = a^T . g
        const double* av = ac.value().data();
        double* gbd = gb->data();
        for (int64_t i = 0; i < m; ++i) {
          const double* arow = av + i * k;
          const double* grow = gv + i * p;
          for (int64_t kk = 0; kk < k; ++kk) {
            const double aik = arow[kk];
            double* gbrow = gbd + kk * p;
            for (int64_t j = 0; j < p; ++j) gbrow[j] += aik * grow[j];
          }
        }
      }
    });
    mark_output(out);
  }
  return out;
}

// ---------------------------------------------------------------------------
// concat

Tensor concat(const std::vector<Tensor>& ts, int axis) {
  if (ts.empty()) throw std::invalid_argument("concat of zero tensors");
  const Shape& s0 = ts[0].shape();
  const int rank = static_cast<int>(s0.size());
  if (axis < 0 || axis >= rank) throw std::invalid_argument("concat axis out of range");
  int64_t axis_total = 0;
  for (const Tensor& t : ts) {
    if (t.rank() != rank) {
      throw std::invalid_argument("concat rank mismatch: " + shape_str(s0) + " vs " +
                                  shape_str(t.shape()));
    }
    for (int i = 0; i < rank; ++i) {
      if (i != axis && t.shape()[i] != s0[i]) {
        throw std::invalid_argument("concat shape mismatch off-axis: " + shape_str(s0) + " vs " +
                                    shape_str(t.shape()));
      }
    }
    axis_total += t.extent(axis);
  }
  Shape os = s0;
  os[axis] = axis_total;
  Tensor out(os);

  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s0[i];
  for (int i = axis + 1; i < rank; ++i) inner *= s0[i];

  auto& ov = out.value();
  const int64_t out_row = axis_total * inner;
  int64_t offset = 0;  // in units of inner, along the axis
  std::vector<int64_t> offsets(ts.size());
  for (std::size_t ti = 0; ti < ts.size(); ++ti) {
    offsets[ti] = offset;
    const auto& tv = ts[ti].value();
    const int64_t ax = ts[ti].extent(axis);
    for (int64_t o = 0; o < outer; ++o) {
      std::copy(tv.begin() + o * ax * inner, tv.begin() + (o + 1) * ax * inner,
                ov.begin() + o * out_row + offset * inner);
    }
    offset += ax;
  }

  bool needs = false;
  for (const Tensor& t : ts) needs = needs || t.requires_grad();
  if (g_active_tape && needs) {
    std::vector<Tensor> tc = ts;
    Tensor outc = out;
    g_active_tape->record([tc, outc, offsets, outer, inner, out_row, axis]() {
      const auto& g = outc.node()->grad;
      if (g.empty()) return;
      for (std::size_t ti = 0; ti < tc.size(); ++ti) {
        auto* gt = grad_sink(tc[ti].handle());
        if (!gt) continue;
        const int64_t ax = tc[ti].extent(static_cast<int>(axis));
        for (int64_t o = 0; o < outer; ++o) {
          const double* src = g.data() + o * out_row + offsets[ti] * inner;
          double* dst = gt->data() + o * ax * inner;
          for (int64_t i = 0; i < ax * inner; ++i) dst[i] += src[i];
        }
      }
    });
    mark_output(out);
  }
  return out;
}

// ---------------------------------------------------------------------------
// reductions

namespace {

struct AxisPlan {
  int64_t outer, extent, inner;
  Shape out_shape;
};

AxisPlan plan_axis(const Tensor& t, int axis, const char* name) {
  if (axis < 0 || axis >= t.rank()) {
    throw std::invalid_argument(std::string(name) + ": axis out of range for " +
                                shape_str(t.shape()));
  }
  AxisPlan p{1, t.extent(axis), 1, {}};
  for (int i = 0; i < axis; ++i) p.outer *= t.extent(i);
  for (int i = axis + 1; i < t.rank(); ++i) p.inner *= t.extent(i);
  for (int i = 0; i < t.rank(); ++i) {
    if (i != axis) p.out_shape.push_back(t.extent(i));
  }
  return p;
}

Tensor reduce_sum_impl(const Tensor& t, int axis, bool mean) {
  AxisPlan p = plan_axis(t, axis, mean ? "mean" : "sum");
  if (mean && p.extent == 0) throw std::invalid_argument("mean over empty axis");
  Tensor out(p.out_shape);
  const auto& tv = t.value();
  auto& ov = out.value();
  const double scale = mean ? 1.0 / static_cast<double>(p.extent) : 1.0;
  for (int64_t o = 0; o < p.outer; ++o) {
    for (int64_t k = 0; k < p.extent; ++k) {
      const double* src = tv.data() + (o * p.extent + k) * p.inner;
      double* dst = ov.data() + o * p.inner;
      for (int64_t i = 0; i < p.inner; ++i) dst[i] += src[i];
    }
  }
  if (mean) {
    for (auto& v : ov) v *= scale;
  }
  if (track(t)) {
    Tensor tc = t, outc = out;
    g_active_tape->record([tc, outc, p, scale]() {
      const auto& g = outc.node()->grad;
      if (g.empty()) return;
      auto* gt = grad_sink(tc.handle());
      if (!gt) return;
      for (int64_t o = 0; o < p.outer; ++o) {
        const double* src = g.data() + o * p.inner;
        for (int64_t k = 0; k < p.extent; ++k) {
          double* dst = gt->data() + (o * p.extent + k) * p.inner;
          for (int64_t i = 0; i < p.inner; ++i) dst[i] += src[i] * scale;
        }
      }
    });
    mark_output(out);
  }
  return out;
}

}  // namespace

Tensor reduce_sum(const Tensor& t, int axis) { return reduce_sum_impl(t, axis, false); }
Tensor reduce_mean(const Tensor& t, int axis) { return reduce_sum_impl(t, axis, true); }

Tensor reduce_max(const Tensor& t, int axis) {
  AxisPlan p = plan_axis(t, axis, "max");
  if (p.extent == 0) throw std::invalid_argument("max over empty axis");
  Tensor out(p.out_shape);
  auto argmax = std::make_shared<std::vector<int64_t>>(out.numel(), 0);
  const auto& tv = t.value();
  auto& ov = out.value();
  for (int64_t o = 0; o < p.outer; ++o) {
    for (int64_t i = 0; i < p.inner; ++i) {
      double best = tv[(o * p.extent) * p.inner + i];
      int64_t bk = 0;
      for (int64_t k = 1; k < p.extent; ++k) {
        const double v = tv[(o * p.extent + k) * p.inner + i];
        if (v > best) {  // strict: ties keep the lowest index
          best = v;
          bk = k;
        }
      }
      ov[o * p.inner + i] = best;
      (*argmax)[o * p.inner + i] = bk;
    }
  }
  if (track(t)) {
    Tensor tc = t, outc = out;
    g_active_tape->record([tc, outc, p, argmax]() {
      const auto& g = outc.node()->grad;
      if (g.empty()) return;
      auto* gt = grad_sink(tc.handle());
      if (!gt) return;
      for (int64_t o = 0; o < p.outer; ++o) {
        for (int64_t i = 0; i < p.inner; ++i) {
          const int64_t k = (*argmax)[o * p.inner + i];
          (*gt)[(o * p.extent + k) * p.inner + i] += g[o * p.inner + i];
        }
      }
    });
    mark_output(out);
  }
  return out;
}

Tensor sum_all(const Tensor& t) {
  Tensor out(Shape{});
  double acc = 0.0;
  for (double v : t.value()) acc += v;
  out.value()[0] = acc;
  if (track(t)) {
    Tensor tc = t, outc = out;
    g_active_tape->record([tc, outc]() {
      const auto& g = outc.node()->grad;
      if (g.empty()) return;
      auto* gt = grad_sink(tc.handle());
      if (!gt) return;
      for (auto& v : *gt) v += g[0];
    });
    mark_output(out);
  }
  return out;
}

Tensor mean_all(const Tensor& t) {
  if (t.numel() == 0) throw std::invalid_argument("mean of empty tensor");
  return mul_scalar(sum_all(t), 1.0 / static_cast<double>(t.numel()));
}

Tensor reshape(const Tensor& t, Shape shape) {
  if (shape_numel(shape) != t.numel()) {
    throw std::invalid_argument("reshape " + shape_str(t.shape()) + " -> " + shape_str(shape) +
                                " changes element count");
  }
  Tensor out = Tensor::from_data(std::move(shape), t.value());
  if (track(t)) {
    Tensor tc = t, outc = out;
    g_active_tape->record([tc, outc]() {
      const auto& g = outc.node()->grad;
      if (g.empty()) return;
      auto* gt = grad_sink(tc.handle());
      if (!gt) return;
      for (std::size_t i = 0; i < g.size(); ++i) (*gt)[i] += g[i];
    });
    mark_output(out);
  }
  return out;
}

// ---------------------------------------------------------------------------
// row-indexed ops

namespace {

int64_t row_block(const Tensor& t, const char* name) {
  if (t.rank() < 1) throw std::invalid_argument(std::string(name) + ": rank-0 tensor has no rows");
  return t.extent(0) == 0 ? 0 : t.numel() / t.extent(0);
}

}  // namespace

Tensor gather_rows(const Tensor& t, const std::vector<int32_t>& idx) {
  const int64_t block = row_block(t, "gather_rows");
  const int64_t rows = t.extent(0);
  Shape os = t.shape();
  os[0] = static_cast<int64_t>(idx.size());
  Tensor out(os);
  const auto& tv = t.value();
  auto& ov = out.value();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const int32_t r = idx[i];
    if (r < 0 || r >= rows) throw std::invalid_argument("gather_rows index out of range");
    std::copy(tv.begin() + r * block, tv.begin() + (r + 1) * block, ov.begin() + i * block);
  }
  if (track(t)) {
    Tensor tc = t, outc = out;
    auto idxc = std::make_shared<std::vector<int32_t>>(idx);
    g_active_tape->record([tc, outc, idxc, block]() {
      const auto& g = outc.node()->grad;
      if (g.empty()) return;
      auto* gt = grad_sink(tc.handle());
      if (!gt) return;
      for (std::size_t i = 0; i < idxc->size(); ++i) {
        const double* src = g.data() + i * block;
        double* dst = gt->data() + (*idxc)[i] * block;
        for (int64_t j = 0; j < block; ++j) dst[j] += src[j];
      }
    });
    mark_output(out);
  }
  return out;
}

Tensor scatter_add_rows(const Tensor& t, const std::vector<int32_t>& idx, int64_t n_rows) {
  const int64_t block = row_block(t, "scatter_add_rows");
  if (t.extent(0) != static_cast<int64_t>(idx.size())) {
    throw std::invalid_argument("scatter_add_rows: index count does not match rows");
  }
  Shape os = t.shape();
  os[0] = n_rows;
  Tensor out(os);
  const auto& tv = t.value();
  auto& ov = out.value();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const int32_t r = idx[i];
    if (r < 0 || r >= n_rows) throw std::invalid_argument("scatter_add_rows index out of range");
    const double* src = tv.data() + i * block;
    double* dst = ov.data() + r * block;
    for (int64_t j = 0; j < block; ++j) dst[j] += src[j];
  }
  if (track(t)) {
    Tensor tc = t, outc = out;
    auto idxc = std::make_shared<std::vector<int32_t>>(idx);
    g_active_tape->record([tc, outc, idxc, block]() {
      const auto& g = outc.node()->grad;
      if (g.empty()) return;
      auto* gt = grad_sink(tc.handle());
      if (!gt) return;
      for (std::size_t i = 0; i < idxc->size(); ++i) {
        const double* src = g.data() + (*idxc)[i] * block;
        double* dst = gt->data() + i * block;
        for (int64_t j = 0; j < block; ++j) dst[j] += src[j];
      }
    });
    mark_output(out);
  }
  return out;
}

Tensor scale_rows(const Tensor& t, const Tensor& s) {
  const int64_t block = row_block(t, "scale_rows");
  if (s.rank() != 1 || s.extent(0) != t.extent(0)) {
    throw std::invalid_argument("scale_rows: scale shape " + shape_str(s.shape()) +
                                " does not match rows of " + shape_str(t.shape()));
  }
  const int64_t rows = t.extent(0);
  Tensor out(t.shape());
  const auto& tv = t.value();
  const auto& sv = s.value();
  auto& ov = out.value();
  for (int64_t r = 0; r < rows; ++r) {
    const double c = sv[r];
    for (int64_t j = 0; j < block; ++j) ov[r * block + j] = tv[r * block + j] * c;
  }
  if (g_active_tape && (t.requires_grad() || s.requires_grad())) {
    Tensor tc = t, sc = s, outc = out;
    g_active_tape->record([tc, sc, outc, rows, block]() {
      const auto& g = outc.node()->grad;
      if (g.empty()) return;
      auto* gt = grad_sink(tc.handle());
      auto* gs = grad_sink(sc.handle());
      const auto& tv2 = tc.value();
      const auto& sv2 = sc.value();
      for (int64_t r = 0; r < rows; ++r) {
        if (gt) {
          const double c = sv2[r];
          for (int64_t j = 0; j < block; ++j) (*gt)[r * block + j] += g[r * block + j] * c;
        }
        if (gs) {
          double acc = 0.0;
          for (int64_t j = 0; j < block; ++j) acc += g[r * block + j] * tv2[r * block + j];
          (*gs)[r] += acc;
        }
      }
    });
    mark_output(out);
  }
  return out;
}

Tensor row_outer(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(0) != b.extent(0)) {
    throw std::invalid_argument("row_outer needs [RxP],[RxQ], got " + shape_str(a.shape()) +
                                " and " + shape_str(b.shape()));
  }
  const int64_t rows = a.extent(0), np = a.extent(1), nq = b.extent(1);
  Tensor out(Shape{rows, np, nq});
  const auto& av = a.value();
  const auto& bv = b.value();
  auto& ov = out.value();
  for (int64_t r = 0; r < rows; ++r) {
    const double* arow = av.data() + r * np;
    const double* brow = bv.data() + r * nq;
    double* orow = ov.data() + r * np * nq;
    for (int64_t i = 0; i < np; ++i) {
      for (int64_t j = 0; j < nq; ++j) orow[i * nq + j] = arow[i] * brow[j];
    }
  }
  if (g_active_tape && (a.requires_grad() || b.requires_grad())) {
    Tensor ac = a, bc = b, outc = out;
    g_active_tape->record([ac, bc, outc, rows, np, nq]() {
      const auto& g = outc.node()->grad;
      if (g.empty()) return;
      auto* ga = grad_sink(ac.handle());
      auto* gb = grad_sink(bc.handle());
      const auto& av2 = ac.value();
      const auto& bv2 = bc.value();
      for (int64_t r = 0; r < rows; ++r) {
        const double* grow = g.data() + r * np * nq;
        for (int64_t i = 0; i < np; ++i) {
          for (int64_t j = 0; j < nq; ++j) {
            const double gij = grow[i * nq + j];
            if (ga) (*ga)[r * np + i] += gij * bv2[r * nq + j];
            if (gb) (*gb)[r * nq + j] += gij * av2[r * np + i];
          }
        }
      }
    });
    mark_output(out);
  }
  return out;
}

Tensor contract_axis1(const Tensor& t, const Tensor& w) {
  if (t.rank() != 3 || w.rank() != 1 || w.extent(0) != t.extent(1)) {
    throw std::invalid_argument("contract_axis1 needs [AxBxC],[B], got " + shape_str(t.shape()) +
                                " and " + shape_str(w.shape()));
  }
  const int64_t na = t.extent(0), nb = t.extent(1), nc = t.extent(2);
  Tensor out(Shape{na, nc});
  const auto& tv = t.value();
  const auto& wv = w.value();
  auto& ov = out.value();
  for (int64_t a = 0; a < na; ++a) {
    double* orow = ov.data() + a * nc;
    for (int64_t b = 0; b < nb; ++b) {
      const double c = wv[b];
      const double* trow = tv.data() + (a * nb + b) * nc;
      for (int64_t k = 0; k < nc; ++k) orow[k] += c * trow[k];
    }
  }
  if (g_active_tape && (t.requires_grad() || w.requires_grad())) {
    Tensor tc = t, wc = w, outc = out;
    g_active_tape->record([tc, wc, outc, na, nb, nc]() {
      const auto& g = outc.node()->grad;
      if (g.empty()) return;
      auto* gt = grad_sink(tc.handle());
      auto* gw = grad_sink(wc.handle());
      const auto& tv2 = tc.value();
      const auto& wv2 = wc.value();
      for (int64_t a = 0; a < na; ++a) {
        const double* grow = g.data() + a * nc;
        for (int64_t b = 0; b < nb; ++b) {
          const double* trow = tv2.data() + (a * nb + b) * nc;
          if (gt) {
            double* gtrow = gt->data() + (a * nb + b) * nc;
            const double c = wv2[b];
            for (int64_t k = 0; k < nc; ++k) gtrow[k] += grow[k] * c;
          }
          if (gw) {
            double acc = 0.0;
            for (int64_t k = 0; k < nc; ++k) acc += grow[k] * trow[k];
            (*gw)[b] += acc;
          }
        }
      }
    });
    mark_output(out);
  }
  return out;
}

Tensor repeat_cols(const Tensor& t, int64_t rep) {
  if (t.rank() != 2 || rep < 1) {
    throw std::invalid_argument("repeat_cols needs a matrix and rep >= 1");
  }
  const int64_t rows = t.extent(0), cols = t.extent(1);
  Tensor out(Shape{rows, cols * rep});
  const auto& tv = t.value();
  auto& ov = out.value();
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t h = 0; h < cols; ++h) {
      const double v = tv[r * cols + h];
      double* dst = ov.data() + r * cols * rep + h * rep;
      for (int64_t j = 0; j < rep; ++j) dst[j] = v;
    }
  }
  if (track(t)) {
    Tensor tc = t, outc = out;
    g_active_tape->record([tc, outc, rows, cols, rep]() {
      const auto& g = outc.node()->grad;
      if (g.empty()) return;
      auto* gt = grad_sink(tc.handle());
      if (!gt) return;
      for (int64_t r = 0; r < rows; ++r) {
        for (int64_t h = 0; h < cols; ++h) {
          const double* src = g.data() + r * cols * rep + h * rep;
          double acc = 0.0;
          for (int64_t j = 0; j < rep; ++j) acc += src[j];
          (*gt)[r * cols + h] += acc;
        }
      }
    });
    mark_output(out);
  }
  return out;
}

// ---------------------------------------------------------------------------
// utilities

bool all_finite(const Tensor& t) {
  for (double v : t.value()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void require_finite(const Tensor& t, const std::string& what) {
  if (!all_finite(t)) throw std::runtime_error("non-finite values in " + what);
}

double uniform_sample(std::mt19937_64& rng, double lo, double hi) {
  // 53-bit mantissa draw in [0, 1)
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

double normal_sample(std::mt19937_64& rng) {
  // Box-Muller; u1 in (0, 1] so the log stays finite.
  const double u1 = (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Tensor randn(Shape shape, std::mt19937_64& rng, double stddev) {
  Tensor t(std::move(shape));
  for (auto& v : t.value()) v = stddev * normal_sample(rng);
  return t;
}

Tensor rand_uniform(Shape shape, std::mt19937_64& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  for (auto& v : t.value()) v = uniform_sample(rng, lo, hi);
  return t;
}

}  // namespace sake
