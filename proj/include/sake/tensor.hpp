#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace sake {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorData {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a gradient contribution arrives
  bool requires_grad = false;
};

/// Dense row-major 64-bit tensor participating in a reverse-mode tape.
/// Copies are shallow handles to the same buffer.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  static Tensor scalar(double v);
  static Tensor from_data(Shape shape, std::vector<double> data);

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  int64_t rank() const { return static_cast<int64_t>(d_->shape.size()); }
  int64_t numel() const { return static_cast<int64_t>(d_->value.size()); }
  int64_t extent(int axis) const { return d_->shape[axis]; }

  std::vector<double>& value() { return d_->value; }
  const std::vector<double>& value() const { return d_->value; }
  double item() const;

  bool requires_grad() const { return d_->requires_grad; }
  Tensor& set_requires_grad(bool b);

  bool has_grad() const { return !d_->grad.empty(); }
  /// Gradient buffer, allocated as zeros on first access.
  std::vector<double>& grad();
  void zero_grad();

  TensorData* node() const { return d_.get(); }
  std::shared_ptr<TensorData> handle() const { return d_; }

 private:
  std::shared_ptr<TensorData> d_;
};

/// Ordered record of operations; backward walks it once in reverse and
/// clears it. Confined to one execution context.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::function<void()> back) { ops_.push_back(std::move(back)); }
  std::size_t size() const { return ops_.size(); }
  void clear() { ops_.clear(); }

  /// Reverse sweep from a scalar loss. Seeds d(loss)=1, consumes the tape.
  void backward(const Tensor& loss);

  /// RAII binding of this tape as the recording target for the current thread.
  class Scope {
   public:
    explicit Scope(Tape& t);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };
  static Tape* active();

 private:
  std::vector<std::function<void()>> ops_;
};

/// Backward through the thread's active tape; throws if none is bound.
void backward(const Tensor& loss);

// Elementwise binary ops. Shapes must match exactly, or one operand must be
// a scalar or a trailing-axes suffix of the other (broadcast over leading
// axes only).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);

// Elementwise unary ops.
Tensor silu(const Tensor& x);
Tensor celu(const Tensor& x);  // alpha = 1
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor square(const Tensor& x);
Tensor sqrt(const Tensor& x);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor concat(const std::vector<Tensor>& ts, int axis);

Tensor reduce_sum(const Tensor& t, int axis);
Tensor reduce_mean(const Tensor& t, int axis);
/// Max over an axis; gradient routes to the first argmax.
Tensor reduce_max(const Tensor& t, int axis);
Tensor sum_all(const Tensor& t);
Tensor mean_all(const Tensor& t);

Tensor reshape(const Tensor& t, Shape shape);

/// out[i, ...] = t[idx[i], ...]
Tensor gather_rows(const Tensor& t, const std::vector<int32_t>& idx);
/// out[idx[i], ...] += t[i, ...]; rows processed in ascending i (deterministic).
Tensor scatter_add_rows(const Tensor& t, const std::vector<int32_t>& idx,
                        int64_t n_rows);
/// out[r, ...] = t[r, ...] * s[r]
Tensor scale_rows(const Tensor& t, const Tensor& s);
/// out[r, p, q] = a[r, p] * b[r, q]
Tensor row_outer(const Tensor& a, const Tensor& b);
/// out[i, k] = sum_j t[i, j, k] * w[j]
Tensor contract_axis1(const Tensor& t, const Tensor& w);
/// out[r, h*rep + j] = t[r, h] for j in [0, rep)
Tensor repeat_cols(const Tensor& t, int64_t rep);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

bool all_finite(const Tensor& t);
/// Throws std::runtime_error naming `what` if any entry is NaN/inf.
void require_finite(const Tensor& t, const std::string& what);

// Deterministic sampling built on mt19937_64 (std distributions are not
// portable across standard libraries).
double uniform_sample(std::mt19937_64& rng, double lo, double hi);
double normal_sample(std::mt19937_64& rng);
Tensor randn(Shape shape, std::mt19937_64& rng, double stddev = 1.0);
Tensor rand_uniform(Shape shape, std::mt19937_64& rng, double lo, double hi);

}  // namespace sake
