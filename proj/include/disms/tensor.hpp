#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "disms/error.hpp"

namespace disms {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

class Tape;

namespace detail {
struct TensorData {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // allocated iff tracked
  bool tracked = false;
};
}  // namespace detail

// Row-major 64-bit float tensor. Copies are shallow (shared storage);
// tracked tensors carry a same-shape gradient accumulator.
class Tensor {
 public:
  Tensor() : d_(std::make_shared<detail::TensorData>()) {}

  static Tensor constant(Shape shape, std::vector<double> values) {
    if (shape_numel(shape) != values.size()) {
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(shape));
    }
    Tensor t;
    t.d_->shape = std::move(shape);
    t.d_->values = std::move(values);
    return t;
  }

  static Tensor zeros(Shape shape) {
    std::vector<double> v(shape_numel(shape), 0.0);
    return constant(std::move(shape), std::move(v));
  }

  static Tensor scalar(double v) { return constant({1}, {v}); }

  const Shape& shape() const { return d_->shape; }
  std::size_t size() const { return d_->values.size(); }
  std::size_t rank() const { return d_->shape.size(); }
  bool tracked() const { return d_->tracked; }

  // Shallow const, like the shared storage underneath: a const Tensor still
  // exposes mutable views of its buffers.
  std::vector<double>& values() const { return d_->values; }

  std::vector<double>& grad() const {
    require_tracked();
    return d_->grad;
  }

  double item() const {
    if (size() != 1) {
      throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    }
    return d_->values[0];
  }

  double at(std::size_t i) const { return d_->values[i]; }
  double at(std::size_t r, std::size_t c) const {
    return d_->values[r * d_->shape[1] + c];
  }

  void zero_grad() {
    if (d_->tracked) std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
  }

 private:
  friend class Tape;
  friend Tape* op_tape(const Tensor&);

  void require_tracked() const {
    if (!d_->tracked) throw StateError("tensor is not gradient-tracked");
  }

  std::shared_ptr<detail::TensorData> d_;
  Tape* tape_ = nullptr;
};

// Ordered record of executed operations. Ops append their backward rule in
// execution order, which is already topological; backward replays the
// record in reverse, visiting each node exactly once.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Tracked leaf (a learnable parameter or any input needing a gradient).
  Tensor leaf(Shape shape, std::vector<double> values) {
    Tensor t = Tensor::constant(std::move(shape), std::move(values));
    t.d_->tracked = true;
    t.d_->grad.assign(t.size(), 0.0);
    t.tape_ = this;
    return t;
  }

  void push(std::function<void()> backward) {
    nodes_.push_back(std::move(backward));
  }

  std::size_t num_ops() const { return nodes_.size(); }

  // Reverse sweep from a scalar loss. Gradients accumulate additively into
  // every tracked ancestor; repeated backward without reset is an error.
  void backward(const Tensor& loss) {
    if (loss.size() != 1) {
      throw ShapeError("backward requires a scalar loss, got shape " +
                       shape_str(loss.shape()));
    }
    if (!loss.tracked() || loss.tape_ != this) {
      throw StateError("loss is not attached to this tape");
    }
    if (consumed_) {
      throw StateError("tape already consumed by backward; reset first");
    }
    consumed_ = true;
    loss.d_->grad[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

  // Drop recorded ops so the next forward pass can reuse the tape.
  // Leaves created on this tape stay valid and keep their gradients.
  void reset() {
    nodes_.clear();
    consumed_ = false;
  }

 private:
  std::vector<std::function<void()>> nodes_;
  bool consumed_ = false;
};

inline Tape* op_tape(const Tensor& t) { return t.tracked() ? t.tape_ : nullptr; }

namespace detail {

inline Tape* joint_tape(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = nullptr;
  for (const Tensor* t : inputs) {
    Tape* tt = op_tape(*t);
    if (!tt) continue;
    if (tape && tape != tt) throw StateError("inputs live on different tapes");
    tape = tt;
  }
  return tape;
}

inline void check_same_shape(const Tensor& a, const Tensor& b,
                             const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

// Emit the op result; when `tape` is set the caller still has to push the
// backward rule (it needs the output tensor in scope).
inline Tensor emit(Tape* tape, Shape shape, std::vector<double> values) {
  if (!tape) return Tensor::constant(std::move(shape), std::move(values));
  return tape->leaf(std::move(shape), std::move(values));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise arithmetic
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "add");
  Tape* tape = detail::joint_tape({&a, &b});
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  Tensor y = detail::emit(tape, a.shape(), std::move(out));
  if (tape) {
    tape->push([a, b, y]() mutable {
      const auto& g = y.grad();
      if (a.tracked())
        for (std::size_t i = 0; i < g.size(); ++i) a.grad()[i] += g[i];
      if (b.tracked())
        for (std::size_t i = 0; i < g.size(); ++i) b.grad()[i] += g[i];
    });
  }
  return y;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "sub");
  Tape* tape = detail::joint_tape({&a, &b});
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  Tensor y = detail::emit(tape, a.shape(), std::move(out));
  if (tape) {
    tape->push([a, b, y]() mutable {
      const auto& g = y.grad();
      if (a.tracked())
        for (std::size_t i = 0; i < g.size(); ++i) a.grad()[i] += g[i];
      if (b.tracked())
        for (std::size_t i = 0; i < g.size(); ++i) b.grad()[i] -= g[i];
    });
  }
  return y;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mul");
  Tape* tape = detail::joint_tape({&a, &b});
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  Tensor y = detail::emit(tape, a.shape(), std::move(out));
  if (tape) {
    tape->push([a, b, y]() mutable {
      const auto& g = y.grad();
      if (a.tracked())
        for (std::size_t i = 0; i < g.size(); ++i) a.grad()[i] += g[i] * b.at(i);
      if (b.tracked())
        for (std::size_t i = 0; i < g.size(); ++i) b.grad()[i] += g[i] * a.at(i);
    });
  }
  return y;
}

// Multiply by a compile-time-known constant.
inline Tensor scale(const Tensor& a, double c) {
  Tape* tape = op_tape(a);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * c;
  Tensor y = detail::emit(tape, a.shape(), std::move(out));
  if (tape) {
    tape->push([a, y, c]() mutable {
      const auto& g = y.grad();
      for (std::size_t i = 0; i < g.size(); ++i) a.grad()[i] += g[i] * c;
    });
  }
  return y;
}

// Broadcast-multiply by a one-element tensor (possibly learnable).
inline Tensor broadcast_mul(const Tensor& a, const Tensor& s) {
  if (s.size() != 1) {
    throw ShapeError("broadcast_mul: scalar operand has shape " +
                     shape_str(s.shape()));
  }
  Tape* tape = detail::joint_tape({&a, &s});
  const double c = s.at(0);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * c;
  Tensor y = detail::emit(tape, a.shape(), std::move(out));
  if (tape) {
    tape->push([a, s, y, c]() mutable {
      const auto& g = y.grad();
      if (a.tracked())
        for (std::size_t i = 0; i < g.size(); ++i) a.grad()[i] += g[i] * c;
      if (s.tracked()) {
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * a.at(i);
        s.grad()[0] += acc;
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

inline Tensor sigmoid(const Tensor& a) {
  Tape* tape = op_tape(a);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a.at(i);
    // evaluate on the side that keeps exp() from overflowing
    out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                      : std::exp(x) / (1.0 + std::exp(x));
  }
  Tensor y = detail::emit(tape, a.shape(), std::move(out));
  if (tape) {
    tape->push([a, y]() mutable {
      const auto& g = y.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = y.at(i);
        a.grad()[i] += g[i] * v * (1.0 - v);
      }
    });
  }
  return y;
}

inline Tensor tanh_op(const Tensor& a) {
  Tape* tape = op_tape(a);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.at(i));
  Tensor y = detail::emit(tape, a.shape(), std::move(out));
  if (tape) {
    tape->push([a, y]() mutable {
      const auto& g = y.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = y.at(i);
        a.grad()[i] += g[i] * (1.0 - v * v);
      }
    });
  }
  return y;
}

inline Tensor relu(const Tensor& a) {
  Tape* tape = op_tape(a);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.at(i) > 0.0 ? a.at(i) : 0.0;
  Tensor y = detail::emit(tape, a.shape(), std::move(out));
  if (tape) {
    tape->push([a, y]() mutable {
      const auto& g = y.grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (a.at(i) > 0.0) a.grad()[i] += g[i];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

namespace detail {
// C[m x n] += A[m x k] * B[k x n], ikj order for cache friendliness.
inline void gemm_acc(const double* a, const double* b, double* c,
                     std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}
// C[m x n] += A[k x m]^T * B[k x n]
inline void gemm_at_b_acc(const double* a, const double* b, double* c,
                          std::size_t k, std::size_t m, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}
// C[m x k] += A[m x n] * B[k x n]^T
inline void gemm_a_bt_acc(const double* a, const double* b, double* c,
                          std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * n;
    double* crow = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[p] += acc;
    }
  }
}
}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tape* tape = detail::joint_tape({&a, &b});
  std::vector<double> out(m * n, 0.0);
  detail::gemm_acc(a.values().data(), b.values().data(), out.data(), m, k, n);
  Tensor y = detail::emit(tape, {m, n}, std::move(out));
  if (tape) {
    tape->push([a, b, y, m, k, n]() mutable {
      const double* g = y.grad().data();
      if (a.tracked())  // dL/da = g * b^T
        detail::gemm_a_bt_acc(g, b.values().data(), a.grad().data(), m, n, k);
      if (b.tracked())  // dL/db = a^T * g
        detail::gemm_at_b_acc(a.values().data(), g, b.grad().data(), m, k, n);
    });
  }
  return y;
}

inline Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) {
    throw ShapeError("transpose expects rank 2, got " + shape_str(a.shape()));
  }
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tape* tape = op_tape(a);
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.at(i, j);
  Tensor y = detail::emit(tape, {n, m}, std::move(out));
  if (tape) {
    tape->push([a, y, m, n]() mutable {
      const auto& g = y.grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
          a.grad()[i * n + j] += g[j * m + i];
    });
  }
  return y;
}

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                     shape_str(shape));
  }
  Tape* tape = op_tape(a);
  Tensor y = detail::emit(tape, std::move(shape), a.values());
  if (tape) {
    tape->push([a, y]() mutable {
      const auto& g = y.grad();
      for (std::size_t i = 0; i < g.size(); ++i) a.grad()[i] += g[i];
    });
  }
  return y;
}

// Add a length-n row vector to every row of an [m x n] matrix.
inline Tensor add_rows(const Tensor& mat, const Tensor& row) {
  if (mat.rank() != 2 || row.size() != mat.shape()[1]) {
    throw ShapeError("add_rows: matrix " + shape_str(mat.shape()) +
                     " vs row " + shape_str(row.shape()));
  }
  const std::size_t m = mat.shape()[0], n = mat.shape()[1];
  Tape* tape = detail::joint_tape({&mat, &row});
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = mat.at(i, j) + row.at(j);
  Tensor y = detail::emit(tape, mat.shape(), std::move(out));
  if (tape) {
    tape->push([mat, row, y, m, n]() mutable {
      const auto& g = y.grad();
      if (mat.tracked())
        for (std::size_t i = 0; i < g.size(); ++i) mat.grad()[i] += g[i];
      if (row.tracked())
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) row.grad()[j] += g[i * n + j];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// slicing / concatenation
// ---------------------------------------------------------------------------

// Contiguous row range [r0, r1) of a rank-2 tensor.
inline Tensor row_slice(const Tensor& a, std::size_t r0, std::size_t r1) {
  if (a.rank() != 2 || r1 > a.shape()[0] || r0 >= r1) {
    throw ShapeError("row_slice: invalid range on " + shape_str(a.shape()));
  }
  const std::size_t n = a.shape()[1];
  Tape* tape = op_tape(a);
  std::vector<double> out(a.values().begin() + r0 * n,
                          a.values().begin() + r1 * n);
  Tensor y = detail::emit(tape, {r1 - r0, n}, std::move(out));
  if (tape) {
    tape->push([a, y, r0, n]() mutable {
      const auto& g = y.grad();
      for (std::size_t i = 0; i < g.size(); ++i) a.grad()[r0 * n + i] += g[i];
    });
  }
  return y;
}

// Single element as a one-element tensor (used for beta_n lookups).
inline Tensor gather_scalar(const Tensor& a, std::size_t i) {
  if (i >= a.size()) {
    throw ShapeError("gather_scalar: index " + std::to_string(i) +
                     " out of range for " + shape_str(a.shape()));
  }
  Tape* tape = op_tape(a);
  Tensor y = detail::emit(tape, {1}, {a.at(i)});
  if (tape) {
    tape->push([a, y, i]() mutable { a.grad()[i] += y.grad()[0]; });
  }
  return y;
}

// Concatenate rank-2 tensors along columns (axis 1); rows must agree.
inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: empty input");
  const std::size_t m = parts[0].shape()[0];
  std::size_t total = 0;
  Tape* tape = nullptr;
  for (const Tensor& p : parts) {
    if (p.rank() != 2 || p.shape()[0] != m) {
      throw ShapeError("concat_cols: row mismatch at " + shape_str(p.shape()));
    }
    total += p.shape()[1];
    if (Tape* t = op_tape(p)) tape = t;
  }
  std::vector<double> out(m * total);
  std::size_t col = 0;
  for (const Tensor& p : parts) {
    const std::size_t n = p.shape()[1];
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        out[i * total + col + j] = p.at(i, j);
    col += n;
  }
  Tensor y = detail::emit(tape, {m, total}, std::move(out));
  if (tape) {
    std::vector<Tensor> captured = parts;
    tape->push([captured, y, m, total]() mutable {
      const auto& g = y.grad();
      std::size_t col = 0;
      for (Tensor& p : captured) {
        const std::size_t n = p.shape()[1];
        if (p.tracked())
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
              p.grad()[i * n + j] += g[i * total + col + j];
        col += n;
      }
    });
  }
  return y;
}

// Concatenate along axis 0 (rank-1 vectors or rank-2 matrices).
inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: empty input");
  const std::size_t rank = parts[0].rank();
  const std::size_t n = rank == 2 ? parts[0].shape()[1] : 1;
  std::size_t rows = 0;
  Tape* tape = nullptr;
  for (const Tensor& p : parts) {
    if (p.rank() != rank || (rank == 2 && p.shape()[1] != n)) {
      throw ShapeError("concat_rows: column mismatch at " +
                       shape_str(p.shape()));
    }
    rows += p.shape()[0];
    if (Tape* t = op_tape(p)) tape = t;
  }
  std::vector<double> out;
  out.reserve(rows * n);
  for (const Tensor& p : parts)
    out.insert(out.end(), p.values().begin(), p.values().end());
  Shape shape = rank == 2 ? Shape{rows, n} : Shape{rows};
  Tensor y = detail::emit(tape, std::move(shape), std::move(out));
  if (tape) {
    std::vector<Tensor> captured = parts;
    tape->push([captured, y]() mutable {
      const auto& g = y.grad();
      std::size_t off = 0;
      for (Tensor& p : captured) {
        if (p.tracked())
          for (std::size_t i = 0; i < p.size(); ++i) p.grad()[i] += g[off + i];
        off += p.size();
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& a) {
  Tape* tape = op_tape(a);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a.at(i);
  Tensor y = detail::emit(tape, {1}, {acc});
  if (tape) {
    tape->push([a, y]() mutable {
      const double g = y.grad()[0];
      for (std::size_t i = 0; i < a.size(); ++i) a.grad()[i] += g;
    });
  }
  return y;
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / a.size()); }

// Sum of a rank-2 tensor over one axis: axis 0 -> [cols], axis 1 -> [rows].
inline Tensor sum_axis(const Tensor& a, int axis) {
  if (a.rank() != 2 || (axis != 0 && axis != 1)) {
    throw ShapeError("sum_axis: need rank 2 and axis in {0,1}");
  }
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tape* tape = op_tape(a);
  if (axis == 0) {
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[j] += a.at(i, j);
    Tensor y = detail::emit(tape, {n}, std::move(out));
    if (tape) {
      tape->push([a, y, m, n]() mutable {
        const auto& g = y.grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) a.grad()[i * n + j] += g[j];
      });
    }
    return y;
  }
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += a.at(i, j);
  Tensor y = detail::emit(tape, {m}, std::move(out));
  if (tape) {
    tape->push([a, y, m, n]() mutable {
      const auto& g = y.grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) a.grad()[i * n + j] += g[i];
    });
  }
  return y;
}

inline Tensor mean_axis(const Tensor& a, int axis) {
  const double denom =
      axis == 0 ? static_cast<double>(a.shape()[0]) : static_cast<double>(a.shape()[1]);
  return scale(sum_axis(a, axis), 1.0 / denom);
}

// ---------------------------------------------------------------------------
// signal ops
// ---------------------------------------------------------------------------

// Non-overlapping window means over a rank-1 series; the trailing remainder
// shorter than the window is discarded (floor semantics).
inline Tensor avg_pool1d(const Tensor& x, std::size_t window) {
  if (x.rank() != 1) {
    throw ShapeError("avg_pool1d expects rank 1, got " + shape_str(x.shape()));
  }
  if (window < 1) throw ConfigError("avg_pool1d: window must be >= 1");
  const std::size_t t = x.shape()[0];
  if (t < window) {
    throw ShapeError("avg_pool1d: series length " + std::to_string(t) +
                     " shorter than window " + std::to_string(window) +
                     " would yield an empty output");
  }
  const std::size_t out_len = t / window;
  Tape* tape = op_tape(x);
  std::vector<double> out(out_len, 0.0);
  for (std::size_t i = 0; i < out_len; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < window; ++j) acc += x.at(i * window + j);
    out[i] = acc / static_cast<double>(window);
  }
  Tensor y = detail::emit(tape, {out_len}, std::move(out));
  if (tape) {
    tape->push([x, y, window, out_len]() mutable {
      const auto& g = y.grad();
      const double inv = 1.0 / static_cast<double>(window);
      for (std::size_t i = 0; i < out_len; ++i)
        for (std::size_t j = 0; j < window; ++j)
          x.grad()[i * window + j] += g[i] * inv;
    });
  }
  return y;
}

// Valid cross-correlation of a rank-1 series with C kernels of width k,
// plus per-channel bias. Output is [C x L], L = floor((T - k) / stride) + 1.
inline Tensor conv1d(const Tensor& x, const Tensor& kernels, const Tensor& bias,
                     std::size_t stride) {
  if (x.rank() != 1 || kernels.rank() != 2 || bias.rank() != 1) {
    throw ShapeError("conv1d: expected x[T], kernels[CxK], bias[C]");
  }
  const std::size_t t = x.shape()[0];
  const std::size_t c = kernels.shape()[0], k = kernels.shape()[1];
  if (bias.shape()[0] != c) {
    throw ShapeError("conv1d: bias " + shape_str(bias.shape()) +
                     " does not match kernel count " + std::to_string(c));
  }
  if (stride < 1) throw ConfigError("conv1d: stride must be >= 1");
  if (k > t) {
    throw ShapeError("conv1d: kernel width " + std::to_string(k) +
                     " exceeds series length " + std::to_string(t));
  }
  const std::size_t l = (t - k) / stride + 1;
  Tape* tape = detail::joint_tape({&x, &kernels, &bias});
  std::vector<double> out(c * l);
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t li = 0; li < l; ++li) {
      double acc = bias.at(ci);
      for (std::size_t j = 0; j < k; ++j)
        acc += kernels.at(ci, j) * x.at(li * stride + j);
      out[ci * l + li] = acc;
    }
  }
  Tensor y = detail::emit(tape, {c, l}, std::move(out));
  if (tape) {
    tape->push([x, kernels, bias, y, c, k, l, stride]() mutable {
      const auto& g = y.grad();
      for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t li = 0; li < l; ++li) {
          const double gv = g[ci * l + li];
          if (bias.tracked()) bias.grad()[ci] += gv;
          for (std::size_t j = 0; j < k; ++j) {
            if (kernels.tracked())
              kernels.grad()[ci * k + j] += gv * x.at(li * stride + j);
            if (x.tracked())
              x.grad()[li * stride + j] += gv * kernels.at(ci, j);
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// similarity and losses
// ---------------------------------------------------------------------------

inline constexpr double kCosineEps = 1e-8;

// Per-row cosine similarity of two [B x D] matrices -> [B].
// Norms are clamped from below by eps so zero vectors stay defined.
inline Tensor rowwise_cosine(const Tensor& a, const Tensor& b,
                             double eps = kCosineEps) {
  detail::check_same_shape(a, b, "rowwise_cosine");
  if (a.rank() != 2) {
    throw ShapeError("rowwise_cosine expects rank 2, got " +
                     shape_str(a.shape()));
  }
  const std::size_t rows = a.shape()[0], d = a.shape()[1];
  Tape* tape = detail::joint_tape({&a, &b});
  std::vector<double> out(rows);
  std::vector<double> na(rows), nb(rows), dots(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double dot = 0.0, sa = 0.0, sb = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double av = a.at(r, j), bv = b.at(r, j);
      dot += av * bv;
      sa += av * av;
      sb += bv * bv;
    }
    na[r] = std::sqrt(sa);
    nb[r] = std::sqrt(sb);
    dots[r] = dot;
    out[r] = dot / (std::max(na[r], eps) * std::max(nb[r], eps));
  }
  Tensor y = detail::emit(tape, {rows}, std::move(out));
  if (tape) {
    tape->push([a, b, y, na, nb, dots, rows, d, eps]() mutable {
      const auto& g = y.grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const double da = std::max(na[r], eps), db = std::max(nb[r], eps);
        const double inv = 1.0 / (da * db);
        const double cosv = dots[r] * inv;
        for (std::size_t j = 0; j < d; ++j) {
          const double av = a.at(r, j), bv = b.at(r, j);
          if (a.tracked()) {
            double dda = bv * inv;
            if (na[r] > eps) dda -= cosv * av / (na[r] * na[r]);
            a.grad()[r * d + j] += g[r] * dda;
          }
          if (b.tracked()) {
            double ddb = av * inv;
            if (nb[r] > eps) ddb -= cosv * bv / (nb[r] * nb[r]);
            b.grad()[r * d + j] += g[r] * ddb;
          }
        }
      }
    });
  }
  return y;
}

// Cosine similarity of two vectors as a scalar tensor.
inline Tensor cosine_similarity(const Tensor& a, const Tensor& b,
                                double eps = kCosineEps) {
  if (a.rank() != 1 || b.rank() != 1) {
    throw ShapeError("cosine_similarity expects rank-1 inputs");
  }
  Tensor am = reshape(a, {1, a.size()});
  Tensor bm = reshape(b, {1, b.size()});
  return reshape(rowwise_cosine(am, bm, eps), {1});
}

// Mean squared error against a constant target (scalar broadcast).
inline Tensor mse_to_const(const Tensor& a, double target) {
  Tape* tape = op_tape(a);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a.at(i) - target;
    acc += diff * diff;
  }
  const double n = static_cast<double>(a.size());
  Tensor y = detail::emit(tape, {1}, {acc / n});
  if (tape) {
    tape->push([a, y, target, n]() mutable {
      const double g = y.grad()[0];
      for (std::size_t i = 0; i < a.size(); ++i)
        a.grad()[i] += g * 2.0 * (a.at(i) - target) / n;
    });
  }
  return y;
}

// Mean squared error between two same-shape tensors.
inline Tensor mse(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mse");
  Tensor diff = sub(a, b);
  return mean(mul(diff, diff));
}

// Mean over the batch of -log softmax(logits)[label], stabilized by
// max-subtraction.
inline Tensor softmax_cross_entropy(const Tensor& logits,
                                    const std::vector<std::size_t>& labels) {
  if (logits.rank() != 2 || logits.shape()[0] != labels.size()) {
    throw ShapeError("softmax_cross_entropy: logits " +
                     shape_str(logits.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t batch = logits.shape()[0], k = logits.shape()[1];
  for (std::size_t b = 0; b < batch; ++b) {
    if (labels[b] >= k) {
      throw DataError("softmax_cross_entropy: label " +
                      std::to_string(labels[b]) + " at sample " +
                      std::to_string(b) + " outside [0, " + std::to_string(k) +
                      ")");
    }
  }
  Tape* tape = op_tape(logits);
  std::vector<double> probs(batch * k);
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    double mx = logits.at(b, 0);
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, logits.at(b, j));
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      probs[b * k + j] = std::exp(logits.at(b, j) - mx);
      z += probs[b * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) probs[b * k + j] /= z;
    loss += std::log(z) + mx - logits.at(b, labels[b]);
  }
  loss /= static_cast<double>(batch);
  Tensor y = detail::emit(tape, {1}, {loss});
  if (tape) {
    tape->push([logits, y, probs, labels, batch, k]() mutable {
      const double g = y.grad()[0] / static_cast<double>(batch);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t j = 0; j < k; ++j)
          logits.grad()[b * k + j] +=
              g * (probs[b * k + j] - (labels[b] == j ? 1.0 : 0.0));
    });
  }
  return y;
}

}  // namespace disms
