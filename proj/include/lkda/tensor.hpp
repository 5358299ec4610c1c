// Copyright 2026 The lkda Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lkda::ad {

/// Row-major 2-D shape. Vectors are 1 x n, scalars 1 x 1.
struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const noexcept { return rows * cols; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

namespace detail {
struct Storage {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until first needed
  bool requires_grad = false;
  std::int64_t node_id = -1;

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
};
}  // namespace detail

/// Shared handle to a dense tensor. Copies alias the same buffer; use clone()
/// for a deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);
  /// Leaf that accumulates gradients; its grad buffer is allocated up front.
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rows() const { return impl_->shape.rows; }
  std::size_t cols() const { return impl_->shape.cols; }
  std::size_t size() const { return impl_->values.size(); }

  std::span<const double> values() const { return impl_->values; }
  std::span<double> mutable_values() { return impl_->values; }
  double at(std::size_t r, std::size_t c) const { return impl_->values[r * cols() + c]; }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  bool has_grad() const { return impl_->grad.size() == impl_->values.size(); }
  /// Gradient buffer; all zeros when backward never reached this tensor.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  std::int64_t node_id() const { return impl_->node_id; }

  Tensor clone() const;

  const std::shared_ptr<detail::Storage>& storage() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Storage> impl) : impl_(std::move(impl)) {}
  friend Tensor make_tensor(Shape, std::vector<double>);
  std::shared_ptr<detail::Storage> impl_;
};

Tensor make_tensor(Shape shape, std::vector<double> values);

/// Dynamic computation tape, rebuilt for every forward pass.
///
/// Ops record onto the tape made active by a Recording scope on the calling
/// thread. With no active tape ops only compute values, which makes frozen
/// evaluation reentrant across threads.
class Tape {
 public:
  struct Entry {
    std::string_view op;
    std::vector<std::int64_t> inputs;  // node ids; -1 for leaves
    std::int64_t output = -1;
    std::shared_ptr<detail::Storage> out;
    std::function<void(detail::Storage& out)> backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Populates grads of every ancestor of `loss`. Parameter grads accumulate
  /// across calls until zeroed; intermediate grads are reset on each call.
  void backward(const Tensor& loss);

  std::size_t size() const noexcept { return entries_.size(); }
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  void clear();

  Tensor record(std::string_view op, std::initializer_list<const Tensor*> inputs, Tensor out,
                std::function<void(detail::Storage& out)> backward);

 private:
  std::vector<Entry> entries_;
};

/// Active tape on this thread, or nullptr.
Tape* active_tape() noexcept;

/// RAII scope that makes `tape` the recording target on this thread.
class Recording {
 public:
  explicit Recording(Tape& tape) noexcept;
  ~Recording();
  Recording(const Recording&) = delete;
  Recording& operator=(const Recording&) = delete;

 private:
  Tape* previous_;
};

/// Shared immutable row-index list used by gather/scatter style ops.
using Index = std::shared_ptr<const std::vector<std::uint32_t>>;
Index make_index(std::vector<std::uint32_t> idx);

// Linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);
/// x * w + b with b a 1 x n row broadcast over rows.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_row(const Tensor& x, const Tensor& row);
Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
/// Throws DomainError on any nonpositive entry.
Tensor log(const Tensor& x);
/// log(exp(a) + exp(b)) without overflow.
Tensor logaddexp(const Tensor& a, const Tensor& b);
/// Multiplies row i by factors[i]; factors are constants.
Tensor scale_rows(const Tensor& x, std::vector<double> factors);

// Reductions
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// m x n -> m x 1
Tensor row_sum(const Tensor& x);

// Row-wise normalization
Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);

// Structural
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor gather_rows(const Tensor& x, const Index& idx);
/// out[idx[i]] += x[i]; out has `out_rows` rows.
Tensor scatter_add_rows(const Tensor& x, const Index& idx, std::size_t out_rows);
/// Copy of x with the listed rows set to zero; no gradient reaches them.
Tensor zero_mask(const Tensor& x, std::span<const std::uint32_t> rows);
/// Same values, new row/column split.
Tensor reshape(const Tensor& x, Shape shape);
/// Value copy cut off from the tape.
Tensor detach(const Tensor& x);

// Multi-head edge attention helpers. Columns are split into `heads`
// contiguous blocks of equal width.
/// E x D, E x D -> E x heads: per-head dot products.
Tensor head_dot(const Tensor& a, const Tensor& b, std::size_t heads);
/// E x D, E x heads -> E x D: each head block scaled by its weight.
Tensor head_scale(const Tensor& x, const Tensor& w, std::size_t heads);
/// Softmax of each column over rows that share a segment id.
Tensor segment_softmax(const Tensor& scores, const Index& segment, std::size_t segments);

}  // namespace lkda::ad
