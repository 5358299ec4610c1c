// Copyright 2026 The lkda Authors
// SPDX-License-Identifier: Apache-2.0

#include "lkda/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "lkda/errors.hpp"
#include "lkda/kernels.hpp"

namespace lkda::ad {

using detail::Storage;

std::string Shape::str() const {
  std::ostringstream os;
  os << '[' << rows << 'x' << cols << ']';
  return os.str();
}

Tensor make_tensor(Shape shape, std::vector<double> values) {
  if (shape.size() != values.size())
    throw DimensionError("tensor shape " + shape.str() + " does not match " +
                         std::to_string(values.size()) + " values");
  auto s = std::make_shared<Storage>();
  s->shape = shape;
  s->values = std::move(values);
  return Tensor(std::move(s));
}

Tensor Tensor::zeros(Shape shape) { return make_tensor(shape, std::vector<double>(shape.size())); }

Tensor Tensor::filled(Shape shape, double value) {
  return make_tensor(shape, std::vector<double>(shape.size(), value));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  return make_tensor(shape, std::move(values));
}

Tensor Tensor::scalar(double value) { return make_tensor({1, 1}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t = make_tensor(shape, std::move(values));
  t.impl_->requires_grad = true;
  t.impl_->ensure_grad();
  return t;
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + shape().str());
  return impl_->values[0];
}

std::span<const double> Tensor::grad() const {
  impl_->ensure_grad();
  return impl_->grad;
}

std::span<double> Tensor::mutable_grad() {
  impl_->ensure_grad();
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (has_grad()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  Tensor t = make_tensor(shape(), impl_->values);
  t.impl_->requires_grad = impl_->requires_grad;
  if (t.impl_->requires_grad) t.impl_->ensure_grad();
  return t;
}

// ---------------------------------------------------------------------------
// Tape

namespace {
thread_local Tape* g_active = nullptr;
}

Tape* active_tape() noexcept { return g_active; }

Recording::Recording(Tape& tape) noexcept : previous_(g_active) { g_active = &tape; }
Recording::~Recording() { g_active = previous_; }

Tensor Tape::record(std::string_view op, std::initializer_list<const Tensor*> inputs, Tensor out,
                    std::function<void(Storage& out)> backward) {
  Entry e;
  e.op = op;
  for (const Tensor* in : inputs) e.inputs.push_back(in->node_id());
  e.output = static_cast<std::int64_t>(entries_.size());
  out.storage()->requires_grad = true;
  out.storage()->node_id = e.output;
  e.out = out.storage();
  e.backward = std::move(backward);
  entries_.push_back(std::move(e));
  return out;
}

void Tape::clear() {
  for (auto& e : entries_) e.out->node_id = -1;
  entries_.clear();
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? loss.shape().str() : std::string("<undefined>")));
  const std::int64_t id = loss.node_id();
  if (id < 0 || id >= static_cast<std::int64_t>(entries_.size()) ||
      entries_[static_cast<std::size_t>(id)].out != loss.storage()) {
    // Constant or leaf loss: nothing upstream to differentiate.
    if (loss.requires_grad()) loss.storage()->ensure_grad(), loss.storage()->grad[0] += 1.0;
    return;
  }
  for (auto& e : entries_) {
    if (!e.out->grad.empty()) std::fill(e.out->grad.begin(), e.out->grad.end(), 0.0);
  }
  loss.storage()->ensure_grad();
  loss.storage()->grad[0] = 1.0;
  for (std::size_t i = static_cast<std::size_t>(id) + 1; i-- > 0;) {
    Entry& e = entries_[i];
    if (e.out->grad.empty()) continue;  // not an ancestor of the loss
    e.backward(*e.out);
  }
}

Index make_index(std::vector<std::uint32_t> idx) {
  return std::make_shared<const std::vector<std::uint32_t>>(std::move(idx));
}

// ---------------------------------------------------------------------------
// Op helpers

namespace {

const kernels::KernelTable& K() { return kernels::active(); }

bool needs_tape(std::initializer_list<const Tensor*> inputs) {
  if (g_active == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

// Records `out` when any input needs a gradient; otherwise returns it as a constant.
template <class F>
Tensor finish(std::string_view op, std::initializer_list<const Tensor*> inputs, Tensor out,
              F&& backward) {
  if (!needs_tape(inputs)) return out;
  return g_active->record(op, inputs, std::move(out), std::forward<F>(backward));
}

// Grad buffer of an input when it participates in differentiation, else nullptr.
double* grad_of(const std::shared_ptr<Storage>& s) {
  if (!s->requires_grad) return nullptr;
  s->ensure_grad();
  return s->grad.data();
}

void require_same(const Tensor& a, const Tensor& b, std::string_view op) {
  if (!(a.shape() == b.shape()))
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                         b.shape().str());
}

std::vector<double> transpose(const double* x, std::size_t r, std::size_t c) {
  std::vector<double> t(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) t[j * r + i] = x[i * c + j];
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw DimensionError("matmul: inner dimensions differ " + a.shape().str() + " x " +
                         b.shape().str());
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n);
  K().gemm_nn(a.values().data(), b.values().data(), out.data(), m, k, n, false);
  auto sa = a.storage(), sb = b.storage();
  return finish("matmul", {&a, &b}, make_tensor({m, n}, std::move(out)),
                [sa, sb, m, k, n](Storage& o) {
                  if (double* ga = grad_of(sa)) {
                    const auto bt = transpose(sb->values.data(), k, n);
                    K().gemm_nn(o.grad.data(), bt.data(), ga, m, n, k, true);
                  }
                  if (double* gb = grad_of(sb))
                    K().gemm_tn(sa->values.data(), o.grad.data(), gb, m, k, n, true);
                });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_row(matmul(x, w), b);
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  std::vector<double> out(a.size());
  K().add(a.values().data(), b.values().data(), out.data(), out.size());
  auto sa = a.storage(), sb = b.storage();
  return finish("add", {&a, &b}, make_tensor(a.shape(), std::move(out)), [sa, sb](Storage& o) {
    if (double* ga = grad_of(sa)) K().axpy(1.0, o.grad.data(), ga, o.grad.size());
    if (double* gb = grad_of(sb)) K().axpy(1.0, o.grad.data(), gb, o.grad.size());
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  auto sa = a.storage(), sb = b.storage();
  return finish("sub", {&a, &b}, make_tensor(a.shape(), std::move(out)), [sa, sb](Storage& o) {
    if (double* ga = grad_of(sa)) K().axpy(1.0, o.grad.data(), ga, o.grad.size());
    if (double* gb = grad_of(sb)) K().axpy(-1.0, o.grad.data(), gb, o.grad.size());
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  std::vector<double> out(a.size());
  K().mul(a.values().data(), b.values().data(), out.data(), out.size());
  auto sa = a.storage(), sb = b.storage();
  return finish("mul", {&a, &b}, make_tensor(a.shape(), std::move(out)), [sa, sb](Storage& o) {
    if (double* ga = grad_of(sa)) K().mul_acc(o.grad.data(), sb->values.data(), ga, o.grad.size());
    if (double* gb = grad_of(sb)) K().mul_acc(o.grad.data(), sa->values.data(), gb, o.grad.size());
  });
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != x.cols())
    throw DimensionError("add_row: cannot broadcast " + row.shape().str() + " over " +
                         x.shape().str());
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    K().add(x.values().data() + i * n, row.values().data(), out.data() + i * n, n);
  auto sx = x.storage(), sr = row.storage();
  return finish("add_row", {&x, &row}, make_tensor(x.shape(), std::move(out)),
                [sx, sr, m, n](Storage& o) {
                  if (double* gx = grad_of(sx)) K().axpy(1.0, o.grad.data(), gx, m * n);
                  if (double* gr = grad_of(sr))
                    for (std::size_t i = 0; i < m; ++i) K().axpy(1.0, o.grad.data() + i * n, gr, n);
                });
}

Tensor scale(const Tensor& x, double c) {
  std::vector<double> out(x.size());
  K().scale(c, x.values().data(), out.data(), out.size());
  auto sx = x.storage();
  return finish("scale", {&x}, make_tensor(x.shape(), std::move(out)), [sx, c](Storage& o) {
    if (double* gx = grad_of(sx)) K().axpy(c, o.grad.data(), gx, o.grad.size());
  });
}

Tensor add_scalar(const Tensor& x, double c) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out) v += c;
  auto sx = x.storage();
  return finish("add_scalar", {&x}, make_tensor(x.shape(), std::move(out)), [sx](Storage& o) {
    if (double* gx = grad_of(sx)) K().axpy(1.0, o.grad.data(), gx, o.grad.size());
  });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.size());
  K().relu(x.values().data(), out.data(), out.size());
  auto sx = x.storage();
  return finish("relu", {&x}, make_tensor(x.shape(), std::move(out)), [sx](Storage& o) {
    if (double* gx = grad_of(sx))
      K().relu_backward(sx->values.data(), o.grad.data(), gx, o.grad.size());
  });
}

Tensor exp(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(x.values()[i]);
  auto sx = x.storage();
  Tensor result = make_tensor(x.shape(), std::move(out));
  return finish("exp", {&x}, std::move(result), [sx](Storage& o) {
    if (double* gx = grad_of(sx)) K().mul_acc(o.grad.data(), o.values.data(), gx, o.grad.size());
  });
}

Tensor log(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x.values()[i];
    if (!(v > 0.0))
      throw DomainError("log: nonpositive input " + std::to_string(v) + " at flat index " +
                        std::to_string(i));
    out[i] = std::log(v);
  }
  auto sx = x.storage();
  return finish("log", {&x}, make_tensor(x.shape(), std::move(out)), [sx](Storage& o) {
    if (double* gx = grad_of(sx))
      for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i] / sx->values[i];
  });
}

Tensor logaddexp(const Tensor& a, const Tensor& b) {
  require_same(a, b, "logaddexp");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a.values()[i], y = b.values()[i];
    const double hi = std::max(x, y);
    out[i] = hi + std::log1p(std::exp(std::min(x, y) - hi));
  }
  auto sa = a.storage(), sb = b.storage();
  return finish("logaddexp", {&a, &b}, make_tensor(a.shape(), std::move(out)),
                [sa, sb](Storage& o) {
                  double* ga = grad_of(sa);
                  double* gb = grad_of(sb);
                  for (std::size_t i = 0; i < o.grad.size(); ++i) {
                    if (ga) ga[i] += o.grad[i] * std::exp(sa->values[i] - o.values[i]);
                    if (gb) gb[i] += o.grad[i] * std::exp(sb->values[i] - o.values[i]);
                  }
                });
}

Tensor scale_rows(const Tensor& x, std::vector<double> factors) {
  if (factors.size() != x.rows())
    throw DimensionError("scale_rows: " + std::to_string(factors.size()) + " factors for " +
                         x.shape().str());
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    K().scale(factors[i], x.values().data() + i * n, out.data() + i * n, n);
  auto sx = x.storage();
  return finish("scale_rows", {&x}, make_tensor(x.shape(), std::move(out)),
                [sx, f = std::move(factors), m, n](Storage& o) {
                  if (double* gx = grad_of(sx))
                    for (std::size_t i = 0; i < m; ++i)
                      K().axpy(f[i], o.grad.data() + i * n, gx + i * n, n);
                });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  auto sx = x.storage();
  return finish("sum", {&x}, Tensor::scalar(s), [sx](Storage& o) {
    if (double* gx = grad_of(sx))
      for (std::size_t i = 0; i < sx->values.size(); ++i) gx[i] += o.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor row_sum(const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += x.values()[i * n + j];
  auto sx = x.storage();
  return finish("row_sum", {&x}, make_tensor({m, 1}, std::move(out)), [sx, m, n](Storage& o) {
    if (double* gx = grad_of(sx))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += o.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Row-wise normalization

Tensor softmax_rows(const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* xr = x.values().data() + i * n;
    double* yr = out.data() + i * n;
    const double hi = *std::max_element(xr, xr + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (yr[j] = std::exp(xr[j] - hi));
    for (std::size_t j = 0; j < n; ++j) yr[j] /= z;
  }
  auto sx = x.storage();
  return finish("softmax_rows", {&x}, make_tensor(x.shape(), std::move(out)),
                [sx, m, n](Storage& o) {
                  double* gx = grad_of(sx);
                  if (!gx) return;
                  for (std::size_t i = 0; i < m; ++i) {
                    const double* y = o.values.data() + i * n;
                    const double* gy = o.grad.data() + i * n;
                    double dot = 0.0;
                    for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
                    for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += y[j] * (gy[j] - dot);
                  }
                });
}

Tensor log_softmax_rows(const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* xr = x.values().data() + i * n;
    const double hi = *std::max_element(xr, xr + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(xr[j] - hi);
    const double lse = hi + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xr[j] - lse;
  }
  auto sx = x.storage();
  return finish("log_softmax_rows", {&x}, make_tensor(x.shape(), std::move(out)),
                [sx, m, n](Storage& o) {
                  double* gx = grad_of(sx);
                  if (!gx) return;
                  for (std::size_t i = 0; i < m; ++i) {
                    const double* y = o.values.data() + i * n;
                    const double* gy = o.grad.data() + i * n;
                    double total = 0.0;
                    for (std::size_t j = 0; j < n; ++j) total += gy[j];
                    for (std::size_t j = 0; j < n; ++j)
                      gx[i * n + j] += gy[j] - std::exp(y[j]) * total;
                  }
                });
}

// ---------------------------------------------------------------------------
// Structural

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows())
    throw DimensionError("concat_cols: row counts differ " + a.shape().str() + " vs " +
                         b.shape().str());
  const std::size_t m = a.rows(), na = a.cols(), nb = b.cols(), n = na + nb;
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(a.values().data() + i * na, na, out.data() + i * n);
    std::copy_n(b.values().data() + i * nb, nb, out.data() + i * n + na);
  }
  auto sa = a.storage(), sb = b.storage();
  return finish("concat_cols", {&a, &b}, make_tensor({m, n}, std::move(out)),
                [sa, sb, m, na, nb, n](Storage& o) {
                  double* ga = grad_of(sa);
                  double* gb = grad_of(sb);
                  for (std::size_t i = 0; i < m; ++i) {
                    if (ga) K().axpy(1.0, o.grad.data() + i * n, ga + i * na, na);
                    if (gb) K().axpy(1.0, o.grad.data() + i * n + na, gb + i * nb, nb);
                  }
                });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols())
    throw DimensionError("concat_rows: column counts differ " + a.shape().str() + " vs " +
                         b.shape().str());
  std::vector<double> out(a.values().begin(), a.values().end());
  out.insert(out.end(), b.values().begin(), b.values().end());
  auto sa = a.storage(), sb = b.storage();
  const std::size_t split = a.size();
  return finish("concat_rows", {&a, &b},
                make_tensor({a.rows() + b.rows(), a.cols()}, std::move(out)),
                [sa, sb, split](Storage& o) {
                  if (double* ga = grad_of(sa)) K().axpy(1.0, o.grad.data(), ga, split);
                  if (double* gb = grad_of(sb))
                    K().axpy(1.0, o.grad.data() + split, gb, o.grad.size() - split);
                });
}

Tensor gather_rows(const Tensor& x, const Index& idx) {
  const std::size_t n = x.cols(), m = idx->size(), src_rows = x.rows();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const std::uint32_t r = (*idx)[i];
    if (r >= src_rows)
      throw DimensionError("gather_rows: row " + std::to_string(r) + " out of range for " +
                           x.shape().str());
    std::copy_n(x.values().data() + static_cast<std::size_t>(r) * n, n, out.data() + i * n);
  }
  auto sx = x.storage();
  return finish("gather_rows", {&x}, make_tensor({m, n}, std::move(out)),
                [sx, idx, m, n](Storage& o) {
                  if (double* gx = grad_of(sx))
                    for (std::size_t i = 0; i < m; ++i)
                      K().axpy(1.0, o.grad.data() + i * n,
                               gx + static_cast<std::size_t>((*idx)[i]) * n, n);
                });
}

Tensor scatter_add_rows(const Tensor& x, const Index& idx, std::size_t out_rows) {
  if (idx->size() != x.rows())
    throw DimensionError("scatter_add_rows: " + std::to_string(idx->size()) +
                         " indices for " + x.shape().str());
  const std::size_t n = x.cols(), m = x.rows();
  std::vector<double> out(out_rows * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const std::uint32_t r = (*idx)[i];
    if (r >= out_rows)
      throw DimensionError("scatter_add_rows: target row " + std::to_string(r) +
                           " out of range " + std::to_string(out_rows));
    K().axpy(1.0, x.values().data() + i * n, out.data() + static_cast<std::size_t>(r) * n, n);
  }
  auto sx = x.storage();
  return finish("scatter_add_rows", {&x}, make_tensor({out_rows, n}, std::move(out)),
                [sx, idx, m, n](Storage& o) {
                  if (double* gx = grad_of(sx))
                    for (std::size_t i = 0; i < m; ++i)
                      K().axpy(1.0, o.grad.data() + static_cast<std::size_t>((*idx)[i]) * n,
                               gx + i * n, n);
                });
}

Tensor zero_mask(const Tensor& x, std::span<const std::uint32_t> rows) {
  const std::size_t n = x.cols();
  std::vector<double> out(x.values().begin(), x.values().end());
  std::vector<char> masked(x.rows(), 0);
  for (std::uint32_t r : rows) {
    if (r >= x.rows())
      throw DimensionError("zero_mask: row " + std::to_string(r) + " out of range for " +
                           x.shape().str());
    masked[r] = 1;
    std::fill_n(out.data() + static_cast<std::size_t>(r) * n, n, 0.0);
  }
  auto sx = x.storage();
  return finish("zero_mask", {&x}, make_tensor(x.shape(), std::move(out)),
                [sx, masked = std::move(masked), n](Storage& o) {
                  double* gx = grad_of(sx);
                  if (!gx) return;
                  for (std::size_t i = 0; i < masked.size(); ++i)
                    if (!masked[i]) K().axpy(1.0, o.grad.data() + i * n, gx + i * n, n);
                });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape.size() != x.size())
    throw DimensionError("reshape: cannot view " + x.shape().str() + " as " + shape.str());
  auto sx = x.storage();
  return finish("reshape", {&x},
                make_tensor(shape, std::vector<double>(x.values().begin(), x.values().end())),
                [sx](Storage& o) {
                  if (double* gx = grad_of(sx)) K().add(gx, o.grad.data(), gx, o.grad.size());
                });
}

Tensor detach(const Tensor& x) {
  return make_tensor(x.shape(), std::vector<double>(x.values().begin(), x.values().end()));
}

// ---------------------------------------------------------------------------
// Attention helpers

namespace {
std::size_t head_width(const Tensor& x, std::size_t heads, std::string_view op) {
  if (heads == 0 || x.cols() % heads != 0)
    throw DimensionError(std::string(op) + ": " + std::to_string(x.cols()) +
                         " columns not divisible into " + std::to_string(heads) + " heads");
  return x.cols() / heads;
}
}  // namespace

Tensor head_dot(const Tensor& a, const Tensor& b, std::size_t heads) {
  require_same(a, b, "head_dot");
  const std::size_t w = head_width(a, heads, "head_dot");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * heads, 0.0);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t h = 0; h < heads; ++h) {
      double s = 0.0;
      for (std::size_t d = h * w; d < (h + 1) * w; ++d) s += av[i * n + d] * bv[i * n + d];
      out[i * heads + h] = s;
    }
  auto sa = a.storage(), sb = b.storage();
  return finish("head_dot", {&a, &b}, make_tensor({m, heads}, std::move(out)),
                [sa, sb, m, n, heads, w](Storage& o) {
                  double* ga = grad_of(sa);
                  double* gb = grad_of(sb);
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t h = 0; h < heads; ++h) {
                      const double g = o.grad[i * heads + h];
                      if (ga) K().axpy(g, sb->values.data() + i * n + h * w, ga + i * n + h * w, w);
                      if (gb) K().axpy(g, sa->values.data() + i * n + h * w, gb + i * n + h * w, w);
                    }
                });
}

Tensor head_scale(const Tensor& x, const Tensor& w, std::size_t heads) {
  const std::size_t width = head_width(x, heads, "head_scale");
  if (w.rows() != x.rows() || w.cols() != heads)
    throw DimensionError("head_scale: weights " + w.shape().str() + " do not match " +
                         x.shape().str() + " with " + std::to_string(heads) + " heads");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t h = 0; h < heads; ++h)
      K().scale(w.values()[i * heads + h], x.values().data() + i * n + h * width,
                out.data() + i * n + h * width, width);
  auto sx = x.storage(), sw = w.storage();
  return finish("head_scale", {&x, &w}, make_tensor(x.shape(), std::move(out)),
                [sx, sw, m, n, heads, width](Storage& o) {
                  double* gx = grad_of(sx);
                  double* gw = grad_of(sw);
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t h = 0; h < heads; ++h) {
                      const double* gy = o.grad.data() + i * n + h * width;
                      if (gx) K().axpy(sw->values[i * heads + h], gy, gx + i * n + h * width, width);
                      if (gw) {
                        const double* xv = sx->values.data() + i * n + h * width;
                        double s = 0.0;
                        for (std::size_t d = 0; d < width; ++d) s += gy[d] * xv[d];
                        gw[i * heads + h] += s;
                      }
                    }
                });
}

Tensor segment_softmax(const Tensor& scores, const Index& segment, std::size_t segments) {
  if (segment->size() != scores.rows())
    throw DimensionError("segment_softmax: " + std::to_string(segment->size()) +
                         " segment ids for " + scores.shape().str());
  const std::size_t m = scores.rows(), c = scores.cols();
  const double* x = scores.values().data();
  std::vector<double> hi(segments * c, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t s = (*segment)[i];
    if (s >= segments)
      throw DimensionError("segment_softmax: segment id " + std::to_string(s) + " >= " +
                           std::to_string(segments));
    for (std::size_t j = 0; j < c; ++j) hi[s * c + j] = std::max(hi[s * c + j], x[i * c + j]);
  }
  std::vector<double> out(m * c), z(segments * c, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t s = (*segment)[i];
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = std::exp(x[i * c + j] - hi[s * c + j]);
      z[s * c + j] += out[i * c + j];
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t s = (*segment)[i];
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= z[s * c + j];
  }
  auto sx = scores.storage();
  return finish("segment_softmax", {&scores}, make_tensor(scores.shape(), std::move(out)),
                [sx, segment, segments, m, c](Storage& o) {
                  double* gx = grad_of(sx);
                  if (!gx) return;
                  std::vector<double> dot(segments * c, 0.0);
                  for (std::size_t i = 0; i < m; ++i) {
                    const std::size_t s = (*segment)[i];
                    for (std::size_t j = 0; j < c; ++j)
                      dot[s * c + j] += o.grad[i * c + j] * o.values[i * c + j];
                  }
                  for (std::size_t i = 0; i < m; ++i) {
                    const std::size_t s = (*segment)[i];
                    for (std::size_t j = 0; j < c; ++j)
                      gx[i * c + j] += o.values[i * c + j] * (o.grad[i * c + j] - dot[s * c + j]);
                  }
                });
}

}  // namespace lkda::ad
