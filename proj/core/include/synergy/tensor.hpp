#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "synergy/errors.hpp"

namespace synergy {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

template <typename T>
struct TensorStorage {
  std::vector<T> value;
  std::vector<T> grad;          // empty until someone accumulates into it
  bool requires_grad = false;   // leaf parameter
  bool needs_grad = false;      // participates in backward (leaf or derived)

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

// Value-semantic handle onto shared storage. Copies alias the same buffer;
// view() reinterprets the shape without copying; clone() deep-copies.
template <typename T>
class Tensor {
 public:
  using Scalar = T;

  Tensor() = default;

  explicit Tensor(Shape shape, bool requires_grad = false)
      : storage_(std::make_shared<TensorStorage<T>>()), shape_(std::move(shape)) {
    for (int64_t d : shape_)
      if (d < 0) throw ShapeError("tensor dims must be non-negative, got " + shape_str(shape_));
    storage_->value.assign(static_cast<size_t>(shape_numel(shape_)), T(0));
    storage_->requires_grad = requires_grad;
    storage_->needs_grad = requires_grad;
  }

  static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
    if (static_cast<int64_t>(data.size()) != shape_numel(shape))
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    Tensor t;
    t.storage_ = std::make_shared<TensorStorage<T>>();
    t.storage_->value = std::move(data);
    t.storage_->requires_grad = requires_grad;
    t.storage_->needs_grad = requires_grad;
    t.shape_ = std::move(shape);
    return t;
  }

  bool defined() const { return static_cast<bool>(storage_); }
  const Shape& shape() const { return shape_; }
  int64_t dim(size_t i) const { return shape_.at(i); }
  int64_t ndim() const { return static_cast<int64_t>(shape_.size()); }
  int64_t numel() const { return storage_ ? static_cast<int64_t>(storage_->value.size()) : 0; }

  std::span<T> data() { return storage_->value; }
  std::span<const T> data() const { return storage_->value; }
  std::span<T> grad() {
    if (!has_grad()) throw StateError("tensor has no gradient buffer");
    return storage_->grad;
  }
  std::span<const T> grad() const {
    if (!has_grad()) throw StateError("tensor has no gradient buffer");
    return storage_->grad;
  }
  bool has_grad() const { return storage_ && storage_->grad.size() == storage_->value.size(); }
  void ensure_grad() { storage_->ensure_grad(); }
  void zero_grad() {
    if (has_grad()) std::fill(storage_->grad.begin(), storage_->grad.end(), T(0));
  }

  bool requires_grad() const { return storage_ && storage_->requires_grad; }
  bool needs_grad() const { return storage_ && storage_->needs_grad; }
  void set_needs_grad() { storage_->needs_grad = true; }

  T item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
    return storage_->value[0];
  }

  // Shares storage under a new shape (same element count).
  Tensor view(Shape new_shape) const {
    if (shape_numel(new_shape) != numel())
      throw ShapeError("view: cannot reshape " + shape_str(shape_) + " to " + shape_str(new_shape));
    Tensor t = *this;
    t.shape_ = std::move(new_shape);
    return t;
  }

  Tensor clone() const {
    Tensor t;
    t.storage_ = std::make_shared<TensorStorage<T>>();
    t.storage_->value = storage_->value;
    t.storage_->requires_grad = storage_->requires_grad;
    t.storage_->needs_grad = storage_->needs_grad;
    t.shape_ = shape_;
    return t;
  }

  const std::shared_ptr<TensorStorage<T>>& storage_ptr() const { return storage_; }

 private:
  std::shared_ptr<TensorStorage<T>> storage_;
  Shape shape_;
};

// Reverse-mode tape. Ops append closures during the forward pass; backward()
// runs them in reverse exactly once (single-use: the activations the closures
// borrow are only guaranteed alive for one pass).
template <typename T>
class Tape {
 public:
  void record(std::function<void()> fn) { ops_.push_back(std::move(fn)); }
  size_t size() const { return ops_.size(); }
  bool consumed() const { return consumed_; }

  void backward(Tensor<T>& loss) {
    if (consumed_) throw StateError("backward() called twice on a single-use tape");
    if (loss.numel() != 1)
      throw ShapeError("backward() requires a scalar loss, got shape " + shape_str(loss.shape()));
    consumed_ = true;
    loss.ensure_grad();
    loss.storage_ptr()->grad[0] = T(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

 private:
  std::vector<std::function<void()>> ops_;
  bool consumed_ = false;
};

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
bool track(Tape<T>* tape, std::initializer_list<const Tensor<T>*> inputs) {
  if (!tape) return false;
  for (const Tensor<T>* t : inputs)
    if (t->needs_grad()) return true;
  return false;
}

}  // namespace detail

// out = a @ b for 2-d tensors.
template <typename T>
Tensor<T> matmul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> out({m, n});
  detail::ConstMatMap<T> A(a.data().data(), m, k);
  detail::ConstMatMap<T> B(b.data().data(), k, n);
  detail::MatMap<T> C(out.data().data(), m, n);
  C.noalias() = A * B;
  if (detail::track(tape, {&a, &b})) {
    out.set_needs_grad();
    auto sa = a.storage_ptr(), sb = b.storage_ptr(), so = out.storage_ptr();
    tape->record([sa, sb, so, m, k, n] {
      if (so->grad.empty()) return;
      detail::ConstMatMap<T> A(sa->value.data(), m, k);
      detail::ConstMatMap<T> B(sb->value.data(), k, n);
      detail::ConstMatMap<T> dC(so->grad.data(), m, n);
      if (sa->needs_grad) {
        sa->ensure_grad();
        detail::MatMap<T> dA(sa->grad.data(), m, k);
        dA.noalias() += dC * B.transpose();
      }
      if (sb->needs_grad) {
        sb->ensure_grad();
        detail::MatMap<T> dB(sb->grad.data(), k, n);
        dB.noalias() += A.transpose() * dC;
      }
    });
  }
  return out;
}

// Elementwise sum of two same-shape tensors.
template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out(a.shape());
  auto av = a.data(), bv = b.data();
  auto ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  if (detail::track(tape, {&a, &b})) {
    out.set_needs_grad();
    auto sa = a.storage_ptr(), sb = b.storage_ptr(), so = out.storage_ptr();
    tape->record([sa, sb, so] {
      if (so->grad.empty()) return;
      if (sa->needs_grad) {
        sa->ensure_grad();
        for (size_t i = 0; i < so->grad.size(); ++i) sa->grad[i] += so->grad[i];
      }
      if (sb->needs_grad) {
        sb->ensure_grad();
        for (size_t i = 0; i < so->grad.size(); ++i) sb->grad[i] += so->grad[i];
      }
    });
  }
  return out;
}

// out[r, :] = m[r, :] + v  (bias broadcast over rows).
template <typename T>
Tensor<T> add_rowvec(Tape<T>* tape, const Tensor<T>& m, const Tensor<T>& v) {
  if (m.ndim() != 2 || v.ndim() != 1 || m.dim(1) != v.dim(0))
    throw ShapeError("add_rowvec: shapes " + shape_str(m.shape()) + " and " + shape_str(v.shape()));
  const int64_t rows = m.dim(0), cols = m.dim(1);
  Tensor<T> out({rows, cols});
  auto mv = m.data(), vv = v.data();
  auto ov = out.data();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) ov[r * cols + c] = mv[r * cols + c] + vv[c];
  if (detail::track(tape, {&m, &v})) {
    out.set_needs_grad();
    auto sm = m.storage_ptr(), sv = v.storage_ptr(), so = out.storage_ptr();
    tape->record([sm, sv, so, rows, cols] {
      if (so->grad.empty()) return;
      if (sm->needs_grad) {
        sm->ensure_grad();
        for (size_t i = 0; i < so->grad.size(); ++i) sm->grad[i] += so->grad[i];
      }
      if (sv->needs_grad) {
        sv->ensure_grad();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t c = 0; c < cols; ++c) sv->grad[c] += so->grad[r * cols + c];
      }
    });
  }
  return out;
}

// out = c * x for a compile-time-constant-free scalar c.
template <typename T>
Tensor<T> scale(Tape<T>* tape, const Tensor<T>& x, double c) {
  Tensor<T> out(x.shape());
  const T cc = static_cast<T>(c);
  auto xv = x.data();
  auto ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = cc * xv[i];
  if (detail::track(tape, {&x})) {
    out.set_needs_grad();
    auto sx = x.storage_ptr(), so = out.storage_ptr();
    tape->record([sx, so, cc] {
      if (so->grad.empty()) return;
      sx->ensure_grad();
      for (size_t i = 0; i < so->grad.size(); ++i) sx->grad[i] += cc * so->grad[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  auto xv = x.data();
  auto ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] > T(0) ? xv[i] : T(0);
  if (detail::track(tape, {&x})) {
    out.set_needs_grad();
    auto sx = x.storage_ptr(), so = out.storage_ptr();
    // Subgradient at exactly 0 is taken as 0.
    tape->record([sx, so] {
      if (so->grad.empty()) return;
      sx->ensure_grad();
      for (size_t i = 0; i < so->grad.size(); ++i)
        if (sx->value[i] > T(0)) sx->grad[i] += so->grad[i];
    });
  }
  return out;
}

// Scalar sum of all elements.
template <typename T>
Tensor<T> sum(Tape<T>* tape, const Tensor<T>& x) {
  Tensor<T> out(Shape{});
  T acc = T(0);
  for (T v : x.data()) acc += v;
  out.data()[0] = acc;
  if (detail::track(tape, {&x})) {
    out.set_needs_grad();
    auto sx = x.storage_ptr(), so = out.storage_ptr();
    tape->record([sx, so] {
      if (so->grad.empty()) return;
      sx->ensure_grad();
      const T g = so->grad[0];
      for (size_t i = 0; i < sx->grad.size(); ++i) sx->grad[i] += g;
    });
  }
  return out;
}

// Row-wise log-softmax with max-subtraction for stability.
template <typename T>
Tensor<T> log_softmax(Tape<T>* tape, const Tensor<T>& x) {
  if (x.ndim() != 2) throw ShapeError("log_softmax expects [N, C], got " + shape_str(x.shape()));
  const int64_t n = x.dim(0), c = x.dim(1);
  if (c == 0) throw ShapeError("log_softmax: zero classes");
  Tensor<T> out({n, c});
  auto xv = x.data();
  auto ov = out.data();
  for (int64_t r = 0; r < n; ++r) {
    const T* row = xv.data() + r * c;
    T* orow = ov.data() + r * c;
    T mx = row[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    T se = T(0);
    for (int64_t j = 0; j < c; ++j) se += std::exp(row[j] - mx);
    const T lse = std::log(se) + mx;
    for (int64_t j = 0; j < c; ++j) orow[j] = row[j] - lse;
  }
  if (detail::track(tape, {&x})) {
    out.set_needs_grad();
    auto sx = x.storage_ptr(), so = out.storage_ptr();
    tape->record([sx, so, n, c] {
      if (so->grad.empty()) return;
      sx->ensure_grad();
      for (int64_t r = 0; r < n; ++r) {
        const T* lsm = so->value.data() + r * c;
        const T* g = so->grad.data() + r * c;
        T* dx = sx->grad.data() + r * c;
        T gsum = T(0);
        for (int64_t j = 0; j < c; ++j) gsum += g[j];
        for (int64_t j = 0; j < c; ++j) dx[j] += g[j] - std::exp(lsm[j]) * gsum;
      }
    });
  }
  return out;
}

// Mean cross-entropy over the batch from raw logits and integer labels.
template <typename T>
Tensor<T> softmax_cross_entropy(Tape<T>* tape, const Tensor<T>& logits,
                                std::span<const int32_t> labels) {
  if (logits.ndim() != 2)
    throw ShapeError("softmax_cross_entropy expects [N, C] logits, got " +
                     shape_str(logits.shape()));
  const int64_t n = logits.dim(0), c = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != n)
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " rows");
  if (n == 0) throw ShapeError("softmax_cross_entropy: empty batch");
  auto probs = std::make_shared<std::vector<T>>(static_cast<size_t>(n * c));
  auto xv = logits.data();
  T loss_sum = T(0);
  for (int64_t r = 0; r < n; ++r) {
    const int32_t y = labels[r];
    if (y < 0 || y >= c)
      throw IndexError("label " + std::to_string(y) + " out of range for " + std::to_string(c) +
                       " classes");
    const T* row = xv.data() + r * c;
    T* prow = probs->data() + r * c;
    T mx = row[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    T se = T(0);
    for (int64_t j = 0; j < c; ++j) {
      prow[j] = std::exp(row[j] - mx);
      se += prow[j];
    }
    for (int64_t j = 0; j < c; ++j) prow[j] /= se;
    loss_sum += std::log(se) + mx - row[y];  // = -log softmax(row)[y]
  }
  Tensor<T> out(Shape{});
  out.data()[0] = loss_sum / static_cast<T>(n);
  if (detail::track(tape, {&logits})) {
    out.set_needs_grad();
    auto sx = logits.storage_ptr(), so = out.storage_ptr();
    std::vector<int32_t> ycopy(labels.begin(), labels.end());
    tape->record([sx, so, probs, ycopy = std::move(ycopy), n, c] {
      if (so->grad.empty()) return;
      sx->ensure_grad();
      const T gscale = so->grad[0] / static_cast<T>(n);
      for (int64_t r = 0; r < n; ++r) {
        const T* prow = probs->data() + r * c;
        T* dx = sx->grad.data() + r * c;
        for (int64_t j = 0; j < c; ++j) dx[j] += gscale * prow[j];
        dx[ycopy[r]] -= gscale;
      }
    });
  }
  return out;
}

// Mean squared error over all elements of two same-shape tensors.
template <typename T>
Tensor<T> mse(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("mse: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  if (a.numel() == 0) throw ShapeError("mse: empty tensors");
  const int64_t k = a.numel();
  auto av = a.data(), bv = b.data();
  T acc = T(0);
  for (int64_t i = 0; i < k; ++i) {
    const T d = av[i] - bv[i];
    acc += d * d;
  }
  Tensor<T> out(Shape{});
  out.data()[0] = acc / static_cast<T>(k);
  if (detail::track(tape, {&a, &b})) {
    out.set_needs_grad();
    auto sa = a.storage_ptr(), sb = b.storage_ptr(), so = out.storage_ptr();
    tape->record([sa, sb, so, k] {
      if (so->grad.empty()) return;
      const T gscale = so->grad[0] * T(2) / static_cast<T>(k);
      if (sa->needs_grad) sa->ensure_grad();
      if (sb->needs_grad) sb->ensure_grad();
      for (int64_t i = 0; i < k; ++i) {
        const T d = gscale * (sa->value[i] - sb->value[i]);
        if (sa->needs_grad) sa->grad[i] += d;
        if (sb->needs_grad) sb->grad[i] -= d;
      }
    });
  }
  return out;
}

// sum_i w[i] * (p[i] - anchor[i])^2 over a parameter list laid out flat.
// Used for the consolidation penalty; weights and anchor are constants.
template <typename T>
Tensor<T> quadratic_penalty(Tape<T>* tape, const std::vector<Tensor<T>>& params,
                            std::shared_ptr<const std::vector<T>> anchor,
                            std::shared_ptr<const std::vector<T>> weights) {
  size_t total = 0;
  for (const auto& p : params) total += static_cast<size_t>(p.numel());
  if (!anchor || !weights || anchor->size() != total || weights->size() != total)
    throw ShapeError("quadratic_penalty: anchor/weights length does not match " +
                     std::to_string(total) + " parameters");
  T acc = T(0);
  size_t off = 0;
  for (const auto& p : params) {
    auto pv = p.data();
    for (size_t i = 0; i < pv.size(); ++i, ++off) {
      const T d = pv[i] - (*anchor)[off];
      acc += (*weights)[off] * d * d;
    }
  }
  Tensor<T> out(Shape{});
  out.data()[0] = acc;
  bool tracked = false;
  if (tape)
    for (const auto& p : params)
      if (p.needs_grad()) tracked = true;
  if (tracked) {
    out.set_needs_grad();
    std::vector<std::shared_ptr<TensorStorage<T>>> storages;
    storages.reserve(params.size());
    for (const auto& p : params) storages.push_back(p.storage_ptr());
    auto so = out.storage_ptr();
    tape->record([storages = std::move(storages), anchor, weights, so] {
      if (so->grad.empty()) return;
      const T g2 = so->grad[0] * T(2);
      size_t off = 0;
      for (const auto& s : storages) {
        if (s->needs_grad) {
          s->ensure_grad();
          for (size_t i = 0; i < s->value.size(); ++i, ++off)
            s->grad[i] += g2 * (*weights)[off] * (s->value[i] - (*anchor)[off]);
        } else {
          off += s->value.size();
        }
      }
    });
  }
  return out;
}

// 2-d cross-correlation (the usual "conv" of deep-learning frameworks).
// input [N, Cin, H, W], weight [Cout, Cin, kH, kW], bias [Cout].
template <typename T>
Tensor<T> conv2d(Tape<T>* tape, const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, int64_t stride = 1, int64_t padding = 0) {
  if (input.ndim() != 4 || weight.ndim() != 4 || bias.ndim() != 1)
    throw ShapeError("conv2d: expected input [N,C,H,W], weight [Co,Ci,kH,kW], bias [Co]");
  const int64_t n = input.dim(0), ci = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int64_t co = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != ci)
    throw ShapeError("conv2d: input channels " + std::to_string(ci) + " vs weight " +
                     std::to_string(weight.dim(1)));
  if (bias.dim(0) != co) throw ShapeError("conv2d: bias length must equal out channels");
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  if (padding < 0) throw ConfigError("conv2d: padding must be >= 0");
  if (kh > h + 2 * padding || kw > w + 2 * padding)
    throw ShapeError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                     " larger than padded input " + std::to_string(h + 2 * padding) + "x" +
                     std::to_string(w + 2 * padding));
  const int64_t ho = (h + 2 * padding - kh) / stride + 1;
  const int64_t wo = (w + 2 * padding - kw) / stride + 1;
  Tensor<T> out({n, co, ho, wo});
  auto xv = input.data();
  auto wv = weight.data();
  auto bv = bias.data();
  auto ov = out.data();
  const auto xat = [&](int64_t in, int64_t c, int64_t y, int64_t x) {
    return xv[((in * ci + c) * h + y) * w + x];
  };
  for (int64_t in = 0; in < n; ++in)
    for (int64_t oc = 0; oc < co; ++oc)
      for (int64_t oy = 0; oy < ho; ++oy)
        for (int64_t ox = 0; ox < wo; ++ox) {
          T acc = bv[oc];
          for (int64_t c = 0; c < ci; ++c)
            for (int64_t ky = 0; ky < kh; ++ky) {
              const int64_t iy = oy * stride + ky - padding;
              if (iy < 0 || iy >= h) continue;
              for (int64_t kx = 0; kx < kw; ++kx) {
                const int64_t ix = ox * stride + kx - padding;
                if (ix < 0 || ix >= w) continue;
                acc += xat(in, c, iy, ix) * wv[((oc * ci + c) * kh + ky) * kw + kx];
              }
            }
          ov[((in * co + oc) * ho + oy) * wo + ox] = acc;
        }
  if (detail::track(tape, {&input, &weight, &bias})) {
    out.set_needs_grad();
    auto sx = input.storage_ptr(), sw = weight.storage_ptr(), sb = bias.storage_ptr(),
         so = out.storage_ptr();
    tape->record([sx, sw, sb, so, n, ci, h, w, co, kh, kw, ho, wo, stride, padding] {
      if (so->grad.empty()) return;
      if (sx->needs_grad) sx->ensure_grad();
      if (sw->needs_grad) sw->ensure_grad();
      if (sb->needs_grad) sb->ensure_grad();
      for (int64_t in = 0; in < n; ++in)
        for (int64_t oc = 0; oc < co; ++oc)
          for (int64_t oy = 0; oy < ho; ++oy)
            for (int64_t ox = 0; ox < wo; ++ox) {
              const T g = so->grad[((in * co + oc) * ho + oy) * wo + ox];
              if (g == T(0)) continue;
              if (sb->needs_grad) sb->grad[oc] += g;
              for (int64_t c = 0; c < ci; ++c)
                for (int64_t ky = 0; ky < kh; ++ky) {
                  const int64_t iy = oy * stride + ky - padding;
                  if (iy < 0 || iy >= h) continue;
                  for (int64_t kx = 0; kx < kw; ++kx) {
                    const int64_t ix = ox * stride + kx - padding;
                    if (ix < 0 || ix >= w) continue;
                    const size_t xi = ((in * ci + c) * h + iy) * w + ix;
                    const size_t wi = ((oc * ci + c) * kh + ky) * kw + kx;
                    if (sw->needs_grad) sw->grad[wi] += g * sx->value[xi];
                    if (sx->needs_grad) sx->grad[xi] += g * sw->value[wi];
                  }
                }
            }
    });
  }
  return out;
}

// In-place SGD update p <- p - lr * grad, then zeros the gradients.
template <typename T>
void sgd_step(std::vector<Tensor<T>>& params, double lr) {
  for (auto& p : params)
    if (!p.has_grad())
      throw StateError("sgd_step: parameter of shape " + shape_str(p.shape()) +
                       " has no gradient");
  const T eta = static_cast<T>(lr);
  for (auto& p : params) {
    auto s = p.storage_ptr();
    for (size_t i = 0; i < s->value.size(); ++i) s->value[i] -= eta * s->grad[i];
    std::fill(s->grad.begin(), s->grad.end(), T(0));
  }
}

}  // namespace synergy
