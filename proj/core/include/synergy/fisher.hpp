#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "synergy/buffer.hpp"
#include "synergy/network.hpp"
#include "synergy/rng.hpp"
#include "synergy/tensor.hpp"

namespace synergy {

namespace detail {

// Adds, for every sample in the batch, the squared gradient of
// log p(y | x) w.r.t. every parameter onto `acc` (flat layout). One batched
// forward/backward; per-sample squares fall out in closed form for dense
// layers (the gradient of row n w.r.t. W is the outer product x_n d_n^T, so
// its square is x_n^2 (d_n^2)^T and the batch sum is one GEMM of squared
// matrices). Conv layers accumulate per sample explicitly.
template <typename T>
void accumulate_squared_loglik_grads(const Network<T>& net, const Tensor<T>& inputs,
                                     std::span<const int32_t> labels, std::vector<T>& acc) {
  const int64_t n = inputs.dim(0);
  if (static_cast<int64_t>(labels.size()) != n)
    throw ShapeError("fisher: label count does not match batch");
  // Forward, caching every layer input.
  struct Act {
    Shape shape;
    std::vector<T> value;
  };
  std::vector<Act> acts;
  acts.reserve(net.layers().size() + 1);
  acts.push_back({inputs.shape(), {inputs.data().begin(), inputs.data().end()}});
  for (const Layer<T>& layer : net.layers()) {
    const Act& in = acts.back();
    Act out;
    switch (layer.spec.kind) {
      case LayerKind::Dense: {
        const int64_t d_in = layer.spec.in, d_out = layer.spec.out;
        if (in.shape.size() != 2 || in.shape[1] != d_in)
          throw ShapeError("fisher: dense layer input mismatch");
        out.shape = {n, d_out};
        out.value.resize(static_cast<size_t>(n * d_out));
        ConstMatMap<T> X(in.value.data(), n, d_in);
        ConstMatMap<T> W(layer.weight.data().data(), d_in, d_out);
        MatMap<T> Z(out.value.data(), n, d_out);
        Z.noalias() = X * W;
        auto bv = layer.bias.data();
        for (int64_t r = 0; r < n; ++r)
          for (int64_t c = 0; c < d_out; ++c) out.value[r * d_out + c] += bv[c];
        break;
      }
      case LayerKind::Conv2d: {
        Tensor<T> xin = Tensor<T>::from(in.shape, in.value);
        Tensor<T> z = conv2d<T>(nullptr, xin, layer.weight, layer.bias, layer.spec.stride,
                                layer.spec.pad);
        out.shape = z.shape();
        out.value.assign(z.data().begin(), z.data().end());
        break;
      }
      case LayerKind::ReLU: {
        out.shape = in.shape;
        out.value.resize(in.value.size());
        for (size_t i = 0; i < in.value.size(); ++i)
          out.value[i] = in.value[i] > T(0) ? in.value[i] : T(0);
        break;
      }
      case LayerKind::Flatten: {
        out.shape = {n, shape_numel(in.shape) / n};
        out.value = in.value;
        break;
      }
    }
    acts.push_back(std::move(out));
  }
  // Head: delta = d log softmax(z)[y] / d z = onehot(y) - p.
  const Act& logits = acts.back();
  if (logits.shape.size() != 2) throw ShapeError("fisher: network must end in [N, C] logits");
  const int64_t classes = logits.shape[1];
  std::vector<T> delta(logits.value.size());
  for (int64_t r = 0; r < n; ++r) {
    const int32_t y = labels[static_cast<size_t>(r)];
    if (y < 0 || y >= classes) throw IndexError("fisher: label out of range");
    const T* row = logits.value.data() + r * classes;
    T* drow = delta.data() + r * classes;
    T mx = row[0];
    for (int64_t j = 1; j < classes; ++j) mx = std::max(mx, row[j]);
    T se = T(0);
    for (int64_t j = 0; j < classes; ++j) {
      drow[j] = std::exp(row[j] - mx);
      se += drow[j];
    }
    for (int64_t j = 0; j < classes; ++j) drow[j] = -drow[j] / se;
    drow[y] += T(1);
  }
  // Backward, accumulating squared per-sample gradients.
  // Parameter offsets mirror Network's flat ordering.
  std::vector<size_t> offsets;
  size_t off = 0;
  for (const Layer<T>& layer : net.layers()) {
    if (layer.weight.defined()) {
      offsets.push_back(off);
      off += static_cast<size_t>(layer.weight.numel());
      offsets.push_back(off);
      off += static_cast<size_t>(layer.bias.numel());
    }
  }
  if (acc.size() != off) throw ShapeError("fisher: accumulator size mismatch");
  size_t wb_index = offsets.size();
  for (size_t li = net.layers().size(); li-- > 0;) {
    const Layer<T>& layer = net.layers()[li];
    const Act& in = acts[li];
    const Act& out = acts[li + 1];
    switch (layer.spec.kind) {
      case LayerKind::Dense: {
        const int64_t d_in = layer.spec.in, d_out = layer.spec.out;
        wb_index -= 2;
        T* accW = acc.data() + offsets[wb_index];
        T* accB = acc.data() + offsets[wb_index + 1];
        // Squared inputs and deltas -> one GEMM gives the per-sample sum.
        std::vector<T> xsq(in.value.size()), dsq(delta.size());
        for (size_t i = 0; i < xsq.size(); ++i) xsq[i] = in.value[i] * in.value[i];
        for (size_t i = 0; i < dsq.size(); ++i) dsq[i] = delta[i] * delta[i];
        ConstMatMap<T> Xsq(xsq.data(), n, d_in);
        ConstMatMap<T> Dsq(dsq.data(), n, d_out);
        MatMap<T> AW(accW, d_in, d_out);
        AW.noalias() += Xsq.transpose() * Dsq;
        for (int64_t r = 0; r < n; ++r)
          for (int64_t c = 0; c < d_out; ++c) accB[c] += dsq[r * d_out + c];
        if (li > 0) {
          std::vector<T> prev(in.value.size());
          ConstMatMap<T> D(delta.data(), n, d_out);
          ConstMatMap<T> W(layer.weight.data().data(), d_in, d_out);
          MatMap<T> P(prev.data(), n, d_in);
          P.noalias() = D * W.transpose();
          delta = std::move(prev);
        }
        break;
      }
      case LayerKind::Conv2d: {
        wb_index -= 2;
        T* accW = acc.data() + offsets[wb_index];
        T* accB = acc.data() + offsets[wb_index + 1];
        const int64_t ci = layer.spec.cin, co = layer.spec.cout, k = layer.spec.k;
        const int64_t stride = layer.spec.stride, pad = layer.spec.pad;
        const int64_t h = in.shape[2], w = in.shape[3];
        const int64_t ho = out.shape[2], wo = out.shape[3];
        const size_t wlen = static_cast<size_t>(co * ci * k * k);
        std::vector<T> gw(wlen);
        std::vector<T> prev;
        const bool need_prev = li > 0;
        if (need_prev) prev.assign(in.value.size(), T(0));
        auto wv = layer.weight.data();
        for (int64_t s = 0; s < n; ++s) {
          std::fill(gw.begin(), gw.end(), T(0));
          std::vector<T> gb(static_cast<size_t>(co), T(0));
          for (int64_t oc = 0; oc < co; ++oc)
            for (int64_t oy = 0; oy < ho; ++oy)
              for (int64_t ox = 0; ox < wo; ++ox) {
                const T g = delta[((s * co + oc) * ho + oy) * wo + ox];
                if (g == T(0)) continue;
                gb[oc] += g;
                for (int64_t c = 0; c < ci; ++c)
                  for (int64_t ky = 0; ky < k; ++ky) {
                    const int64_t iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    for (int64_t kx = 0; kx < k; ++kx) {
                      const int64_t ix = ox * stride + kx - pad;
                      if (ix < 0 || ix >= w) continue;
                      const size_t xi = ((s * ci + c) * h + iy) * w + ix;
                      const size_t wi = ((oc * ci + c) * k + ky) * k + kx;
                      gw[wi] += g * in.value[xi];
                      if (need_prev) prev[xi] += g * wv[wi];
                    }
                  }
              }
          for (size_t i = 0; i < wlen; ++i) accW[i] += gw[i] * gw[i];
          for (int64_t oc = 0; oc < co; ++oc) accB[oc] += gb[oc] * gb[oc];
        }
        if (need_prev) delta = std::move(prev);
        break;
      }
      case LayerKind::ReLU: {
        for (size_t i = 0; i < delta.size(); ++i)
          if (!(in.value[i] > T(0))) delta[i] = T(0);
        break;
      }
      case LayerKind::Flatten:
        break;  // same flat memory
    }
  }
}

}  // namespace detail

// Diagonal empirical Fisher over one explicit batch: mean of per-sample
// squared gradients of log p(y | x).
template <typename T>
std::vector<T> estimate_fisher_batch(const Network<T>& net, const Tensor<T>& inputs,
                                     std::span<const int32_t> labels) {
  if (labels.empty()) throw ShapeError("estimate_fisher_batch: empty batch");
  std::vector<T> acc(net.parameter_count(), T(0));
  detail::accumulate_squared_loglik_grads(net, inputs, labels, acc);
  const T inv = T(1) / static_cast<T>(labels.size());
  for (T& v : acc) v *= inv;
  return acc;
}

// Diagonal empirical Fisher over the whole buffer, processed in minibatches
// in storage order. Empty buffer -> nullopt (the caller's skip signal).
template <typename T>
std::optional<std::vector<T>> estimate_fisher(const Network<T>& net,
                                              const EpisodicBuffer<T>& buffer,
                                              size_t batch_size) {
  if (buffer.empty()) return std::nullopt;
  if (batch_size == 0) throw ConfigError("estimate_fisher: batch_size must be positive");
  std::vector<T> acc(net.parameter_count(), T(0));
  const size_t total = buffer.size();
  const Shape& item_shape = buffer.input_shape();
  for (size_t start = 0; start < total; start += batch_size) {
    const size_t count = std::min(batch_size, total - start);
    Shape shape;
    shape.push_back(static_cast<int64_t>(count));
    shape.insert(shape.end(), item_shape.begin(), item_shape.end());
    Tensor<T> batch(shape);
    std::vector<int32_t> labels(count);
    auto bv = batch.data();
    const size_t dim = static_cast<size_t>(shape_numel(item_shape));
    for (size_t i = 0; i < count; ++i) {
      auto item = buffer.item_input(start + i);
      std::copy(item.begin(), item.end(), bv.data() + i * dim);
      labels[i] = buffer.labels()[start + i];
    }
    detail::accumulate_squared_loglik_grads(net, batch, labels, acc);
  }
  const T inv = T(1) / static_cast<T>(total);
  for (T& v : acc) v *= inv;
  return acc;
}

// EMA-aggregated Fisher importance with a stochastic update gate.
template <typename T>
struct FisherState {
  std::vector<T> f_star;
  double alpha = 0.99;
  double update_prob = 1.0;
  // false: the first gated estimate is assigned directly; true: strict EMA
  // blending from the zero initialization.
  bool strict_ema = false;
  bool initialized = false;
  Rng gate;

  FisherState() = default;
  FisherState(size_t param_count, double alpha_f, double prob, uint64_t seed,
              bool strict = false)
      : f_star(param_count, T(0)), alpha(alpha_f), update_prob(prob), strict_ema(strict),
        gate(seed) {
    if (alpha < 0.0 || alpha > 1.0) throw ConfigError("fisher alpha must be in [0, 1]");
    if (update_prob < 0.0 || update_prob > 1.0)
      throw ConfigError("fisher update probability must be in [0, 1]");
  }

  // One U(0,1) draw; true iff the update should run this step.
  bool gate_fires() { return update_prob > gate.uniform(); }

  void merge(const std::vector<T>& estimate) {
    if (estimate.size() != f_star.size())
      throw ShapeError("fisher merge: estimate size " + std::to_string(estimate.size()) +
                       " != state size " + std::to_string(f_star.size()));
    if (!initialized && !strict_ema) {
      f_star = estimate;
    } else {
      const T a = static_cast<T>(alpha);
      const T b = static_cast<T>(1.0 - alpha);
      for (size_t i = 0; i < f_star.size(); ++i) f_star[i] = a * f_star[i] + b * estimate[i];
    }
    initialized = true;
  }
};

// Draws the gate; when it fires and the buffer is non-empty, re-estimates on
// the whole buffer with `model` and merges. Returns true iff f_star changed.
template <typename T>
bool maybe_update_fisher(FisherState<T>& state, const Network<T>& model,
                         const EpisodicBuffer<T>& buffer, size_t batch_size) {
  if (!state.gate_fires()) return false;
  auto est = estimate_fisher(model, buffer, batch_size);
  if (!est) return false;
  state.merge(*est);
  return true;
}

// Filter-level importance: every parameter in a conv filter group receives
// the group's mean; singleton groups pass through unchanged. Total mass is
// preserved (each group's sum equals its members' mean times the size).
template <typename T>
std::vector<T> adjust_fisher(const std::vector<T>& f_star, const FilterMap& fm) {
  if (f_star.size() != fm.group_of.size())
    throw ShapeError("adjust_fisher: fisher length " + std::to_string(f_star.size()) +
                     " != filter map length " + std::to_string(fm.group_of.size()));
  std::vector<T> sums(fm.group_count, T(0));
  for (size_t i = 0; i < f_star.size(); ++i) sums[fm.group_of[i]] += f_star[i];
  std::vector<T> out(f_star.size());
  for (size_t i = 0; i < f_star.size(); ++i) {
    const uint32_t g = fm.group_of[i];
    out[i] = sums[g] / static_cast<T>(fm.group_size[g]);
  }
  return out;
}

// sum_i f_adj[i] * (theta_w[i] - theta_anchor[i])^2, differentiable in the
// working parameters only.
template <typename T>
Tensor<T> consolidation_loss(Tape<T>* tape, Network<T>& working, const Network<T>& anchor,
                             std::shared_ptr<const std::vector<T>> f_adj) {
  if (!working.same_structure(anchor))
    throw ShapeError("consolidation_loss: working/anchor structure mismatch");
  auto anchor_flat = std::make_shared<const std::vector<T>>(anchor.flat());
  return quadratic_penalty(tape, working.parameters(), anchor_flat, std::move(f_adj));
}

}  // namespace synergy
