#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "synergy/rng.hpp"
#include "synergy/tensor.hpp"

namespace synergy {

enum class LayerKind : int32_t { Dense = 0, Conv2d = 1, ReLU = 2, Flatten = 3 };

struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  // Dense: in, out. Conv2d: cin, cout, k, stride, pad.
  int64_t in = 0, out = 0;
  int64_t cin = 0, cout = 0, k = 0, stride = 1, pad = 0;

  static LayerSpec dense(int64_t in, int64_t out) {
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.in = in;
    s.out = out;
    return s;
  }
  static LayerSpec conv2d(int64_t cin, int64_t cout, int64_t k, int64_t stride = 1,
                          int64_t pad = 0) {
    LayerSpec s;
    s.kind = LayerKind::Conv2d;
    s.cin = cin;
    s.cout = cout;
    s.k = k;
    s.stride = stride;
    s.pad = pad;
    return s;
  }
  static LayerSpec relu() { return LayerSpec{}; }
  static LayerSpec flatten() {
    LayerSpec s;
    s.kind = LayerKind::Flatten;
    return s;
  }

  bool operator==(const LayerSpec&) const = default;
};

template <typename T>
struct Layer {
  LayerSpec spec;
  Tensor<T> weight;  // Dense: [in, out]; Conv2d: [cout, cin, k, k]
  Tensor<T> bias;    // Dense: [out]; Conv2d: [cout]
};

// Feed-forward stack of layers with a flat, stable parameter ordering
// (layer by layer, weight before bias).
template <typename T>
class Network {
 public:
  Network() = default;

  // When rng is null, parameters are zero-initialized (checkpoint loading).
  // Otherwise uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) per weight-bearing
  // layer, weights drawn row-major first, then biases.
  explicit Network(std::vector<LayerSpec> specs, Rng* rng = nullptr) {
    layers_.reserve(specs.size());
    for (const LayerSpec& spec : specs) {
      Layer<T> layer;
      layer.spec = spec;
      switch (spec.kind) {
        case LayerKind::Dense: {
          if (spec.in <= 0 || spec.out <= 0) throw ConfigError("dense layer needs in, out > 0");
          layer.weight = Tensor<T>({spec.in, spec.out}, /*requires_grad=*/true);
          layer.bias = Tensor<T>({spec.out}, /*requires_grad=*/true);
          if (rng) init_uniform(layer, static_cast<double>(spec.in), *rng);
          break;
        }
        case LayerKind::Conv2d: {
          if (spec.cin <= 0 || spec.cout <= 0 || spec.k <= 0)
            throw ConfigError("conv layer needs cin, cout, k > 0");
          layer.weight = Tensor<T>({spec.cout, spec.cin, spec.k, spec.k}, /*requires_grad=*/true);
          layer.bias = Tensor<T>({spec.cout}, /*requires_grad=*/true);
          if (rng) init_uniform(layer, static_cast<double>(spec.cin * spec.k * spec.k), *rng);
          break;
        }
        case LayerKind::ReLU:
        case LayerKind::Flatten:
          break;
      }
      layers_.push_back(std::move(layer));
    }
    rebuild_param_index();
  }

  Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape) const {
    Tensor<T> cur = x;
    for (const Layer<T>& layer : layers_) {
      switch (layer.spec.kind) {
        case LayerKind::Dense:
          if (cur.ndim() != 2)
            throw ShapeError("dense layer expects [N, D] input, got " + shape_str(cur.shape()));
          cur = add_rowvec(tape, matmul(tape, cur, layer.weight), layer.bias);
          break;
        case LayerKind::Conv2d:
          cur = conv2d(tape, cur, layer.weight, layer.bias, layer.spec.stride, layer.spec.pad);
          break;
        case LayerKind::ReLU:
          cur = relu(tape, cur);
          break;
        case LayerKind::Flatten: {
          if (cur.ndim() < 1) throw ShapeError("flatten on scalar");
          const int64_t n = cur.dim(0);
          cur = cur.view({n, cur.numel() / std::max<int64_t>(n, 1)});
          break;
        }
      }
    }
    return cur;
  }

  std::vector<Tensor<T>>& parameters() { return params_; }
  const std::vector<Tensor<T>>& parameters() const { return params_; }
  size_t parameter_count() const { return param_count_; }
  const std::vector<Layer<T>>& layers() const { return layers_; }
  // Flat offset of each parameter tensor in the concatenated layout.
  const std::vector<size_t>& parameter_offsets() const { return offsets_; }

  Network clone() const {
    Network out;
    out.layers_.reserve(layers_.size());
    for (const Layer<T>& layer : layers_) {
      Layer<T> c;
      c.spec = layer.spec;
      if (layer.weight.defined()) c.weight = layer.weight.clone();
      if (layer.bias.defined()) c.bias = layer.bias.clone();
      out.layers_.push_back(std::move(c));
    }
    out.rebuild_param_index();
    return out;
  }

  bool same_structure(const Network& o) const {
    if (layers_.size() != o.layers_.size()) return false;
    for (size_t i = 0; i < layers_.size(); ++i)
      if (!(layers_[i].spec == o.layers_[i].spec)) return false;
    return true;
  }

  void set_requires_grad(bool on) {
    for (auto& p : params_) {
      p.storage_ptr()->requires_grad = on;
      p.storage_ptr()->needs_grad = on;
    }
  }

  std::vector<T> flat() const {
    std::vector<T> out;
    out.reserve(param_count_);
    for (const auto& p : params_) out.insert(out.end(), p.data().begin(), p.data().end());
    return out;
  }

  void set_from_flat(std::span<const T> values) {
    if (values.size() != param_count_)
      throw ShapeError("set_from_flat: got " + std::to_string(values.size()) + " values for " +
                       std::to_string(param_count_) + " parameters");
    size_t off = 0;
    for (auto& p : params_) {
      auto pv = p.data();
      std::copy(values.begin() + off, values.begin() + off + pv.size(), pv.begin());
      off += pv.size();
    }
  }

  std::vector<LayerSpec> specs() const {
    std::vector<LayerSpec> out;
    out.reserve(layers_.size());
    for (const auto& l : layers_) out.push_back(l.spec);
    return out;
  }

 private:
  static void init_uniform(Layer<T>& layer, double fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(fan_in);
    for (auto& v : layer.weight.data()) v = static_cast<T>(rng.uniform(-bound, bound));
    for (auto& v : layer.bias.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  }

  void rebuild_param_index() {
    params_.clear();
    offsets_.clear();
    param_count_ = 0;
    for (auto& layer : layers_) {
      if (layer.weight.defined()) {
        offsets_.push_back(param_count_);
        params_.push_back(layer.weight);
        param_count_ += static_cast<size_t>(layer.weight.numel());
      }
      if (layer.bias.defined()) {
        offsets_.push_back(param_count_);
        params_.push_back(layer.bias);
        param_count_ += static_cast<size_t>(layer.bias.numel());
      }
    }
  }

  std::vector<Layer<T>> layers_;
  std::vector<Tensor<T>> params_;
  std::vector<size_t> offsets_;
  size_t param_count_ = 0;
};

// target <- alpha * target + (1 - alpha) * source, parameter-wise.
template <typename T>
void ema_update(Network<T>& target, const Network<T>& source, double alpha) {
  if (!target.same_structure(source))
    throw ShapeError("ema_update: networks have different structure");
  const T a = static_cast<T>(alpha);
  const T b = static_cast<T>(1.0 - alpha);
  auto& tp = target.parameters();
  const auto& sp = source.parameters();
  for (size_t i = 0; i < tp.size(); ++i) {
    auto tv = tp[i].data();
    auto sv = sp[i].data();
    for (size_t j = 0; j < tv.size(); ++j) tv[j] = a * tv[j] + b * sv[j];
  }
}

// Two hidden ReLU layers; the default hidden width matches the backbone used
// for all MNIST-family experiments (784-100-100-classes).
template <typename T>
Network<T> build_mlp(int64_t input_dim, int64_t classes, Rng& rng, int64_t hidden = 100) {
  if (input_dim <= 0 || classes <= 0 || hidden <= 0)
    throw ConfigError("build_mlp: dimensions must be positive");
  return Network<T>(
      {
          LayerSpec::flatten(),
          LayerSpec::dense(input_dim, hidden),
          LayerSpec::relu(),
          LayerSpec::dense(hidden, hidden),
          LayerSpec::relu(),
          LayerSpec::dense(hidden, classes),
      },
      &rng);
}

// Conv(c,8,3)-ReLU-Conv(8,16,3)-ReLU-Flatten-Dense. Stride 1, no padding, so
// hw x hw inputs shrink to (hw-4) x (hw-4) before the head (24 x 24 for 28).
template <typename T>
Network<T> build_small_cnn(int64_t channels, int64_t classes, Rng& rng, int64_t hw = 28) {
  if (channels <= 0 || classes <= 0 || hw <= 4)
    throw ConfigError("build_small_cnn: bad channels/classes/input size");
  const int64_t side = hw - 4;
  return Network<T>(
      {
          LayerSpec::conv2d(channels, 8, 3),
          LayerSpec::relu(),
          LayerSpec::conv2d(8, 16, 3),
          LayerSpec::relu(),
          LayerSpec::flatten(),
          LayerSpec::dense(16 * side * side, classes),
      },
      &rng);
}

// Conv filters form parameter groups (one group per output filter, covering
// that filter's kernel slice); every other parameter is its own group.
struct FilterMap {
  std::vector<uint32_t> group_of;    // flat param index -> group id
  std::vector<uint32_t> group_size;  // group id -> member count
  uint32_t group_count = 0;
};

template <typename T>
FilterMap build_filter_map(const Network<T>& net) {
  FilterMap fm;
  fm.group_of.reserve(net.parameter_count());
  auto add_group = [&fm](size_t members) {
    for (size_t i = 0; i < members; ++i) fm.group_of.push_back(fm.group_count);
    fm.group_size.push_back(static_cast<uint32_t>(members));
    ++fm.group_count;
  };
  for (const auto& layer : net.layers()) {
    switch (layer.spec.kind) {
      case LayerKind::Dense:
        for (int64_t i = 0; i < layer.weight.numel(); ++i) add_group(1);
        for (int64_t i = 0; i < layer.bias.numel(); ++i) add_group(1);
        break;
      case LayerKind::Conv2d: {
        const size_t filter_len =
            static_cast<size_t>(layer.spec.cin * layer.spec.k * layer.spec.k);
        for (int64_t f = 0; f < layer.spec.cout; ++f) add_group(filter_len);
        for (int64_t i = 0; i < layer.bias.numel(); ++i) add_group(1);
        break;
      }
      case LayerKind::ReLU:
      case LayerKind::Flatten:
        break;
    }
  }
  return fm;
}

// Checkpoint: one-line JSON header (layer specs, param count, fisher flag)
// followed by raw little-endian scalars. Implemented in checkpoint.cpp.
template <typename T>
struct Checkpoint {
  Network<T> network;
  std::vector<T> fisher;
  bool has_fisher = false;
};

template <typename T>
void save_checkpoint(const Network<T>& net, const std::string& path,
                     const std::vector<T>* fisher = nullptr);

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path);

}  // namespace synergy
