#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "synergy/network.hpp"
#include "synergy/rng.hpp"
#include "synergy/tensor.hpp"

namespace synergy {

template <typename T>
struct ReplayBatch {
  Tensor<T> inputs;             // {n, ...input_shape}
  std::vector<int32_t> labels;  // n
  Tensor<T> logits;             // {n, classes} when has_logits
  bool has_logits = false;
  size_t count = 0;
};

// Reservoir-sampled episodic memory. The k-th item ever offered (k counted
// from 1) draws j ~ U{0..k-1} once the buffer is full and lands in slot j
// iff j < capacity — i.e. inclusion probability capacity/k, evicted slot
// uniform. Replay sampling uses a separate internal RNG stream so that
// insertion and sampling decisions never perturb each other.
template <typename T>
class EpisodicBuffer {
 public:
  EpisodicBuffer() = default;

  EpisodicBuffer(size_t capacity, uint64_t seed, Shape input_shape, int32_t class_count)
      : capacity_(capacity),
        input_shape_(std::move(input_shape)),
        class_count_(class_count),
        reservoir_rng_(derive_seed(seed, RngStream::Reservoir)),
        replay_rng_(derive_seed(seed, RngStream::Replay)) {
    if (class_count_ <= 0) throw ConfigError("buffer needs a positive class count");
    sample_dim_ = static_cast<size_t>(shape_numel(input_shape_));
  }

  size_t capacity() const { return capacity_; }
  size_t size() const { return labels_.size(); }
  uint64_t seen_count() const { return seen_; }
  bool empty() const { return labels_.empty(); }
  const Shape& input_shape() const { return input_shape_; }
  int32_t class_count() const { return class_count_; }

  // Offers one item to the reservoir. Returns true if it was stored.
  bool add(std::span<const T> input, int32_t label, std::span<const T> logits = {}) {
    if (input.size() != sample_dim_)
      throw ShapeError("buffer add: input has " + std::to_string(input.size()) +
                       " values, expected " + std::to_string(sample_dim_));
    if (label < 0 || label >= class_count_)
      throw IndexError("buffer add: label " + std::to_string(label) + " out of range for " +
                       std::to_string(class_count_) + " classes");
    if (!logits.empty() && logits.size() != static_cast<size_t>(class_count_))
      throw ShapeError("buffer add: logits length " + std::to_string(logits.size()) +
                       " != class count " + std::to_string(class_count_));
    ++seen_;
    if (capacity_ == 0) return false;
    if (labels_.size() < capacity_) {
      append(input, label, logits);
      return true;
    }
    const uint64_t j = reservoir_rng_.uniform_int(seen_);
    if (j >= capacity_) return false;
    overwrite(static_cast<size_t>(j), input, label, logits);
    return true;
  }

  // Draws n items: without replacement when n <= size, with replacement
  // otherwise. Empty buffer yields nullopt (the learner's skip signal).
  std::optional<ReplayBatch<T>> sample(size_t n) {
    if (labels_.empty() || n == 0) return std::nullopt;
    std::vector<uint32_t> picks(n);
    const size_t len = labels_.size();
    if (n <= len) {
      std::vector<uint32_t> idx(len);
      std::iota(idx.begin(), idx.end(), 0u);
      for (size_t i = 0; i < n; ++i) {
        const size_t j = i + static_cast<size_t>(replay_rng_.uniform_int(len - i));
        std::swap(idx[i], idx[j]);
        picks[i] = idx[i];
      }
    } else {
      for (size_t i = 0; i < n; ++i)
        picks[i] = static_cast<uint32_t>(replay_rng_.uniform_int(len));
    }
    return materialize(picks);
  }

  std::vector<int64_t> class_histogram() const {
    std::vector<int64_t> counts(static_cast<size_t>(class_count_), 0);
    for (int32_t y : labels_) ++counts[static_cast<size_t>(y)];
    return counts;
  }

  const std::vector<int32_t>& labels() const { return labels_; }

  std::span<const T> item_input(size_t i) const {
    return {inputs_.data() + i * sample_dim_, sample_dim_};
  }

  // Serializes contents plus both RNG states so a restored buffer continues
  // the exact same draw sequence.
  void dump(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("buffer dump: cannot open " + path);
    out.write(kMagic, 8);
    write_u64(out, sizeof(T));
    write_u64(out, capacity_);
    write_u64(out, seen_);
    write_u64(out, labels_.size());
    write_u64(out, input_shape_.size());
    for (int64_t d : input_shape_) write_u64(out, static_cast<uint64_t>(d));
    write_u64(out, static_cast<uint64_t>(class_count_));
    for (uint64_t w : reservoir_rng_.state()) write_u64(out, w);
    for (uint64_t w : replay_rng_.state()) write_u64(out, w);
    write_bytes(out, labels_.data(), labels_.size() * sizeof(int32_t));
    write_bytes(out, inputs_.data(), inputs_.size() * sizeof(T));
    write_u64(out, has_logits_ ? 1 : 0);
    if (has_logits_) write_bytes(out, logits_.data(), logits_.size() * sizeof(T));
    if (!out) throw FormatError("buffer dump: write failed for " + path);
  }

  static EpisodicBuffer restore(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("buffer restore: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
      throw FormatError("buffer restore: bad magic at offset 0 in " + path);
    if (read_u64(in, path) != sizeof(T))
      throw FormatError("buffer restore: scalar width mismatch in " + path);
    EpisodicBuffer buf;
    buf.capacity_ = read_u64(in, path);
    buf.seen_ = read_u64(in, path);
    const uint64_t count = read_u64(in, path);
    const uint64_t ndim = read_u64(in, path);
    buf.input_shape_.resize(ndim);
    for (uint64_t i = 0; i < ndim; ++i)
      buf.input_shape_[i] = static_cast<int64_t>(read_u64(in, path));
    buf.class_count_ = static_cast<int32_t>(read_u64(in, path));
    buf.sample_dim_ = static_cast<size_t>(shape_numel(buf.input_shape_));
    std::array<uint64_t, 4> rs{}, ps{};
    for (auto& w : rs) w = read_u64(in, path);
    for (auto& w : ps) w = read_u64(in, path);
    buf.reservoir_rng_.set_state(rs);
    buf.replay_rng_.set_state(ps);
    buf.labels_.resize(count);
    read_bytes(in, buf.labels_.data(), count * sizeof(int32_t), path);
    buf.inputs_.resize(count * buf.sample_dim_);
    read_bytes(in, buf.inputs_.data(), buf.inputs_.size() * sizeof(T), path);
    buf.has_logits_ = read_u64(in, path) != 0;
    if (buf.has_logits_) {
      buf.logits_.resize(count * static_cast<size_t>(buf.class_count_));
      read_bytes(in, buf.logits_.data(), buf.logits_.size() * sizeof(T), path);
    }
    return buf;
  }

 private:
  static constexpr const char kMagic[9] = "SYNBUF01";

  void append(std::span<const T> input, int32_t label, std::span<const T> logits) {
    if (!logits.empty() && labels_.empty()) has_logits_ = true;
    if (logits.empty() != !has_logits_)
      throw StateError("buffer add: mixing items with and without stored logits");
    labels_.push_back(label);
    inputs_.insert(inputs_.end(), input.begin(), input.end());
    if (has_logits_) logits_.insert(logits_.end(), logits.begin(), logits.end());
  }

  void overwrite(size_t slot, std::span<const T> input, int32_t label, std::span<const T> logits) {
    if (logits.empty() != !has_logits_)
      throw StateError("buffer add: mixing items with and without stored logits");
    labels_[slot] = label;
    std::copy(input.begin(), input.end(), inputs_.begin() + slot * sample_dim_);
    if (has_logits_)
      std::copy(logits.begin(), logits.end(),
                logits_.begin() + slot * static_cast<size_t>(class_count_));
  }

  ReplayBatch<T> materialize(const std::vector<uint32_t>& picks) const {
    ReplayBatch<T> batch;
    batch.count = picks.size();
    Shape shape;
    shape.push_back(static_cast<int64_t>(picks.size()));
    shape.insert(shape.end(), input_shape_.begin(), input_shape_.end());
    batch.inputs = Tensor<T>(shape);
    batch.labels.resize(picks.size());
    auto iv = batch.inputs.data();
    for (size_t i = 0; i < picks.size(); ++i) {
      std::copy_n(inputs_.data() + static_cast<size_t>(picks[i]) * sample_dim_, sample_dim_,
                  iv.data() + i * sample_dim_);
      batch.labels[i] = labels_[picks[i]];
    }
    batch.has_logits = has_logits_;
    if (has_logits_) {
      const size_t c = static_cast<size_t>(class_count_);
      batch.logits = Tensor<T>({static_cast<int64_t>(picks.size()), class_count_});
      auto lv = batch.logits.data();
      for (size_t i = 0; i < picks.size(); ++i)
        std::copy_n(logits_.data() + static_cast<size_t>(picks[i]) * c, c, lv.data() + i * c);
    }
    return batch;
  }

  static void write_u64(std::ofstream& out, uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  static void write_bytes(std::ofstream& out, const void* p, size_t n) {
    out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  static uint64_t read_u64(std::ifstream& in, const std::string& path) {
    uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in)
      throw FormatError("buffer restore: truncated file at offset " +
                        std::to_string(static_cast<long long>(in.gcount())) + " in " + path);
    return v;
  }
  static void read_bytes(std::ifstream& in, void* p, size_t n, const std::string& path) {
    in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in) throw FormatError("buffer restore: truncated payload in " + path);
  }

  size_t capacity_ = 0;
  size_t sample_dim_ = 0;
  uint64_t seen_ = 0;
  Shape input_shape_;
  int32_t class_count_ = 0;
  bool has_logits_ = false;
  std::vector<T> inputs_;
  std::vector<int32_t> labels_;
  std::vector<T> logits_;
  Rng reservoir_rng_;
  Rng replay_rng_;
};

// EMA copy of the working model, updated stochastically: one U(0,1) draw per
// step, update fires iff update_prob > draw. The copy never requires grad.
template <typename T>
class SemanticMemory {
 public:
  SemanticMemory(const Network<T>& working, double alpha, double update_prob, uint64_t seed)
      : model_(working.clone()), alpha_(alpha), update_prob_(update_prob), gate_(seed) {
    if (alpha_ < 0.0 || alpha_ > 1.0) throw ConfigError("semantic alpha must be in [0, 1]");
    if (update_prob_ < 0.0 || update_prob_ > 1.0)
      throw ConfigError("semantic update probability must be in [0, 1]");
    model_.set_requires_grad(false);
  }

  bool maybe_update(const Network<T>& working) {
    const double a = gate_.uniform();
    if (update_prob_ > a) {
      ema_update(model_, working, alpha_);
      return true;
    }
    return false;
  }

  Network<T>& model() { return model_; }
  const Network<T>& model() const { return model_; }
  double alpha() const { return alpha_; }
  double update_prob() const { return update_prob_; }

 private:
  Network<T> model_;
  double alpha_;
  double update_prob_;
  Rng gate_;
};

}  // namespace synergy
