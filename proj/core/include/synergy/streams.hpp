#pragma once

#include <algorithm>
#include <cstdint>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "synergy/dataset.hpp"
#include "synergy/image.hpp"
#include "synergy/rng.hpp"
#include "synergy/tensor.hpp"

namespace synergy {

template <typename T>
struct StreamBatch {
  Tensor<T> inputs;  // {n, ...item_shape}
  std::vector<int32_t> labels;
  int64_t step = 0;
};

// A held-out evaluation slice: rows of the test set plus the transform the
// scenario applies to them. Materialized on demand so that rotated variants
// of the full test set are never all resident at once.
template <typename T>
struct EvalTask {
  std::string name;
  const LabeledDataset<T>* base = nullptr;
  std::vector<uint32_t> rows;
  double angle = 0.0;          // fixed rotation, degrees
  std::vector<double> angles;  // per-row schedule, parallel to rows (overrides angle)
  int32_t class_count = 0;

  LabeledDataset<T> materialize() const {
    LabeledDataset<T> out;
    out.input_shape = base->input_shape;
    out.class_count = class_count;
    out.name = name;
    const size_t dim = static_cast<size_t>(base->sample_numel());
    out.inputs.resize(rows.size() * dim);
    out.labels.resize(rows.size());
    const bool image = base->input_shape.size() == 3;
    for (size_t i = 0; i < rows.size(); ++i) {
      auto src = base->sample(rows[i]);
      std::span<T> dst{out.inputs.data() + i * dim, dim};
      const double deg = angles.empty() ? angle : angles[i];
      if (image && deg != 0.0)
        rotate_chw(src, dst, base->input_shape[0], base->input_shape[1], base->input_shape[2],
                   deg);
      else
        std::copy(src.begin(), src.end(), dst.begin());
      out.labels[i] = base->labels[rows[i]];
    }
    return out;
  }
};

enum class GcilWeighting { Uniform, Longtail };

// A fully precomputed batch schedule over a training set. next() yields
// batches in order; the transform (none / per-task rotation / per-sample
// rotation schedule) is applied lazily per batch, so rotated copies of the
// training set are never materialized.
template <typename T>
class Stream {
 public:
  enum class Transform { None, TaskAngle, PerSample };

  struct Segment {
    std::vector<uint32_t> rows;
    double angle = 0.0;
    std::vector<double> angles;  // per-row, parallel to rows (PerSample only)
    int32_t task = 0;
    bool task_end = false;
  };

  std::optional<StreamBatch<T>> next() {
    boundary_ = -1;
    if (seg_ >= segments_.size()) return std::nullopt;
    Segment& seg = segments_[seg_];
    const size_t n = std::min(static_cast<size_t>(batch_), seg.rows.size() - pos_);
    StreamBatch<T> batch;
    batch.step = step_;
    batch.labels.resize(n);
    Shape shape;
    shape.push_back(static_cast<int64_t>(n));
    shape.insert(shape.end(), item_shape_.begin(), item_shape_.end());
    batch.inputs = Tensor<T>(shape);
    const size_t dim = static_cast<size_t>(train_->sample_numel());
    auto bv = batch.inputs.data();
    const bool image = item_shape_.size() == 3;
    for (size_t i = 0; i < n; ++i) {
      const uint32_t row = seg.rows[pos_ + i];
      auto src = train_->sample(row);
      std::span<T> dst{bv.data() + i * dim, dim};
      double deg = 0.0;
      if (transform_ == Transform::TaskAngle) deg = seg.angle;
      if (transform_ == Transform::PerSample) deg = seg.angles[pos_ + i];
      if (image && deg != 0.0)
        rotate_chw(src, dst, item_shape_[0], item_shape_[1], item_shape_[2], deg);
      else
        std::copy(src.begin(), src.end(), dst.begin());
      batch.labels[i] = train_->labels[row];
    }
    pos_ += n;
    ++step_;
    if (pos_ == seg.rows.size()) {
      if (seg.task_end) boundary_ = seg.task;
      ++seg_;
      pos_ = 0;
    }
    return batch;
  }

  // Index of the task whose final batch was just returned, or -1.
  int32_t boundary_crossed() const { return boundary_; }
  bool has_boundaries() const { return expose_boundaries_; }
  int64_t total_steps() const { return total_steps_; }
  int64_t total_samples() const { return total_samples_; }
  int32_t train_task_count() const { return train_task_count_; }
  int32_t class_count() const { return classes_; }
  const Shape& item_shape() const { return item_shape_; }
  const std::string& name() const { return name_; }
  const std::vector<EvalTask<T>>& eval_tasks() const { return eval_tasks_; }
  // class -> eval-task index; empty unless the scenario partitions classes.
  const std::vector<int32_t>& task_of_class() const { return task_of_class_; }
  const std::vector<double>& task_angles() const { return task_angles_; }

  // Training data of one finished task with its transform applied; only
  // boundary-bearing scenarios provide this (it backs the oEWC baseline).
  LabeledDataset<T> materialize_task_train(int32_t t) const {
    if (!expose_boundaries_)
      throw StateError("stream '" + name_ + "' does not expose task boundaries");
    const auto& rows = task_train_rows_.at(static_cast<size_t>(t));
    LabeledDataset<T> out;
    out.input_shape = train_->input_shape;
    out.class_count = classes_;
    out.name = name_ + "/task_" + std::to_string(t);
    const size_t dim = static_cast<size_t>(train_->sample_numel());
    out.inputs.resize(rows.size() * dim);
    out.labels.resize(rows.size());
    const bool image = item_shape_.size() == 3;
    const double deg = transform_ == Transform::TaskAngle ? task_angles_[t] : 0.0;
    for (size_t i = 0; i < rows.size(); ++i) {
      auto src = train_->sample(rows[i]);
      std::span<T> dst{out.inputs.data() + i * dim, dim};
      if (image && deg != 0.0)
        rotate_chw(src, dst, item_shape_[0], item_shape_[1], item_shape_[2], deg);
      else
        std::copy(src.begin(), src.end(), dst.begin());
      out.labels[i] = train_->labels[rows[i]];
    }
    return out;
  }

  template <typename U>
  friend Stream<U> make_class_il_stream(const LabeledDataset<U>&, const LabeledDataset<U>&,
                                        int32_t, int64_t, int64_t, uint64_t);
  template <typename U>
  friend Stream<U> make_rotated_stream(const LabeledDataset<U>&, const LabeledDataset<U>&,
                                       int32_t, int64_t, int64_t, uint64_t, double);
  template <typename U>
  friend Stream<U> make_blurry360_stream(const LabeledDataset<U>&, const LabeledDataset<U>&,
                                         int32_t, int64_t, uint64_t, double);
  template <typename U>
  friend Stream<U> make_gcil_stream(const LabeledDataset<U>&, const LabeledDataset<U>&, int32_t,
                                    int64_t, int32_t, GcilWeighting, uint64_t, int64_t, int64_t,
                                    uint64_t);

 private:
  void finalize() {
    total_steps_ = 0;
    int64_t samples = 0;
    for (const Segment& s : segments_) {
      if (s.rows.empty())
        throw ConfigError("stream task " + std::to_string(s.task) + " has no samples");
      total_steps_ += static_cast<int64_t>((s.rows.size() + batch_ - 1) / batch_);
      samples += static_cast<int64_t>(s.rows.size());
    }
    total_samples_ = samples;
  }

  const LabeledDataset<T>* train_ = nullptr;
  std::vector<Segment> segments_;
  size_t seg_ = 0, pos_ = 0;
  int64_t step_ = 0;
  int64_t batch_ = 1;
  Transform transform_ = Transform::None;
  int64_t total_samples_ = 0;
  bool expose_boundaries_ = false;
  int32_t boundary_ = -1;
  int32_t train_task_count_ = 0;
  std::vector<EvalTask<T>> eval_tasks_;
  std::vector<int32_t> task_of_class_;
  std::vector<std::vector<uint32_t>> task_train_rows_;
  std::vector<double> task_angles_;
  int32_t classes_ = 0;
  Shape item_shape_;
  std::string name_;
  int64_t total_steps_ = 0;
};

namespace detail {

inline std::vector<std::vector<uint32_t>> rows_by_class(const std::vector<int32_t>& labels,
                                                        int32_t classes) {
  std::vector<std::vector<uint32_t>> out(static_cast<size_t>(classes));
  for (size_t i = 0; i < labels.size(); ++i)
    out[static_cast<size_t>(labels[i])].push_back(static_cast<uint32_t>(i));
  return out;
}

// Splits `budget` into `weights.size()` integer counts proportional to the
// weights, each at least 1, using largest-remainder rounding.
inline std::vector<int64_t> proportional_counts(int64_t budget, const std::vector<double>& w) {
  const size_t k = w.size();
  if (budget < static_cast<int64_t>(k))
    throw ConfigError("sample budget smaller than the number of classes in the task");
  double total = 0.0;
  for (double v : w) total += v;
  std::vector<int64_t> counts(k);
  std::vector<std::pair<double, size_t>> fracs(k);
  int64_t assigned = 0;
  for (size_t i = 0; i < k; ++i) {
    const double ideal = static_cast<double>(budget) * w[i] / total;
    counts[i] = std::max<int64_t>(1, static_cast<int64_t>(ideal));
    fracs[i] = {ideal - std::floor(ideal), i};
    assigned += counts[i];
  }
  std::sort(fracs.begin(), fracs.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  size_t cursor = 0;
  while (assigned < budget) {
    counts[fracs[cursor % k].second] += 1;
    ++assigned;
    ++cursor;
  }
  while (assigned > budget) {
    // Over-assignment can only come from the >=1 clamp; shave the largest.
    const size_t big = static_cast<size_t>(
        std::max_element(counts.begin(), counts.end()) - counts.begin());
    if (counts[big] <= 1) throw ConfigError("cannot satisfy per-class minimum of 1");
    counts[big] -= 1;
    --assigned;
  }
  return counts;
}

}  // namespace detail

// Class-incremental: classes split contiguously into n_tasks groups, one
// task trained after another, each task's data shuffled per epoch.
template <typename T>
Stream<T> make_class_il_stream(const LabeledDataset<T>& train, const LabeledDataset<T>& test,
                               int32_t n_tasks, int64_t batch, int64_t epochs, uint64_t seed) {
  if (n_tasks <= 0 || batch <= 0 || epochs <= 0)
    throw ConfigError("class-il stream needs positive n_tasks, batch, epochs");
  const int32_t classes = train.class_count;
  if (classes % n_tasks != 0)
    throw ConfigError("class count " + std::to_string(classes) + " not divisible into " +
                      std::to_string(n_tasks) + " tasks");
  Stream<T> s;
  s.train_ = &train;
  s.batch_ = batch;
  s.classes_ = classes;
  s.item_shape_ = train.input_shape;
  s.name_ = "class_il";
  s.expose_boundaries_ = true;
  s.train_task_count_ = n_tasks;
  s.transform_ = Stream<T>::Transform::None;
  const int32_t per_task = classes / n_tasks;
  auto train_rows = detail::rows_by_class(train.labels, classes);
  auto test_rows = detail::rows_by_class(test.labels, classes);
  s.task_of_class_.resize(static_cast<size_t>(classes));
  Rng order(derive_seed(seed, RngStream::StreamOrder));
  for (int32_t t = 0; t < n_tasks; ++t) {
    std::vector<uint32_t> rows;
    std::vector<uint32_t> eval_rows;
    for (int32_t c = t * per_task; c < (t + 1) * per_task; ++c) {
      rows.insert(rows.end(), train_rows[c].begin(), train_rows[c].end());
      eval_rows.insert(eval_rows.end(), test_rows[c].begin(), test_rows[c].end());
      s.task_of_class_[static_cast<size_t>(c)] = t;
    }
    s.task_train_rows_.push_back(rows);
    for (int64_t e = 0; e < epochs; ++e) {
      typename Stream<T>::Segment seg;
      seg.rows = rows;
      shuffle(std::span<uint32_t>(seg.rows), order);
      seg.task = t;
      seg.task_end = e == epochs - 1;
      s.segments_.push_back(std::move(seg));
    }
    EvalTask<T> ev;
    ev.name = "task_" + std::to_string(t);
    ev.base = &test;
    ev.rows = std::move(eval_rows);
    ev.class_count = classes;
    s.eval_tasks_.push_back(std::move(ev));
  }
  s.finalize();
  return s;
}

// Domain-incremental: every task is the full training set under its own
// rotation angle, drawn i.i.d. from U(0, max_angle) degrees.
template <typename T>
Stream<T> make_rotated_stream(const LabeledDataset<T>& train, const LabeledDataset<T>& test,
                              int32_t n_tasks, int64_t batch, int64_t epochs, uint64_t seed,
                              double max_angle) {
  if (n_tasks <= 0 || batch <= 0 || epochs <= 0)
    throw ConfigError("rotated stream needs positive n_tasks, batch, epochs");
  if (train.input_shape.size() != 3)
    throw ConfigError("rotated stream needs image data [C, H, W]");
  Stream<T> s;
  s.train_ = &train;
  s.batch_ = batch;
  s.classes_ = train.class_count;
  s.item_shape_ = train.input_shape;
  s.name_ = "rotated";
  s.expose_boundaries_ = true;
  s.train_task_count_ = n_tasks;
  s.transform_ = Stream<T>::Transform::TaskAngle;
  Rng angle_rng(derive_seed(seed, RngStream::TaskParams));
  for (int32_t t = 0; t < n_tasks; ++t) s.task_angles_.push_back(angle_rng.uniform(0.0, max_angle));
  std::vector<uint32_t> all(train.size());
  std::iota(all.begin(), all.end(), 0u);
  std::vector<uint32_t> test_all(test.size());
  std::iota(test_all.begin(), test_all.end(), 0u);
  Rng order(derive_seed(seed, RngStream::StreamOrder));
  for (int32_t t = 0; t < n_tasks; ++t) {
    s.task_train_rows_.push_back(all);
    for (int64_t e = 0; e < epochs; ++e) {
      typename Stream<T>::Segment seg;
      seg.rows = all;
      shuffle(std::span<uint32_t>(seg.rows), order);
      seg.angle = s.task_angles_[static_cast<size_t>(t)];
      seg.task = t;
      seg.task_end = e == epochs - 1;
      s.segments_.push_back(std::move(seg));
    }
    EvalTask<T> ev;
    ev.name = "task_" + std::to_string(t);
    ev.base = &test;
    ev.rows = test_all;
    ev.angle = s.task_angles_[static_cast<size_t>(t)];
    ev.class_count = train.class_count;
    s.eval_tasks_.push_back(std::move(ev));
  }
  s.finalize();
  return s;
}

// General-incremental digit stream: digits 0-8 in `rounds` rounds of the 9
// consecutive pairs {0,1},{1,2},...,{8,0}. Each digit's samples are split
// into 2*rounds chunks, one per appearance, and batches interleave the
// pair's two digits. Every digit follows its own rotation schedule: its
// angle advances by sweep/N_d per occurrence, completing the full sweep
// across its N_d stream samples, so consecutive appearances of a digit
// differ by about sweep/(2*rounds) degrees. The held-out digits are swept
// the same way. Single-pass by construction; no task boundaries exposed.
template <typename T>
Stream<T> make_blurry360_stream(const LabeledDataset<T>& train, const LabeledDataset<T>& test,
                                int32_t rounds, int64_t batch, uint64_t seed, double sweep) {
  if (rounds <= 0 || batch <= 0) throw ConfigError("blurry360 stream needs positive rounds, batch");
  if (train.input_shape.size() != 3)
    throw ConfigError("blurry360 stream needs image data [C, H, W]");
  if (train.class_count < 9) throw ConfigError("blurry360 stream needs at least 9 classes");
  constexpr int32_t kDigits = 9;
  Stream<T> s;
  s.train_ = &train;
  s.batch_ = batch;
  s.classes_ = kDigits;
  s.item_shape_ = train.input_shape;
  s.name_ = "blurry360";
  s.expose_boundaries_ = false;
  s.train_task_count_ = rounds * kDigits;
  s.transform_ = Stream<T>::Transform::PerSample;
  Rng order(derive_seed(seed, RngStream::StreamOrder));
  auto by_class = detail::rows_by_class(train.labels, train.class_count);
  const int32_t appearances = 2 * rounds;
  std::vector<std::vector<std::vector<uint32_t>>> chunks(kDigits);
  for (int32_t d = 0; d < kDigits; ++d) {
    auto rows = by_class[static_cast<size_t>(d)];
    if (rows.empty()) throw ConfigError("blurry360: digit " + std::to_string(d) + " has no data");
    shuffle(std::span<uint32_t>(rows), order);
    const size_t n = rows.size();
    const size_t base = n / static_cast<size_t>(appearances);
    const size_t extra = n % static_cast<size_t>(appearances);
    size_t off = 0;
    for (int32_t a = 0; a < appearances; ++a) {
      const size_t len = base + (static_cast<size_t>(a) < extra ? 1 : 0);
      chunks[d].emplace_back(rows.begin() + off, rows.begin() + off + len);
      off += len;
    }
  }
  std::vector<int32_t> next_chunk(kDigits, 0);
  for (int32_t k = 0; k < rounds * kDigits; ++k) {
    const int32_t a = k % kDigits;
    const int32_t b = (a + 1) % kDigits;
    const auto& ca = chunks[a][static_cast<size_t>(next_chunk[a]++)];
    const auto& cb = chunks[b][static_cast<size_t>(next_chunk[b]++)];
    typename Stream<T>::Segment seg;
    seg.rows.reserve(ca.size() + cb.size());
    const size_t common = std::min(ca.size(), cb.size());
    for (size_t i = 0; i < common; ++i) {
      seg.rows.push_back(ca[i]);
      seg.rows.push_back(cb[i]);
    }
    for (size_t i = common; i < ca.size(); ++i) seg.rows.push_back(ca[i]);
    for (size_t i = common; i < cb.size(); ++i) seg.rows.push_back(cb[i]);
    seg.task = k;
    seg.task_end = true;
    s.segments_.push_back(std::move(seg));
  }
  std::vector<int64_t> seen(kDigits, 0);
  for (auto& seg : s.segments_) {
    seg.angles.reserve(seg.rows.size());
    for (uint32_t row : seg.rows) {
      const int32_t d = train.labels[row];
      const auto total = static_cast<double>(by_class[static_cast<size_t>(d)].size());
      seg.angles.push_back(sweep * static_cast<double>(seen[d]++) / total);
    }
  }
  EvalTask<T> ev;
  ev.name = "stream";
  ev.base = &test;
  std::vector<int64_t> test_total(kDigits, 0);
  for (int32_t l : test.labels)
    if (l < kDigits) ++test_total[l];
  std::vector<int64_t> test_seen(kDigits, 0);
  for (size_t i = 0; i < test.labels.size(); ++i) {
    const int32_t l = test.labels[i];
    if (l >= kDigits) continue;
    ev.rows.push_back(static_cast<uint32_t>(i));
    ev.angles.push_back(sweep * static_cast<double>(test_seen[l]++) /
                        static_cast<double>(test_total[l]));
  }
  ev.class_count = kDigits;
  s.eval_tasks_.push_back(std::move(ev));
  s.finalize();
  return s;
}

// Generalized class-incremental: every task draws a class subset and sample
// budget from a dedicated composition seed (shared across run seeds, so the
// stream contents are an experimental constant); only the within-task order
// comes from the run's stream seed. Classes may recur across tasks.
template <typename T>
Stream<T> make_gcil_stream(const LabeledDataset<T>& train, const LabeledDataset<T>& test,
                           int32_t n_tasks, int64_t samples_per_task, int32_t max_classes,
                           GcilWeighting weighting, uint64_t gil_seed, int64_t batch,
                           int64_t epochs, uint64_t seed) {
  if (n_tasks <= 0 || batch <= 0 || epochs <= 0 || samples_per_task <= 0)
    throw ConfigError("gcil stream needs positive n_tasks, batch, epochs, samples_per_task");
  const int32_t classes = train.class_count;
  max_classes = std::min(max_classes, classes);
  if (max_classes < 2) throw ConfigError("gcil stream needs at least 2 choosable classes");
  Stream<T> s;
  s.train_ = &train;
  s.batch_ = batch;
  s.classes_ = classes;
  s.item_shape_ = train.input_shape;
  s.name_ = "gcil";
  s.expose_boundaries_ = false;
  s.train_task_count_ = n_tasks;
  s.transform_ = Stream<T>::Transform::None;
  auto pools = detail::rows_by_class(train.labels, classes);
  Rng comp(gil_seed);
  Rng order(derive_seed(seed, RngStream::StreamOrder));
  for (int32_t t = 0; t < n_tasks; ++t) {
    const int32_t k = 2 + static_cast<int32_t>(comp.uniform_int(
                              static_cast<uint64_t>(max_classes - 1)));
    std::vector<int32_t> ids(static_cast<size_t>(classes));
    std::iota(ids.begin(), ids.end(), 0);
    std::vector<int32_t> chosen;
    for (int32_t i = 0; i < k; ++i) {
      const size_t j = static_cast<size_t>(i) +
                       static_cast<size_t>(comp.uniform_int(static_cast<uint64_t>(classes - i)));
      std::swap(ids[static_cast<size_t>(i)], ids[j]);
      chosen.push_back(ids[static_cast<size_t>(i)]);
    }
    std::vector<double> weights(static_cast<size_t>(k));
    for (int32_t i = 0; i < k; ++i)
      weights[static_cast<size_t>(i)] = weighting == GcilWeighting::Uniform ? 1.0
                                                                            : std::pow(0.8, i);
    const auto counts = detail::proportional_counts(samples_per_task, weights);
    std::vector<uint32_t> rows;
    rows.reserve(static_cast<size_t>(samples_per_task));
    for (int32_t i = 0; i < k; ++i) {
      auto& pool = pools[static_cast<size_t>(chosen[static_cast<size_t>(i)])];
      if (pool.empty())
        throw ConfigError("gcil: class " + std::to_string(chosen[static_cast<size_t>(i)]) +
                          " has no training data");
      const int64_t want = counts[static_cast<size_t>(i)];
      if (want <= static_cast<int64_t>(pool.size())) {
        // distinct rows via partial shuffle of a scratch copy
        std::vector<uint32_t> scratch = pool;
        for (int64_t j = 0; j < want; ++j) {
          const size_t pick = static_cast<size_t>(j) + static_cast<size_t>(comp.uniform_int(
                                                          scratch.size() - static_cast<size_t>(j)));
          std::swap(scratch[static_cast<size_t>(j)], scratch[pick]);
          rows.push_back(scratch[static_cast<size_t>(j)]);
        }
      } else {
        std::cerr << "gcil: class " << chosen[static_cast<size_t>(i)] << " has only "
                  << pool.size() << " rows for a budget of " << want
                  << "; sampling with replacement\n";
        for (int64_t j = 0; j < want; ++j)
          rows.push_back(pool[static_cast<size_t>(comp.uniform_int(pool.size()))]);
      }
    }
    s.task_train_rows_.push_back(rows);
    for (int64_t e = 0; e < epochs; ++e) {
      typename Stream<T>::Segment seg;
      seg.rows = rows;
      shuffle(std::span<uint32_t>(seg.rows), order);
      seg.task = t;
      seg.task_end = e == epochs - 1;
      s.segments_.push_back(std::move(seg));
    }
  }
  EvalTask<T> ev;
  ev.name = "all_classes";
  ev.base = &test;
  ev.rows.resize(test.size());
  std::iota(ev.rows.begin(), ev.rows.end(), 0u);
  ev.class_count = classes;
  s.eval_tasks_.push_back(std::move(ev));
  s.finalize();
  return s;
}

}  // namespace synergy
