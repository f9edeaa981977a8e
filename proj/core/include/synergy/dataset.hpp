#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "synergy/errors.hpp"
#include "synergy/rng.hpp"
#include "synergy/tensor.hpp"

namespace synergy {

// In-memory labeled dataset; inputs are stored flat, sample-major.
template <typename T>
struct LabeledDataset {
  Shape input_shape;            // per-sample shape, e.g. {1, 28, 28} or {dim}
  std::vector<T> inputs;        // size() * sample_numel() values
  std::vector<int32_t> labels;  // values in [0, class_count)
  int32_t class_count = 0;
  std::string name;

  size_t size() const { return labels.size(); }
  int64_t sample_numel() const { return shape_numel(input_shape); }

  std::span<const T> sample(size_t i) const {
    const size_t d = static_cast<size_t>(sample_numel());
    return {inputs.data() + i * d, d};
  }

  // Gathers the given rows into a batch tensor of shape {n, ...input_shape}.
  Tensor<T> gather(std::span<const uint32_t> rows) const {
    Shape shape;
    shape.push_back(static_cast<int64_t>(rows.size()));
    shape.insert(shape.end(), input_shape.begin(), input_shape.end());
    Tensor<T> out(shape);
    const size_t d = static_cast<size_t>(sample_numel());
    auto ov = out.data();
    for (size_t r = 0; r < rows.size(); ++r)
      std::copy_n(inputs.data() + static_cast<size_t>(rows[r]) * d, d, ov.data() + r * d);
    return out;
  }
};

// Reads an IDX image/label file pair (the MNIST container format).
// Images are scaled to [0, 1]; shape {1, H, W}. Malformed input raises
// FormatError naming the offending byte offset. Implemented in dataset_io.cpp.
template <typename T>
LabeledDataset<T> load_idx(const std::string& images_path, const std::string& labels_path);

// Writes the dataset back out as an IDX pair (values rounded to bytes via
// round(v * 255); intended for [0, 1] image data). Round-trips bit-exactly
// with load_idx on byte-valued data.
template <typename T>
void save_idx(const LabeledDataset<T>& ds, const std::string& images_path,
              const std::string& labels_path);

// Isotropic unit-variance Gaussian blobs, class c centered at separation*e_c.
// Values are clipped to [-4, separation + 4] and min-max scaled to [0, 1]
// with those fixed bounds (not data-dependent), so the generator is
// deterministic in (classes, dim, per_class, separation, seed) alone.
template <typename T>
LabeledDataset<T> synthetic_gaussians(int32_t classes, int64_t dim, int64_t per_class,
                                      double separation, uint64_t seed) {
  if (classes < 2) throw ConfigError("synthetic_gaussians: need at least 2 classes");
  if (dim < classes)
    throw ConfigError("synthetic_gaussians: dim must be >= classes so centers are distinct");
  if (per_class < 0) throw ConfigError("synthetic_gaussians: per_class must be >= 0");
  LabeledDataset<T> ds;
  ds.input_shape = {dim};
  ds.class_count = classes;
  ds.name = "synthetic";
  ds.inputs.reserve(static_cast<size_t>(classes) * per_class * dim);
  ds.labels.reserve(static_cast<size_t>(classes) * per_class);
  Rng rng(seed);
  const double lo = -4.0, hi = separation + 4.0;
  for (int32_t c = 0; c < classes; ++c) {
    for (int64_t s = 0; s < per_class; ++s) {
      for (int64_t d = 0; d < dim; ++d) {
        double v = rng.normal() + (d == c ? separation : 0.0);
        v = std::clamp(v, lo, hi);
        ds.inputs.push_back(static_cast<T>((v - lo) / (hi - lo)));
      }
      ds.labels.push_back(c);
    }
  }
  return ds;
}

// In-place (x - mean) / std over every input value.
template <typename T>
void normalize(LabeledDataset<T>& ds, double mean, double std_dev) {
  if (std_dev == 0.0) throw ConfigError("normalize: std must be non-zero");
  const T m = static_cast<T>(mean);
  const T inv = static_cast<T>(1.0 / std_dev);
  for (T& v : ds.inputs) v = (v - m) * inv;
}

}  // namespace synergy
