#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "synergy/errors.hpp"
#include "synergy/network.hpp"

namespace synergy {

// Lower-triangular accuracy matrix: at(i, j) = accuracy (percent) on task j
// evaluated after training task i. Unpopulated cells are NaN.
struct TaskMatrix {
  int32_t n = 0;
  std::vector<double> cells;  // n * n, row-major

  TaskMatrix() = default;
  explicit TaskMatrix(int32_t tasks);

  double& at(int32_t i, int32_t j);
  double at(int32_t i, int32_t j) const;
  bool populated(int32_t i, int32_t j) const;
  bool final_row_complete() const;
};

// Mean of the final row (accuracy on every task after the last one).
double average_accuracy(const TaskMatrix& m);

// Mean of the final row excluding the last task: how well old tasks held up.
double stability(const TaskMatrix& m);

// Mean of the diagonal: accuracy on each task right after learning it.
double plasticity(const TaskMatrix& m);

// Harmonic mean of stability and plasticity; 0 when both are 0.
double tradeoff(double stability_value, double plasticity_value);

struct CalibrationResult {
  double ece = 0.0;
  std::vector<int64_t> bin_count;
  std::vector<double> bin_confidence;  // mean confidence per bin (populated bins)
  std::vector<double> bin_accuracy;    // empirical accuracy per bin
};

// Expected calibration error over row-stochastic probabilities (N x classes,
// row-major). Confidence is the max probability; bins are equal-width over
// (0, 1]. Rows must sum to 1 within 1e-6.
CalibrationResult expected_calibration_error(std::span<const double> probs, int64_t classes,
                                             std::span<const int32_t> labels, int32_t bins = 10);

// Mean softmax mass per task: for each sample, probabilities are summed over
// the classes belonging to each task, then averaged over samples. Output
// sums to 1 (a partition of the total probability mass).
std::vector<double> task_probabilities(std::span<const double> probs, int64_t classes,
                                       std::span<const int32_t> task_of_class);

// Cosine similarity with the conventions used for weight drift: vectors are
// first scaled by 1/max|v|; two zero vectors are perfectly similar (1), one
// zero vector is maximally dissimilar (0).
double normalized_cosine(std::span<const double> a, std::span<const double> b);

void write_task_matrix_csv(const TaskMatrix& m, const std::string& path);

// Mean, over weight-bearing layers, of the normalized cosine similarity
// between the two networks' flattened weight kernels (biases excluded).
template <typename T>
double layer_drift(const Network<T>& a, const Network<T>& b) {
  if (!a.same_structure(b)) throw ShapeError("layer_drift: networks differ in structure");
  double acc = 0.0;
  int64_t layers = 0;
  const auto& la = a.layers();
  const auto& lb = b.layers();
  for (size_t i = 0; i < la.size(); ++i) {
    if (!la[i].weight.defined()) continue;
    std::vector<double> va(la[i].weight.data().begin(), la[i].weight.data().end());
    std::vector<double> vb(lb[i].weight.data().begin(), lb[i].weight.data().end());
    acc += normalized_cosine(va, vb);
    ++layers;
  }
  if (layers == 0) throw ShapeError("layer_drift: no weight-bearing layers");
  return acc / static_cast<double>(layers);
}

}  // namespace synergy
