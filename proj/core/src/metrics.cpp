#include "synergy/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace synergy {

namespace {
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
}

TaskMatrix::TaskMatrix(int32_t tasks) : n(tasks) {
  if (tasks <= 0) throw ConfigError("task matrix needs at least one task");
  cells.assign(static_cast<size_t>(n) * n, kNan);
}

double& TaskMatrix::at(int32_t i, int32_t j) {
  if (i < 0 || i >= n || j < 0 || j >= n) throw IndexError("task matrix index out of range");
  return cells[static_cast<size_t>(i) * n + j];
}

double TaskMatrix::at(int32_t i, int32_t j) const {
  if (i < 0 || i >= n || j < 0 || j >= n) throw IndexError("task matrix index out of range");
  return cells[static_cast<size_t>(i) * n + j];
}

bool TaskMatrix::populated(int32_t i, int32_t j) const { return !std::isnan(at(i, j)); }

bool TaskMatrix::final_row_complete() const {
  for (int32_t j = 0; j < n; ++j)
    if (!populated(n - 1, j)) return false;
  return true;
}

double average_accuracy(const TaskMatrix& m) {
  if (m.n == 0 || !m.final_row_complete())
    throw StateError("average_accuracy: final row not fully populated");
  double acc = 0.0;
  for (int32_t j = 0; j < m.n; ++j) acc += m.at(m.n - 1, j);
  return acc / static_cast<double>(m.n);
}

double stability(const TaskMatrix& m) {
  if (m.n < 2) throw StateError("stability needs at least two tasks");
  if (!m.final_row_complete()) throw StateError("stability: final row not fully populated");
  double acc = 0.0;
  for (int32_t j = 0; j < m.n - 1; ++j) acc += m.at(m.n - 1, j);
  return acc / static_cast<double>(m.n - 1);
}

double plasticity(const TaskMatrix& m) {
  if (m.n == 0) throw StateError("plasticity on an empty matrix");
  double acc = 0.0;
  for (int32_t i = 0; i < m.n; ++i) {
    if (!m.populated(i, i)) throw StateError("plasticity: diagonal not fully populated");
    acc += m.at(i, i);
  }
  return acc / static_cast<double>(m.n);
}

double tradeoff(double stability_value, double plasticity_value) {
  if (stability_value < 0.0 || plasticity_value < 0.0)
    throw ConfigError("tradeoff inputs must be non-negative");
  const double s = stability_value + plasticity_value;
  if (s == 0.0) return 0.0;
  return 2.0 * stability_value * plasticity_value / s;
}

CalibrationResult expected_calibration_error(std::span<const double> probs, int64_t classes,
                                             std::span<const int32_t> labels, int32_t bins) {
  if (classes <= 0) throw ConfigError("ece: classes must be positive");
  if (bins <= 0) throw ConfigError("ece: bins must be positive");
  const size_t n = labels.size();
  if (probs.size() != n * static_cast<size_t>(classes))
    throw ShapeError("ece: probability matrix size does not match labels");
  if (n == 0) throw ValidationError("ece: empty sample set");
  std::vector<int64_t> count(static_cast<size_t>(bins), 0);
  std::vector<double> conf_sum(static_cast<size_t>(bins), 0.0);
  std::vector<double> acc_sum(static_cast<size_t>(bins), 0.0);
  for (size_t i = 0; i < n; ++i) {
    const double* row = probs.data() + i * static_cast<size_t>(classes);
    double sum = 0.0, best = -1.0;
    int64_t arg = 0;
    for (int64_t c = 0; c < classes; ++c) {
      if (row[c] < 0.0)
        throw ValidationError("ece: negative probability in row " + std::to_string(i));
      sum += row[c];
      if (row[c] > best) {
        best = row[c];
        arg = c;
      }
    }
    if (std::abs(sum - 1.0) > 1e-6)
      throw ValidationError("ece: probability row " + std::to_string(i) +
                            " sums to " + std::to_string(sum) + ", expected 1");
    // Equal-width bins over (0, 1]: bin k covers (k/bins, (k+1)/bins].
    int64_t b = static_cast<int64_t>(std::ceil(best * bins)) - 1;
    b = std::clamp<int64_t>(b, 0, bins - 1);
    count[static_cast<size_t>(b)] += 1;
    conf_sum[static_cast<size_t>(b)] += best;
    acc_sum[static_cast<size_t>(b)] += (arg == labels[i]) ? 1.0 : 0.0;
  }
  CalibrationResult out;
  out.bin_count = count;
  out.bin_confidence.assign(static_cast<size_t>(bins), 0.0);
  out.bin_accuracy.assign(static_cast<size_t>(bins), 0.0);
  for (int32_t b = 0; b < bins; ++b) {
    if (count[static_cast<size_t>(b)] == 0) continue;
    const double cnt = static_cast<double>(count[static_cast<size_t>(b)]);
    out.bin_confidence[static_cast<size_t>(b)] = conf_sum[static_cast<size_t>(b)] / cnt;
    out.bin_accuracy[static_cast<size_t>(b)] = acc_sum[static_cast<size_t>(b)] / cnt;
    out.ece += (cnt / static_cast<double>(n)) *
               std::abs(out.bin_accuracy[static_cast<size_t>(b)] -
                        out.bin_confidence[static_cast<size_t>(b)]);
  }
  return out;
}

std::vector<double> task_probabilities(std::span<const double> probs, int64_t classes,
                                       std::span<const int32_t> task_of_class) {
  if (static_cast<int64_t>(task_of_class.size()) != classes)
    throw ShapeError("task_probabilities: class->task map length mismatch");
  if (classes <= 0) throw ConfigError("task_probabilities: classes must be positive");
  if (probs.size() % static_cast<size_t>(classes) != 0)
    throw ShapeError("task_probabilities: probability matrix not divisible by class count");
  const size_t n = probs.size() / static_cast<size_t>(classes);
  if (n == 0) throw ValidationError("task_probabilities: empty sample set");
  int32_t tasks = 0;
  for (int32_t t : task_of_class) {
    if (t < 0) throw ConfigError("task_probabilities: negative task index");
    tasks = std::max(tasks, t + 1);
  }
  std::vector<double> out(static_cast<size_t>(tasks), 0.0);
  for (size_t i = 0; i < n; ++i) {
    const double* row = probs.data() + i * static_cast<size_t>(classes);
    for (int64_t c = 0; c < classes; ++c) out[static_cast<size_t>(task_of_class[c])] += row[c];
  }
  for (double& v : out) v /= static_cast<double>(n);
  return out;
}

double normalized_cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("normalized_cosine: length mismatch");
  double max_a = 0.0, max_b = 0.0;
  for (double v : a) max_a = std::max(max_a, std::abs(v));
  for (double v : b) max_b = std::max(max_b, std::abs(v));
  const bool zero_a = max_a == 0.0, zero_b = max_b == 0.0;
  if (zero_a && zero_b) return 1.0;
  if (zero_a || zero_b) return 0.0;
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double x = a[i] / max_a, y = b[i] / max_b;
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

void write_task_matrix_csv(const TaskMatrix& m, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out << "after_task";
  for (int32_t j = 0; j < m.n; ++j) out << ",task_" << j;
  out << "\n";
  char buf[64];
  for (int32_t i = 0; i < m.n; ++i) {
    bool any = false;
    for (int32_t j = 0; j < m.n; ++j) any = any || m.populated(i, j);
    if (!any) continue;
    out << i;
    for (int32_t j = 0; j < m.n; ++j) {
      out << ",";
      if (m.populated(i, j)) {
        std::snprintf(buf, sizeof(buf), "%.6f", m.at(i, j));
        out << buf;
      }
    }
    out << "\n";
  }
  if (!out) throw FormatError("write failed for " + path);
}

}  // namespace synergy
