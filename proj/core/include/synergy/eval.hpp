#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "synergy/dataset.hpp"
#include "synergy/network.hpp"

namespace synergy {

// Top-1 accuracy in percent, batched forward without a tape.
template <typename T>
double evaluate_accuracy(const Network<T>& net, const LabeledDataset<T>& ds,
                         int64_t batch = 512) {
  if (ds.size() == 0) throw ConfigError("evaluate_accuracy: empty dataset");
  int64_t correct = 0;
  std::vector<uint32_t> rows(static_cast<size_t>(batch));
  for (size_t start = 0; start < ds.size(); start += static_cast<size_t>(batch)) {
    const size_t n = std::min(static_cast<size_t>(batch), ds.size() - start);
    rows.resize(n);
    for (size_t i = 0; i < n; ++i) rows[i] = static_cast<uint32_t>(start + i);
    Tensor<T> logits = net.forward(ds.gather(rows), nullptr);
    const int64_t classes = logits.dim(1);
    auto lv = logits.data();
    for (size_t i = 0; i < n; ++i) {
      const T* row = lv.data() + static_cast<int64_t>(i) * classes;
      int64_t arg = 0;
      for (int64_t c = 1; c < classes; ++c)
        if (row[c] > row[arg]) arg = c;
      if (arg == ds.labels[start + i]) ++correct;
    }
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(ds.size());
}

// Softmax probabilities for every sample (N x classes, row-major, computed
// in double regardless of the model precision).
template <typename T>
std::vector<double> predict_probabilities(const Network<T>& net, const LabeledDataset<T>& ds,
                                          int64_t batch = 512) {
  if (ds.size() == 0) throw ConfigError("predict_probabilities: empty dataset");
  std::vector<double> out;
  std::vector<uint32_t> rows;
  int64_t classes = 0;
  for (size_t start = 0; start < ds.size(); start += static_cast<size_t>(batch)) {
    const size_t n = std::min(static_cast<size_t>(batch), ds.size() - start);
    rows.resize(n);
    for (size_t i = 0; i < n; ++i) rows[i] = static_cast<uint32_t>(start + i);
    Tensor<T> logits = net.forward(ds.gather(rows), nullptr);
    classes = logits.dim(1);
    if (out.empty()) out.reserve(ds.size() * static_cast<size_t>(classes));
    auto lv = logits.data();
    for (size_t i = 0; i < n; ++i) {
      const T* row = lv.data() + static_cast<int64_t>(i) * classes;
      double mx = static_cast<double>(row[0]);
      for (int64_t c = 1; c < classes; ++c) mx = std::max(mx, static_cast<double>(row[c]));
      double se = 0.0;
      const size_t base = out.size();
      for (int64_t c = 0; c < classes; ++c) {
        const double e = std::exp(static_cast<double>(row[c]) - mx);
        out.push_back(e);
        se += e;
      }
      for (int64_t c = 0; c < classes; ++c) out[base + static_cast<size_t>(c)] /= se;
    }
  }
  return out;
}

}  // namespace synergy
