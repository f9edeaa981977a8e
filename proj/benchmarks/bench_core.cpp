// Microbenchmarks for the training hot paths: autodiff kernels, the full
// learner step, Fisher estimation, reservoir writes, and image rotation.
#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include <synergy/buffer.hpp>
#include <synergy/dataset.hpp>
#include <synergy/fisher.hpp>
#include <synergy/learner.hpp>
#include <synergy/image.hpp>
#include <synergy/network.hpp>
#include <synergy/rng.hpp>
#include <synergy/tensor.hpp>

using namespace synergy;

namespace {

std::vector<double> random_vec(size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

void fill_batch(std::vector<double>& inputs, std::vector<int32_t>& labels, int64_t rows,
                int64_t dim, int32_t classes, Rng& rng) {
  inputs.resize(static_cast<size_t>(rows * dim));
  labels.resize(static_cast<size_t>(rows));
  for (double& x : inputs) x = rng.uniform();
  for (int32_t& l : labels) l = static_cast<int32_t>(rng.uniform_int(classes));
}

}  // namespace

static void BM_MatmulForward(benchmark::State& state) {
  Rng rng(1);
  const int64_t m = state.range(0), k = 784, n = 100;
  const auto a = random_vec(static_cast<size_t>(m * k), rng);
  const auto b = random_vec(static_cast<size_t>(k * n), rng);
  for (auto _ : state) {
    Tape<double> tape;
    auto ta = Tensor<double>::from({m, k}, a, false);
    auto tb = Tensor<double>::from({k, n}, b, false);
    auto out = matmul(&tape, ta, tb);
    benchmark::DoNotOptimize(out.data().data());
  }
  state.SetItemsProcessed(state.iterations() * m * k * n);
}
BENCHMARK(BM_MatmulForward)->Arg(16)->Arg(128);

static void BM_MlpForwardBackward(benchmark::State& state) {
  Rng rng(2);
  const int64_t rows = state.range(0);
  Network<double> net = build_mlp<double>(784, 10, rng);
  std::vector<double> inputs;
  std::vector<int32_t> labels;
  fill_batch(inputs, labels, rows, 784, 10, rng);
  auto x = Tensor<double>::from({rows, 784}, inputs, false);
  for (auto _ : state) {
    Tape<double> tape;
    auto logits = net.forward(x, &tape);
    auto loss = softmax_cross_entropy(&tape, logits, labels);
    tape.backward(loss);
    for (auto& p : net.parameters()) p.zero_grad();
    benchmark::DoNotOptimize(loss.data().data());
  }
  state.SetItemsProcessed(state.iterations() * rows);
}
BENCHMARK(BM_MlpForwardBackward)->Arg(16)->Arg(128);

static void BM_LearnerStep(benchmark::State& state) {
  const bool dual = state.range(0) != 0;
  Rng rng(3);
  SynergyConfig cfg;
  cfg.buffer_size = 500;
  cfg.batch_size = 128;
  cfg.eta = 0.2;
  Network<double> net = build_mlp<double>(784, 10, rng);
  Learner<double> learner(dual ? MethodKind::Synergy : MethodKind::Er, cfg, std::move(net),
                          {1, 28, 28}, 10, 7);
  std::vector<double> inputs;
  std::vector<int32_t> labels;
  fill_batch(inputs, labels, cfg.batch_size, 784, 10, rng);
  auto x = Tensor<double>::from({cfg.batch_size, 784}, inputs, false);
  for (auto _ : state) {
    const StepReport rep = learner.step(x, labels);
    benchmark::DoNotOptimize(rep.loss_total);
  }
  state.SetItemsProcessed(state.iterations() * cfg.batch_size);
}
BENCHMARK(BM_LearnerStep)->Arg(0)->Name("BM_LearnerStep/er");
BENCHMARK(BM_LearnerStep)->Arg(1)->Name("BM_LearnerStep/synergy");

static void BM_FisherEstimate(benchmark::State& state) {
  Rng rng(4);
  const int64_t rows = state.range(0);
  Network<double> net = build_mlp<double>(784, 10, rng);
  std::vector<double> inputs;
  std::vector<int32_t> labels;
  fill_batch(inputs, labels, rows, 784, 10, rng);
  auto x = Tensor<double>::from({rows, 784}, inputs, false);
  for (auto _ : state) {
    auto f = estimate_fisher_batch(net, x, labels);
    benchmark::DoNotOptimize(f.data());
  }
  state.SetItemsProcessed(state.iterations() * rows);
}
BENCHMARK(BM_FisherEstimate)->Arg(32)->Arg(128);

static void BM_ReservoirAdd(benchmark::State& state) {
  Rng rng(5);
  EpisodicBuffer<double> buffer(500, 11, {1, 28, 28}, 10);
  std::vector<double> row(784);
  for (double& x : row) x = rng.uniform();
  int32_t label = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(buffer.add(row, label));
    label = (label + 1) % 10;
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ReservoirAdd);

static void BM_ReplaySample(benchmark::State& state) {
  Rng rng(6);
  EpisodicBuffer<double> buffer(500, 12, {1, 28, 28}, 10);
  std::vector<double> row(784);
  for (int i = 0; i < 500; ++i) {
    for (double& x : row) x = rng.uniform();
    buffer.add(row, static_cast<int32_t>(rng.uniform_int(10)));
  }
  for (auto _ : state) {
    auto batch = buffer.sample(128);
    benchmark::DoNotOptimize(batch->inputs.data());
  }
  state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(BM_ReplaySample);

static void BM_RotateImage(benchmark::State& state) {
  Rng rng(7);
  std::vector<double> image(784);
  for (double& x : image) x = rng.uniform();
  std::vector<double> out(784);
  double angle = 0.0;
  for (auto _ : state) {
    rotate_chw<double>(image, std::span<double>(out), 1, 28, 28, angle);
    benchmark::DoNotOptimize(out.data());
    angle += 7.0;
  }
  state.SetItemsProcessed(state.iterations() * 784);
}
BENCHMARK(BM_RotateImage);

static void BM_EmaUpdate(benchmark::State& state) {
  Rng rng(8);
  Network<double> a = build_mlp<double>(784, 10, rng);
  Network<double> b = a.clone();
  for (auto _ : state) {
    ema_update(a, b, 0.99);
    benchmark::DoNotOptimize(a.flat().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(a.flat().size()));
}
BENCHMARK(BM_EmaUpdate);

BENCHMARK_MAIN();
