#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "parkvision/dataset.hpp"
#include "parkvision/layers.hpp"
#include "parkvision/metrics.hpp"
#include "parkvision/model.hpp"

namespace {

using namespace pv;

Tensor random_input(Shape shape, std::uint64_t seed) {
  Tensor t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(-1.f, 1.f);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = d(rng);
  return t;
}

// First desk conv stage: 3 -> 8 channels, 5x5 kernel on a 64x64 input.
void BM_Conv2dForward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_input({batch, 3, 64, 64}, 1);
  const LayerParams p(random_input({8, 3, 5, 5}, 2), random_input({8}, 3));
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, p, {1, 2}));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_Conv2dForward)->Arg(1)->Arg(8);

void BM_Conv2dBackward(benchmark::State& state) {
  const Tensor x = random_input({4, 3, 64, 64}, 1);
  LayerParams p(random_input({8, 3, 5, 5}, 2), random_input({8}, 3));
  const Tensor g = random_input(conv2d(x, p, {1, 2}).shape(), 4);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_backward(x, p, g, {1, 2}));
}
BENCHMARK(BM_Conv2dBackward);

// Single-crop prediction on the desk network, preprocessing included.
void BM_DeskPredictImage(benchmark::State& state) {
  const Model model = build(ModelSpec::desk());
  const Image crop = synth_crop(Occupancy::kOccupied, 0, 0, 60, 60);
  for (auto _ : state) benchmark::DoNotOptimize(predict_image(model, crop));
}
BENCHMARK(BM_DeskPredictImage);

void BM_Auc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(5);
  std::vector<double> scores(n);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = std::uniform_real_distribution<double>(0, 1)(rng);
    labels[i] = static_cast<int>(rng() % 2);
  }
  for (auto _ : state) benchmark::DoNotOptimize(auc(scores, labels));
  state.SetComplexityN(static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Auc)->Range(1 << 8, 1 << 16)->Complexity(benchmark::oNLogN);

}  // namespace

BENCHMARK_MAIN();
