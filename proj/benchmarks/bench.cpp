#include <benchmark/benchmark.h>

#include <memory>

#include "vce/ensemble.hpp"
#include "vce/metrics.hpp"
#include "vce/nn.hpp"
#include "vce/rng.hpp"
#include "vce/tsne.hpp"

namespace {

using namespace vce;

Tensor noise(int n, int c, int h, int w, Rng& rng) {
  Tensor t(n, c, h, w);
  for (auto& v : t.values()) v = rng.normal();
  return t;
}

void BM_Conv3x3Forward(benchmark::State& state) {
  const int ch = static_cast<int>(state.range(0));
  const int size = static_cast<int>(state.range(1));
  Rng rng(1);
  Conv2d conv(ch, ch, 3, 1, 1);
  conv.init(rng);
  const Tensor x = noise(8, ch, size, size, rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv.forward(x, Mode::Eval));
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_Conv3x3Forward)->Args({16, 32})->Args({64, 28})->Args({128, 14})->Unit(benchmark::kMillisecond);

void BM_TinyEnsembleTrainStep(benchmark::State& state) {
  Rng rng(2);
  EnsembleModel model(ModelConfig::make(ModelVariant::Tiny, ClassSet::defaults(), Fusion::MeanProb, 32), 3);
  const Tensor x = noise(16, 3, 32, 32, rng);
  const Matrix g = Matrix::Constant(16, 10, 0.01);
  for (auto _ : state) {
    model.zero_grad();
    model.forward(x, Mode::Train);
    model.backward(g, g);
  }
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_TinyEnsembleTrainStep)->Unit(benchmark::kMillisecond);

void BM_TsneEmbed(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  Rng rng(4);
  Matrix x(n, 32);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  const std::vector<int> labels(static_cast<std::size_t>(n), 0);
  TsneConfig cfg;
  cfg.iterations = 300;
  for (auto _ : state) benchmark::DoNotOptimize(tsne_embed(x, labels, cfg));
}
BENCHMARK(BM_TsneEmbed)->Arg(100)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_RocCurve(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(5);
  std::vector<double> scores(n);
  auto positive = std::make_unique<bool[]>(n);
  for (std::size_t i = 0; i < n; ++i) {
    positive[i] = rng.uniform() < 0.3;
    scores[i] = static_cast<double>(rng.below(1000)) / 1000.0 + (positive[i] ? 0.2 : 0.0);
  }
  const std::span<const bool> flags(positive.get(), n);
  for (auto _ : state) benchmark::DoNotOptimize(roc_curve(scores, flags));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_RocCurve)->Arg(1000)->Arg(100000);

}  // namespace
BENCHMARK_MAIN();
