#include <benchmark/benchmark.h>

#include <random>

#include "mtseg/loss.hpp"
#include "mtseg/metrics.hpp"
#include "mtseg/mip.hpp"
#include "mtseg/network.hpp"
#include "mtseg/phantom.hpp"
#include "mtseg/preprocess.hpp"
#include "mtseg/segmenter.hpp"

using namespace mtseg;

namespace {

Geometry grid(Dims d, double s) {
  Geometry g;
  g.dims = d;
  g.spacing = {s, s, s};
  return g;
}

std::vector<double> uniform(std::size_t n, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

void BM_ResampleTrilinear(benchmark::State& state) {
  const auto edge = static_cast<std::size_t>(state.range(0));
  ImageVolume v(grid({edge, edge, edge}, 2.0), Modality::PET, IntensityUnit::SUV);
  v.voxels = uniform(v.voxels.size(), 1);
  for (auto _ : state) benchmark::DoNotOptimize(resample(v, {1.5, 1.5, 1.5}, Interpolation::Trilinear));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * v.voxels.size()));
}
BENCHMARK(BM_ResampleTrilinear)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_CoronalMip(benchmark::State& state) {
  const Phantom p = generate_phantom(PhantomSpec{});
  for (auto _ : state) benchmark::DoNotOptimize(classification_input(p.pet));
}
BENCHMARK(BM_CoronalMip)->Unit(benchmark::kMillisecond);

void BM_Conv3d(benchmark::State& state) {
  const auto edge = static_cast<std::size_t>(state.range(0));
  Tensor in(4, {edge, edge, edge});
  in.data = uniform(in.data.size(), 2, -1.0, 1.0);
  const auto w = uniform(8 * 4 * 27, 3, -0.1, 0.1);
  const std::vector<double> b(8, 0.0);
  Tensor out;
  for (auto _ : state) {
    ops::conv3d_forward(in, w.data(), b.data(), 8, 3, out);
    benchmark::DoNotOptimize(out.data.data());
  }
}
BENCHMARK(BM_Conv3d)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_ToyForward(benchmark::State& state) {
  const ToyUNet net(SegmenterConfig{});
  Tensor in(2, {32, 32, 32});
  in.data = uniform(in.data.size(), 4, -1.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(in));
}
BENCHMARK(BM_ToyForward)->Unit(benchmark::kMillisecond);

void BM_ConnectedComponents(benchmark::State& state) {
  LabelVolume m(grid({64, 64, 64}, 2.0));
  std::mt19937_64 rng(5);
  std::bernoulli_distribution fg(static_cast<double>(state.range(0)) / 100.0);
  for (auto& l : m.labels) l = fg(rng);
  for (auto _ : state) benchmark::DoNotOptimize(connected_components(m, Connectivity::Eighteen));
}
BENCHMARK(BM_ConnectedComponents)->Arg(5)->Arg(30)->Unit(benchmark::kMillisecond);

void BM_CompoundLossGradient(benchmark::State& state) {
  const std::size_t n = 32 * 32 * 32;
  const auto p = uniform(n, 6, 0.01, 0.99);
  auto g = uniform(n, 7);
  for (auto& x : g) x = x < 0.1 ? 1.0 : 0.0;
  const LossParams lp;
  for (auto _ : state) {
    benchmark::DoNotOptimize(compound_loss(p, g, lp));
    benchmark::DoNotOptimize(compound_loss_gradient(p, g, lp));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}
BENCHMARK(BM_CompoundLossGradient)->Unit(benchmark::kMicrosecond);

}  // namespace
BENCHMARK_MAIN();
