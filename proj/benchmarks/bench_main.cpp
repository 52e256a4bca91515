#include <benchmark/benchmark.h>

#include <cmath>

#include "ultrasnn/autodiff.hpp"
#include "ultrasnn/gradcheck.hpp"
#include "ultrasnn/network.hpp"
#include "ultrasnn/random.hpp"
#include "ultrasnn/tropical.hpp"

using namespace ultrasnn;

namespace {

Tensor gaussian(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(shape);
  for (double& x : t.data()) x = rng.normal();
  return t;
}

void BM_LseForwardBackward(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const Tensor a = gaussian({128, n}, 1), b = gaussian({128, n}, 2);
  for (auto _ : state) {
    Tape tape;
    Var x = tape.leaf(a), y = tape.leaf(b);
    Var out = ad::lse({x, y}, tape.constant(0.5));
    tape.backward(ad::sum(out));
    benchmark::DoNotOptimize(tape.grad(x).data().data());
  }
  state.SetItemsProcessed(state.iterations() * 128 * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_LseForwardBackward)->Arg(64)->Arg(512);

void BM_NetworkStep(benchmark::State& state) {
  NetworkSpec s;
  s.inputs = 784;
  s.hidden = {64};
  s.classes = 10;
  s.timesteps = static_cast<std::size_t>(state.range(1));
  s.neuron.kind = static_cast<NeuronKind>(state.range(0));
  const Network net = Network::initialized(s, 3);
  Tensor input = gaussian({s.timesteps, 128, 784}, 4);
  for (double& x : input.data()) x = x > 0 ? 1.0 : 0.0;
  const std::vector<int> labels(128, 3);
  for (auto _ : state) {
    Tape tape;
    ForwardRecord rec = forward(net, tape, input, ForwardMode::Train);
    tape.backward(loss(rec, labels, 0.1));
    benchmark::DoNotOptimize(tape.grad(rec.params.front()).data().data());
  }
  state.SetLabel(std::string(to_string(s.neuron.kind)));
}
BENCHMARK(BM_NetworkStep)
    ->Args({static_cast<int>(NeuronKind::UltraLIF), 1})
    ->Args({static_cast<int>(NeuronKind::UltraDLIF), 1})
    ->Args({static_cast<int>(NeuronKind::UltraDLIF), 4})
    ->Args({static_cast<int>(NeuronKind::LIF), 1})
    ->Unit(benchmark::kMillisecond);

void BM_RegionsExact(benchmark::State& state) {
  const std::size_t h = static_cast<std::size_t>(state.range(0));
  const Arrangement arr(gaussian({h, 2}, 5), std::vector<double>(h, 0.3));
  for (auto _ : state) benchmark::DoNotOptimize(count_regions_exact(arr).empirical);
}
BENCHMARK(BM_RegionsExact)->Arg(6)->Arg(16);

void BM_RegionsGrid(benchmark::State& state) {
  const Arrangement arr(gaussian({6, 2}, 6), std::vector<double>(6, 0.3));
  const std::size_t res = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(count_regions_grid(arr, res).empirical);
}
BENCHMARK(BM_RegionsGrid)->Arg(200)->Arg(800)->Unit(benchmark::kMillisecond);

void BM_ZonotopeVolume(benchmark::State& state) {
  const Tensor w = gaussian({static_cast<std::size_t>(state.range(0)), 3}, 7);
  for (auto _ : state) benchmark::DoNotOptimize(zonotope_volume(w).volume);
}
BENCHMARK(BM_ZonotopeVolume)->Arg(6)->Arg(24);

}  // namespace

BENCHMARK_MAIN();
