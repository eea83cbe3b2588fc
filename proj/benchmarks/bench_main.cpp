#include <benchmark/benchmark.h>

#include "gpf/env.hpp"
#include "gpf/learner.hpp"
#include "gpf/network.hpp"
#include "gpf/plume.hpp"
#include "gpf/spectral.hpp"

namespace {

using namespace gpf;

void BM_PlumeStep(benchmark::State& state) {
  PlumeConfig cfg;
  cfg.remove_outside_domain = false;
  auto s = plume_reset(cfg, 1);
  for (int i = 0; i < 400; ++i) plume_step(s, cfg);
  for (auto _ : state) {
    plume_step(s, cfg);
    benchmark::DoNotOptimize(s.filaments.data());
  }
}
BENCHMARK(BM_PlumeStep);

void BM_Concentration(benchmark::State& state) {
  PlumeConfig cfg;
  auto s = plume_reset(cfg, 2);
  for (int i = 0; i < 400; ++i) plume_step(s, cfg);
  Rng rng(3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(raw_concentration(s, {rng.uniform(0.0, 20.0), rng.uniform(0.0, 20.0)}, cfg));
  }
}
BENCHMARK(BM_Concentration);

void BM_EnvStep(benchmark::State& state) {
  PlumeEnv env(PlumeConfig{}, EnvConfig{});
  Rng rng(4);
  std::uint64_t seed = 0;
  env.reset(seed);
  for (auto _ : state) {
    if (env.done()) env.reset(++seed);
    benchmark::DoNotOptimize(env.step(static_cast<Action>(rng.uniform_int(kActionCount))));
  }
}
BENCHMARK(BM_EnvStep);

GpfNetwork network_with_depth(int depth) {
  GpfConfig cfg;
  cfg.initial_hidden_layers = depth;
  Rng rng(5);
  return GpfNetwork::create(cfg, rng);
}

void BM_Forward(benchmark::State& state) {
  const auto net = network_with_depth(static_cast<int>(state.range(0)));
  const auto x = encode_onehot({3, 2, 5});
  ForwardCache cache;
  for (auto _ : state) {
    benchmark::DoNotOptimize(net.forward(x, cache));
  }
}
BENCHMARK(BM_Forward)->DenseRange(1, 4);

void BM_TrainingUpdate(benchmark::State& state) {
  auto net = network_with_depth(static_cast<int>(state.range(0)));
  const auto x = encode_onehot({3, 2, 5});
  ForwardCache cache;
  std::vector<double> dq(kActionCount, 0.0);
  dq[1] = 0.5;
  for (auto _ : state) {
    net.forward(x, cache);
    net.backward_and_step(cache, dq);
  }
}
BENCHMARK(BM_TrainingUpdate)->DenseRange(1, 4);

void BM_Jacobi64(benchmark::State& state) {
  Rng rng(6);
  Matrix w(64, 64);
  for (auto& v : w.data()) v = rng.normal(0.0, 0.18);
  for (auto _ : state) {
    benchmark::DoNotOptimize(gram_esd(w, 64.0));
  }
}
BENCHMARK(BM_Jacobi64)->Unit(benchmark::kMillisecond);

void BM_Episode(benchmark::State& state) {
  const auto net = network_with_depth(2);
  PlumeEnv env(PlumeConfig{}, EnvConfig{});
  std::uint64_t seed = 0;
  for (auto _ : state) {
    Rng rng(seed);
    benchmark::DoNotOptimize(run_episode(&net, env, seed++, 0.05, rng));
  }
}
BENCHMARK(BM_Episode)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
