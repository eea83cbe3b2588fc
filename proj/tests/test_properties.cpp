// Cross-module invariants exercised with generated inputs.

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "gpf/checkpoint.hpp"
#include "gpf/learner.hpp"
#include "gpf/spectral.hpp"
#include "test_support.hpp"

using namespace gpf;
using gpf::testing::for_all;

namespace {

GpfNetwork random_network(Rng& rng) {
  GpfConfig cfg;
  cfg.hidden_width = 4 + rng.uniform_int(20);
  cfg.initial_hidden_layers = 1 + rng.uniform_int(4);
  cfg.belief_magnitude = rng.uniform(0.01, 0.5);
  if (rng.uniform() < 0.5) cfg.prune_magnitude_threshold = rng.uniform(0.01, 0.3);
  auto net = GpfNetwork::create(cfg, rng);
  ForwardCache cache;
  const int steps = rng.uniform_int(30);
  for (int s = 0; s < steps; ++s) {
    net.forward(gpf::testing::random_vector(rng, 22), cache);
    net.backward_and_step(cache, gpf::testing::random_vector(rng, 6));
    net.update_beliefs(s);
    net.record_stability(s);
  }
  if (rng.uniform() < 0.7) net.prune(net.hidden_layers(), steps);
  for (std::size_t l = 0; l + 1 < net.layers().size(); ++l) {
    if (rng.uniform() < 0.3) net.mutable_layer(l).frozen = true;
  }
  return net;
}

}  // namespace

TEST(Properties, CheckpointRoundTripOnRandomNetworks) {
  for_all(91, 60, [](Rng& rng, int) {
    Checkpoint c;
    c.network = random_network(rng);
    c.meta = {rng.uniform_int(10000), rng.uniform(), rng.uniform()};
    const int n_rng = rng.uniform_int(3);
    for (int i = 0; i < n_rng; ++i) c.rng_states.push_back(Rng(rng.next_u64()).serialize());
    const auto bytes = checkpoint_bytes(c);
    ASSERT_EQ(checkpoint_bytes(checkpoint_from_bytes(bytes)), bytes);
  });
}

TEST(Properties, MaskedWeightsAreZeroAndStayMasked) {
  for_all(92, 40, [](Rng& rng, int) {
    auto net = random_network(rng);
    std::vector<std::vector<std::uint8_t>> masks;
    for (const auto& l : net.layers()) masks.push_back(l.pruned);
    ForwardCache cache;
    for (int s = 0; s < 50; ++s) {
      net.forward(gpf::testing::random_vector(rng, 22), cache);
      net.backward_and_step(cache, gpf::testing::random_vector(rng, 6));
    }
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
      const auto& layer = net.layer(l);
      for (std::size_t k = 0; k < layer.pruned.size(); ++k) {
        ASSERT_GE(layer.pruned[k], masks[l][k]);
        if (layer.pruned[k]) ASSERT_EQ(layer.weights.data()[k], 0.0);
      }
    }
  });
}

TEST(Properties, EnvironmentClosure) {
  // Heading stays in (-pi, pi], tokens stay in the vocabulary and each reward
  // is exactly the sum of its logged parts.
  for_all(93, 30, [](Rng& rng, int i) {
    EnvConfig env_cfg;
    env_cfg.max_steps = 300;
    PlumeEnv env(PlumeConfig{}, env_cfg);
    env.reset(static_cast<std::uint64_t>(i) + 500);
    while (!env.done()) {
      const auto step = env.step(static_cast<Action>(rng.uniform_int(kActionCount)));
      const double h = env.pose().heading;
      ASSERT_GT(h, -std::numbers::pi);
      ASSERT_LE(h, std::numbers::pi);
      ASSERT_TRUE(step.token.valid());
      ASSERT_EQ(step.reward, step.parts.time + step.parts.event + step.parts.shape);
      ASSERT_EQ(step.terminated == Termination::Success, env.distance_to_source() <= env_cfg.success_radius);
    }
  });
}

TEST(Properties, FullRunMasksMonotoneAndFrozenLayersFixed) {
  TrainConfig cfg;
  cfg.episodes = 60;
  cfg.eval_every = 10;
  cfg.eval_episodes = 4;
  cfg.probe_size = 128;
  GpfConfig g;
  g.hidden_width = 16;
  g.grow_patience = 10;
  g.stagnation_threshold = 1e9;
  g.freeze_patience = 5;
  g.freeze_change_threshold = 0.5;
  g.freeze_fraction = 0.5;
  g.belief_magnitude = 0.3;
  g.prune_magnitude_threshold = 0.2;
  EnvConfig env;
  env.max_steps = 120;

  std::vector<std::vector<std::uint8_t>> masks;
  std::vector<std::vector<double>> frozen_params;
  std::vector<bool> frozen;
  std::size_t prev_layers = 0;
  int frozen_events = 0;
  train(cfg, g, PlumeConfig{}, env, {}, [&](std::int64_t, const GpfNetwork& net) {
    const auto n = net.layers().size();
    ASSERT_GE(n, prev_layers);
    // Growth inserts before the output layer; earlier layers keep their index.
    for (std::size_t l = 0; l + 1 < prev_layers; ++l) {
      const auto& layer = net.layer(l);
      for (std::size_t k = 0; k < layer.pruned.size(); ++k) ASSERT_GE(layer.pruned[k], masks[l][k]);
      if (frozen[l]) {
        ASSERT_TRUE(layer.frozen);
        ASSERT_EQ(gpf::testing::layer_params(layer), frozen_params[l]);
      }
    }
    masks.assign(n, {});
    frozen_params.assign(n, {});
    frozen.assign(n, false);
    int now_frozen = 0;
    for (std::size_t l = 0; l < n; ++l) {
      masks[l] = net.layer(l).pruned;
      frozen[l] = net.layer(l).frozen;
      if (frozen[l]) {
        frozen_params[l] = gpf::testing::layer_params(net.layer(l));
        ++now_frozen;
      }
    }
    frozen_events = std::max(frozen_events, now_frozen);
    prev_layers = n;
  });
  EXPECT_GT(prev_layers, 2u);
  EXPECT_GE(frozen_events, 1);
}

TEST(Properties, StieltjesConjugateSymmetry) {
  for_all(94, 100, [](Rng& rng, int) {
    Esd esd;
    const int n = 1 + rng.uniform_int(40);
    for (int i = 0; i < n; ++i) esd.eigenvalues.push_back(std::abs(rng.normal()) * 3.0);
    const Complex z(rng.uniform(-2.0, 8.0), rng.uniform(0.01, 2.0));
    const auto s = stieltjes(esd, z);
    ASSERT_GT(s.imag(), 0.0);
    ASSERT_NEAR(std::abs(stieltjes(esd, std::conj(z)) - std::conj(s)), 0.0, 1e-12);
    // |s(z)| <= 1 / Im z.
    ASSERT_LE(std::abs(s), 1.0 / z.imag() + 1e-12);
  });
}

TEST(Properties, KsDistanceIsAProbabilityGap) {
  for_all(95, 100, [](Rng& rng, int) {
    Esd esd;
    const int n = 1 + rng.uniform_int(60);
    for (int i = 0; i < n; ++i) esd.eigenvalues.push_back(std::abs(rng.normal()) * 2.0);
    std::sort(esd.eigenvalues.begin(), esd.eigenvalues.end());
    const MpLaw law{rng.uniform(0.1, 3.0), rng.uniform(0.2, 2.0)};
    const double d = ks_distance(esd, law);
    ASSERT_GE(d, 0.0);
    ASSERT_LE(d, 1.0);
  });
}
