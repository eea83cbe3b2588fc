#include <gtest/gtest.h>

#include <cmath>

#include "gpf/errors.hpp"
#include "gpf/network.hpp"
#include "test_support.hpp"

using namespace gpf;
using gpf::testing::for_all;
using gpf::testing::layer_params;
using gpf::testing::random_vector;

namespace {

GpfConfig small_config() {
  GpfConfig cfg;
  cfg.hidden_width = 8;
  return cfg;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Loss c . q(x); its output gradient is c.
double linear_loss(const GpfNetwork& net, std::span<const double> x, std::span<const double> c) {
  return dot(net.forward(x), c);
}

double relative_error(double a, double b) { return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)}); }

}  // namespace

TEST(Forward, ZeroNetworkGivesZero) {
  Rng rng(1);
  auto net = GpfNetwork::create(small_config(), rng);
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    auto& layer = net.mutable_layer(l);
    std::fill(layer.weights.data().begin(), layer.weights.data().end(), 0.0);
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
  }
  const auto q = net.forward(random_vector(rng, 22));
  EXPECT_EQ(q, std::vector<double>(6, 0.0));
}

TEST(Forward, HandComputedTwoLayer) {
  Rng rng(2);
  GpfConfig cfg = small_config();
  auto net = GpfNetwork::create(cfg, rng);
  auto& hidden = net.mutable_layer(0);
  std::fill(hidden.weights.data().begin(), hidden.weights.data().end(), 0.0);
  std::fill(hidden.bias.begin(), hidden.bias.end(), 0.0);
  for (std::size_t i = 0; i < 8; ++i) hidden.weights(i, i) = 1.0;  // routes x_0..x_7
  auto& out = net.mutable_layer(1);
  std::fill(out.weights.data().begin(), out.weights.data().end(), 1.0);
  std::fill(out.bias.begin(), out.bias.end(), 0.0);

  std::vector<double> x(22, 0.0);
  const std::vector<double> head{0.5, -2.0, 3.0, -0.1, 0.0, 1.25, -7.0, 2.0};
  std::copy(head.begin(), head.end(), x.begin());
  x[10] = 100.0;  // not routed
  const double expected = 0.5 + 3.0 + 1.25 + 2.0;
  for (double q : net.forward(x)) EXPECT_DOUBLE_EQ(q, expected);
}

TEST(Forward, RejectsWrongInputSize) {
  Rng rng(3);
  auto net = GpfNetwork::create(small_config(), rng);
  EXPECT_THROW(net.forward(std::vector<double>(21, 0.0)), ValidationError);
}

TEST(Forward, MaskedWeightsAreIdempotent) {
  Rng rng(4);
  auto net = GpfNetwork::create(small_config(), rng);
  auto& layer = net.mutable_layer(0);
  for (std::size_t k = 0; k < layer.pruned.size(); k += 3) {
    layer.pruned[k] = 1;
    layer.weights.data()[k] = 0.0;
  }
  const auto x = random_vector(rng, 22);
  const auto before = net.forward(x);
  auto& again = net.mutable_layer(0);
  for (std::size_t k = 0; k < again.pruned.size(); ++k) {
    if (again.pruned[k]) again.weights.data()[k] = 0.0;
  }
  EXPECT_EQ(net.forward(x), before);
}

TEST(Backward, MatchesCentralDifferences) {
  for_all(5, 20, [](Rng& rng, int) {
    auto net = GpfNetwork::create(small_config(), rng);
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
      auto& layer = net.mutable_layer(l);
      for (auto& b : layer.bias) b = rng.normal(0.0, 0.5);
    }
    const auto x = random_vector(rng, 22);
    const auto c = random_vector(rng, 6);
    ForwardCache cache;
    net.forward(x, cache);
    const auto g = net.backward(cache, c);
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
      const auto n = net.layer(l).weights.size();
      for (std::size_t k = 0; k < n; ++k) {
        const double w0 = net.layer(l).weights.data()[k];
        net.mutable_layer(l).weights.data()[k] = w0 + h;
        const double up = linear_loss(net, x, c);
        net.mutable_layer(l).weights.data()[k] = w0 - h;
        const double down = linear_loss(net, x, c);
        net.mutable_layer(l).weights.data()[k] = w0;
        const double numeric = (up - down) / (2.0 * h);
        worst = std::max(worst, relative_error(g.weights[l].data()[k], numeric));
      }
      for (std::size_t k = 0; k < net.layer(l).bias.size(); ++k) {
        const double b0 = net.layer(l).bias[k];
        net.mutable_layer(l).bias[k] = b0 + h;
        const double up = linear_loss(net, x, c);
        net.mutable_layer(l).bias[k] = b0 - h;
        const double down = linear_loss(net, x, c);
        net.mutable_layer(l).bias[k] = b0;
        worst = std::max(worst, relative_error(g.bias[l][k], (up - down) / (2.0 * h)));
      }
    }
    ASSERT_LE(worst, 1e-4);
  });
}

TEST(Backward, FusedStepMatchesTwoPhaseStep) {
  for_all(24, 10, [](Rng& rng, int) {
    GpfConfig cfg = small_config();
    cfg.initial_hidden_layers = 1 + rng.uniform_int(3);
    auto a = GpfNetwork::create(cfg, rng);
    auto& layer = a.mutable_layer(0);
    for (std::size_t k = 0; k < layer.pruned.size(); k += 4) {
      layer.pruned[k] = 1;
      layer.weights.data()[k] = 0.0;
    }
    auto b = a;
    ForwardCache ca, cb;
    for (int s = 0; s < 30; ++s) {
      const auto x = random_vector(rng, 22);
      const auto dq = random_vector(rng, 6);
      a.forward(x, ca);
      a.backward_and_step(ca, dq);
      b.forward(x, cb);
      b.apply_gradients(b.backward(cb, dq));
    }
    for (std::size_t l = 0; l < a.layers().size(); ++l) {
      ASSERT_EQ(layer_params(a.layer(l)), layer_params(b.layer(l)));
      ASSERT_EQ(a.layer(l).adam.v_w, b.layer(l).adam.v_w);
    }
  });
}

TEST(Backward, RejectsStaleCache) {
  Rng rng(6);
  auto net = GpfNetwork::create(small_config(), rng);
  ForwardCache cache;
  net.forward(random_vector(rng, 22), cache);
  net.backward_and_step(cache, std::vector<double>(6, 1.0));
  EXPECT_THROW(net.backward(cache, std::vector<double>(6, 1.0)), std::logic_error);
}

TEST(Backward, MaskedWeightsGetNoGradientOrUpdate) {
  Rng rng(7);
  auto net = GpfNetwork::create(small_config(), rng);
  auto& layer = net.mutable_layer(0);
  layer.pruned[5] = 1;
  layer.weights.data()[5] = 0.0;
  ForwardCache cache;
  for (int i = 0; i < 50; ++i) {
    std::vector<double> x(22, 1.0);
    net.forward(x, cache);
    const auto g = net.backward(cache, std::vector<double>(6, 1.0));
    EXPECT_EQ(g.weights[0].data()[5], 0.0);
    net.apply_gradients(g);
  }
  EXPECT_EQ(net.layer(0).weights.data()[5], 0.0);
}

TEST(Freeze, FrozenLayerBitIdenticalAcrossUpdates) {
  Rng rng(8);
  auto net = GpfNetwork::create(small_config(), rng);
  net.mutable_layer(0).frozen = true;
  const auto snapshot = layer_params(net.layer(0));
  const auto out_before = layer_params(net.layer(1));
  ForwardCache cache;
  for (int i = 0; i < 10000; ++i) {
    net.forward(random_vector(rng, 22), cache);
    net.backward_and_step(cache, random_vector(rng, 6));
  }
  EXPECT_EQ(layer_params(net.layer(0)), snapshot);
  EXPECT_NE(layer_params(net.layer(1)), out_before);
}

TEST(Freeze, UntouchedLayerFreezesAfterPatience) {
  Rng rng(9);
  GpfConfig cfg = small_config();
  cfg.freeze_patience = 10;
  auto net = GpfNetwork::create(cfg, rng);
  for (int e = 1; e < 10; ++e) {
    net.record_stability(e);
    EXPECT_TRUE(net.maybe_freeze(e).empty());
  }
  net.record_stability(10);
  EXPECT_EQ(net.maybe_freeze(10), std::vector<std::size_t>{0});
  EXPECT_TRUE(net.layer(0).frozen);
  EXPECT_FALSE(net.layer(1).frozen);  // the output map stays trainable
  for (double h : net.layer(0).belief.data()) EXPECT_EQ(h, 1.0);
}

TEST(Freeze, OscillatingWeightNeverFreezes) {
  Rng rng(10);
  GpfConfig cfg = small_config();
  cfg.freeze_patience = 5;
  auto net = GpfNetwork::create(cfg, rng);
  // Every weight of the hidden layer moves by 2 * omega_f per episode.
  for (int e = 1; e <= 100; ++e) {
    for (auto& w : net.mutable_layer(0).weights.data()) w += (e % 2 ? 2.0 : -2.0) * cfg.freeze_change_threshold;
    net.record_stability(e);
    ASSERT_TRUE(net.maybe_freeze(e).empty());
  }
}

TEST(Beliefs, StayZeroForSmallWeights) {
  Rng rng(11);
  auto net = GpfNetwork::create(small_config(), rng);
  for (auto& w : net.mutable_layer(0).weights.data()) w = 0.5 * net.config().belief_magnitude;
  for (int e = 0; e < 100; ++e) net.update_beliefs(e);
  for (double h : net.layer(0).belief.data()) EXPECT_EQ(h, 0.0);
}

TEST(Beliefs, ApproachButNeverReachOne) {
  Rng rng(12);
  auto net = GpfNetwork::create(small_config(), rng);
  for (auto& w : net.mutable_layer(0).weights.data()) w = 1.0;
  const double eta = net.config().belief_increment;
  for (int e = 1; e <= 4500; ++e) {
    net.update_beliefs(e);
    if (e == 2250) {
      for (double h : net.layer(0).belief.data()) EXPECT_NEAR(h, 2250 * eta, 1e-12);
    }
  }
  for (int e = 4501; e <= 5000; ++e) net.update_beliefs(e);
  for (double h : net.layer(0).belief.data()) {
    EXPECT_LT(h, 1.0);
    EXPECT_GT(h, 1.0 - 1e-9);
  }
}

TEST(Beliefs, BoundedAndNonDecreasingUnderTraining) {
  for_all(13, 5, [](Rng& rng, int) {
    GpfConfig cfg = small_config();
    cfg.belief_increment = rng.uniform(0.01, 0.5);
    cfg.belief_magnitude = rng.uniform(0.01, 0.3);
    auto net = GpfNetwork::create(cfg, rng);
    ForwardCache cache;
    auto prev = net.layer(0).belief.data();
    for (int e = 1; e <= 200; ++e) {
      net.forward(random_vector(rng, 22), cache);
      net.backward_and_step(cache, random_vector(rng, 6));
      net.update_beliefs(e);
      for (const auto& layer : net.layers()) {
        for (double h : layer.belief.data()) {
          ASSERT_GE(h, 0.0);
          ASSERT_LE(h, 1.0);
        }
      }
      const auto& now = net.layer(0).belief.data();
      for (std::size_t k = 0; k < now.size(); ++k) ASSERT_GE(now[k], prev[k]);
      prev = now;
    }
  });
}

TEST(Prune, BeliefProtectsEverything) {
  Rng rng(14);
  auto net = GpfNetwork::create(small_config(), rng);
  for (auto& h : net.mutable_layer(0).belief.data()) h = 1e-3;
  const auto report = net.prune(1, 0);
  EXPECT_EQ(report.retained_fraction, 1.0);
  EXPECT_EQ(report.newly_masked, 0u);
}

TEST(Prune, ThresholdAboveMaxMasksEverything) {
  Rng rng(15);
  GpfConfig cfg = small_config();
  cfg.prune_magnitude_threshold = 1e9;
  auto net = GpfNetwork::create(cfg, rng);
  const auto report = net.prune(1, 0);
  EXPECT_EQ(report.retained_fraction, 0.0);
  for (double w : net.layer(0).weights.data()) EXPECT_EQ(w, 0.0);
  EXPECT_EQ(net.layer(1).retained_fraction(), 1.0);
}

TEST(Prune, PercentileThresholdMasksAboutThirty) {
  Rng rng(16);
  GpfConfig cfg;
  auto net = GpfNetwork::create(cfg, rng);
  const auto report = net.prune(1, 0);
  EXPECT_NEAR(report.retained_fraction, 0.70, 0.01);
}

TEST(Prune, FrozenLayersAreSkipped) {
  Rng rng(17);
  GpfConfig cfg = small_config();
  cfg.prune_magnitude_threshold = 1e9;
  auto net = GpfNetwork::create(cfg, rng);
  net.mutable_layer(0).frozen = true;
  for (auto& h : net.mutable_layer(0).belief.data()) h = 1.0;
  const auto before = layer_params(net.layer(0));
  net.prune(1, 0);
  EXPECT_EQ(layer_params(net.layer(0)), before);
}

TEST(Prune, MasksAreMonotoneAcrossTraining) {
  for_all(18, 5, [](Rng& rng, int) {
    GpfConfig cfg = small_config();
    cfg.belief_magnitude = 0.2;
    cfg.belief_increment = 0.01;
    auto net = GpfNetwork::create(cfg, rng);
    ForwardCache cache;
    std::vector<std::uint8_t> mask = net.layer(0).pruned;
    for (int e = 1; e <= 300; ++e) {
      net.forward(random_vector(rng, 22), cache);
      net.backward_and_step(cache, random_vector(rng, 6));
      net.update_beliefs(e);
      if (e % 25 == 0) net.prune(1, e);
      const auto& now = net.layer(0).pruned;
      for (std::size_t k = 0; k < now.size(); ++k) {
        ASSERT_GE(now[k], mask[k]);
        if (now[k]) ASSERT_EQ(net.layer(0).weights.data()[k], 0.0);
      }
      mask = now;
    }
  });
}

TEST(Grow, StrictlyImprovingLossNeverGrows) {
  Rng rng(19);
  GpfConfig cfg = small_config();
  cfg.grow_patience = 10;
  auto net = GpfNetwork::create(cfg, rng);
  double loss = 100.0;
  for (int e = 1; e <= 1000; ++e) {
    loss -= 0.01;
    ASSERT_FALSE(net.maybe_grow(loss, e, rng));
  }
  EXPECT_EQ(net.hidden_layers(), 1u);
}

TEST(Grow, ConstantLossGrowsOnceAfterPatience) {
  Rng rng(20);
  auto net = GpfNetwork::create(GpfConfig{}, rng);
  const auto output_before = layer_params(net.layer(1));
  for (int e = 0; e < 1000; ++e) ASSERT_FALSE(net.maybe_grow(1.0, e, rng));
  EXPECT_TRUE(net.maybe_grow(1.0, 1000, rng));
  EXPECT_EQ(net.hidden_layers(), 2u);
  // New layer sits just before the output map, which is unchanged.
  EXPECT_EQ(layer_params(net.layer(2)), output_before);
  const auto& fresh = net.layer(1);
  EXPECT_EQ(fresh.out_dim(), 64u);
  EXPECT_EQ(fresh.in_dim(), 64u);
  for (double h : fresh.belief.data()) EXPECT_EQ(h, 0.0);
  for (double m : fresh.adam.m_w) EXPECT_EQ(m, 0.0);
  EXPECT_EQ(fresh.adam.steps, 0);
  for (int e = 1001; e < 2000; ++e) ASSERT_FALSE(net.maybe_grow(1.0, e, rng));
}

TEST(Grow, RespectsSpacingAndMaxDepth) {
  for_all(21, 10, [](Rng& rng, int) {
    GpfConfig cfg = small_config();
    cfg.grow_patience = 1 + rng.uniform_int(50);
    cfg.max_hidden_layers = 1 + rng.uniform_int(4);
    auto net = GpfNetwork::create(cfg, rng);
    std::vector<int> events;
    for (int e = 0; e < 2000; ++e) {
      const double loss = rng.uniform() < 0.1 ? rng.uniform(0.0, 10.0) : 5.0;
      if (net.maybe_grow(loss, e, rng)) events.push_back(e);
      ASSERT_LE(net.hidden_layers(), static_cast<std::size_t>(cfg.max_hidden_layers));
      for (std::size_t l = 0; l + 1 < net.layers().size(); ++l) ASSERT_EQ(net.layer(l).out_dim(), 8u);
    }
    ASSERT_LE(events.size(), static_cast<std::size_t>(cfg.max_hidden_layers - 1));
    for (std::size_t i = 1; i < events.size(); ++i) ASSERT_GE(events[i] - events[i - 1], cfg.grow_patience);
  });
}

TEST(Grow, RejectsNonFiniteLoss) {
  Rng rng(22);
  auto net = GpfNetwork::create(small_config(), rng);
  EXPECT_THROW(net.maybe_grow(std::nan(""), 0, rng), ValidationError);
}

TEST(Grow, SuppressedBeforeEnablePatience) {
  Rng rng(23);
  GpfConfig cfg = small_config();
  cfg.grow_patience = 0;
  cfg.enable_patience = 7;
  auto net = GpfNetwork::create(cfg, rng);
  for (int e = 0; e < 7; ++e) ASSERT_FALSE(net.maybe_grow(1.0, e, rng));
  EXPECT_TRUE(net.maybe_grow(1.0, 7, rng));
}

TEST(BatchSize, Examples) {
  GpfConfig cfg;
  cfg.base_batch_size = 32;
  EXPECT_EQ(batch_size(5.0, cfg), 32);
  cfg.batch_decay = 2.0;
  EXPECT_EQ(batch_size(0.0, cfg), 32);
  cfg.base_batch_size = 128;
  cfg.batch_decay = 1.0;
  EXPECT_EQ(batch_size(std::log(2.0), cfg), 64);
  EXPECT_EQ(batch_size(1e6, cfg), 1);
  EXPECT_THROW(batch_size(std::nan(""), cfg), ValidationError);
}

TEST(GpfConfig, RejectsInvalidValues) {
  auto expect_field = [](GpfConfig cfg, const std::string& field) {
    try {
      cfg.validate();
      FAIL() << "accepted invalid " << field;
    } catch (const ValidationError& e) {
      EXPECT_EQ(e.field(), field);
    }
  };
  GpfConfig c;
  c.freeze_fraction = 0.0;
  expect_field(c, "freeze_fraction");
  c = {};
  c.grow_patience = -1;
  expect_field(c, "grow_patience");
  c = {};
  c.stagnation_threshold = 0.0;
  expect_field(c, "stagnation_threshold");
  c = {};
  c.initial_hidden_layers = 5;
  expect_field(c, "initial_hidden_layers");
}
