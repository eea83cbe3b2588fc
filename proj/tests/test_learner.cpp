#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "gpf/errors.hpp"
#include "gpf/learner.hpp"
#include "test_support.hpp"

using namespace gpf;

namespace {

EnvConfig short_env() {
  EnvConfig env;
  env.max_steps = 150;
  return env;
}

TrainConfig tiny_train() {
  TrainConfig cfg;
  cfg.episodes = 12;
  cfg.eval_every = 6;
  cfg.eval_episodes = 4;
  cfg.probe_size = 64;
  return cfg;
}

GpfConfig tiny_gpf() {
  GpfConfig g;
  g.hidden_width = 16;
  g.grow_patience = 6;
  return g;
}

}  // namespace

TEST(ExpectedSarsa, HandValue) {
  const std::vector<double> q{1, 2, 3, 4, 5, 6};
  EXPECT_NEAR(expected_sarsa_target(1.0, q, 0.05, 0.99, false), 6.81625, 1e-12);
}

TEST(ExpectedSarsa, Limits) {
  gpf::testing::for_all(41, 500, [](Rng& rng, int) {
    const auto q = gpf::testing::random_vector(rng, 6, 3.0);
    const double r = rng.normal();
    const double gamma = rng.uniform(0.5, 1.0);
    const double mean = std::accumulate(q.begin(), q.end(), 0.0) / 6.0;
    const double max = *std::max_element(q.begin(), q.end());
    ASSERT_NEAR(expected_sarsa_target(r, q, 1.0, gamma, false), r + gamma * mean, 1e-12);
    ASSERT_NEAR(expected_sarsa_target(r, q, 0.0, gamma, false), r + gamma * max, 1e-12);
    ASSERT_EQ(expected_sarsa_target(r, q, 0.3, gamma, true), r);
    // Linear in epsilon between the two limits.
    const double e = rng.uniform();
    ASSERT_NEAR(expected_sarsa_target(r, q, e, gamma, false), r + gamma * (e * mean + (1 - e) * max), 1e-12);
  });
}

TEST(ExpectedSarsa, RejectsBadEpsilon) {
  const std::vector<double> q{1, 2};
  EXPECT_THROW(expected_sarsa_target(0.0, q, 1.5, 0.9, false), ValidationError);
  EXPECT_THROW(expected_sarsa_target(0.0, {}, 0.5, 0.9, false), ValidationError);
}

TEST(GreedyAction, LowestIndexWinsTies) {
  EXPECT_EQ(greedy_action(std::vector<double>{1, 3, 3, 2}), 1);
  EXPECT_EQ(greedy_action(std::vector<double>{0, 0, 0}), 0);
  EXPECT_EQ(greedy_action(std::vector<double>{-5, -1, -2}), 1);
}

TEST(SelectAction, FrequenciesMatchEpsilonGreedy) {
  const std::vector<double> q{0.0, 1.0, 5.0, 2.0, 0.5, -1.0};
  const double eps = 0.3;
  Rng rng(42);
  const int n = 120000;
  std::array<int, 6> counts{};
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(select_action(q, eps, rng))];
  for (int a = 0; a < 6; ++a) {
    const double p = (a == 2 ? 1.0 - eps : 0.0) + eps / 6.0;
    const double sd = std::sqrt(n * p * (1 - p));
    EXPECT_NEAR(counts[static_cast<std::size_t>(a)], n * p, 5.0 * sd) << a;
  }
}

TEST(SelectAction, ZeroEpsilonIsGreedyAndUsesOneDraw) {
  const std::vector<double> q{0.0, 1.0, 5.0};
  Rng a(7), b(7);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(select_action(q, 0.0, a), 2);
    b.uniform();
  }
  EXPECT_EQ(a, b);
}

TEST(DecayEpsilon, ScheduleAndFloor) {
  double eps = 1.0;
  for (int i = 0; i < 4500; ++i) eps = decay_epsilon(eps, 0.9995, 0.05);
  EXPECT_NEAR(eps, std::pow(0.9995, 4500), 1e-12);
  EXPECT_NEAR(eps, 0.10534, 1e-4);
  for (int i = 0; i < 10000; ++i) eps = decay_epsilon(eps, 0.9995, 0.05);
  EXPECT_EQ(eps, 0.05);
}

TEST(TrainingSeed, DisjointFromEvaluationSeeds) {
  TrainConfig cfg;
  EXPECT_EQ(training_seed(42, 0), 42ULL << 32);
  EXPECT_EQ(training_seed(42, 7), (42ULL << 32) + 7);
  EXPECT_GT(training_seed(1, 0), cfg.eval_seed_base + 1'000'000);
  cfg.env_seed = 1ULL << 31;
  EXPECT_THROW(cfg.validate(), ValidationError);
}

TEST(RunEpisode, TransitionsChainAndOnlySuccessIsTerminal) {
  PlumeEnv env(PlumeConfig{}, short_env());
  Rng rng(3);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::vector<Transition> ts;
    EpisodeTrace trace;
    const auto out = run_episode(nullptr, env, seed, 1.0, rng, &trace, &ts);
    ASSERT_EQ(static_cast<int>(ts.size()), out.steps);
    ASSERT_EQ(trace.steps.size(), ts.size());
    ASSERT_EQ(ts.front().state, trace.start_token);
    for (std::size_t i = 1; i < ts.size(); ++i) ASSERT_EQ(ts[i].state, ts[i - 1].next);
    for (std::size_t i = 0; i + 1 < ts.size(); ++i) ASSERT_FALSE(ts[i].terminal);
    ASSERT_EQ(ts.back().terminal, out.termination == Termination::Success);
    double ret = 0.0;
    for (const auto& t : ts) ret += t.reward;
    ASSERT_NEAR(ret, out.episode_return, 1e-9);
    ASSERT_EQ(trace.tokens().actions.size(), ts.size());
  }
}

TEST(Evaluate, ParallelEqualsSequential) {
  Rng rng(5);
  GpfConfig g = tiny_gpf();
  const auto net = GpfNetwork::create(g, rng);
  std::vector<Transition> seq_t, par_t;
  const auto seq = evaluate(&net, PlumeConfig{}, short_env(), 9, 1000, 0.2, 1, &seq_t);
  const auto par = evaluate(&net, PlumeConfig{}, short_env(), 9, 1000, 0.2, 4, &par_t);
  EXPECT_EQ(seq.successes, par.successes);
  EXPECT_EQ(seq.timeouts, par.timeouts);
  ASSERT_EQ(seq.episodes.size(), par.episodes.size());
  for (std::size_t i = 0; i < seq.episodes.size(); ++i) {
    EXPECT_EQ(seq.episodes[i].steps, par.episodes[i].steps);
    EXPECT_EQ(seq.episodes[i].episode_return, par.episodes[i].episode_return);
  }
  ASSERT_EQ(seq_t.size(), par_t.size());
  for (std::size_t i = 0; i < seq_t.size(); ++i) {
    EXPECT_EQ(seq_t[i].state, par_t[i].state);
    EXPECT_EQ(seq_t[i].action, par_t[i].action);
  }
}

TEST(Evaluate, CountsAndRates) {
  const auto r = evaluate(nullptr, PlumeConfig{}, short_env(), 10, 77, 1.0);
  EXPECT_EQ(r.successes + r.timeouts, 10);
  EXPECT_DOUBLE_EQ(r.success_rate, r.successes / 10.0);
  if (r.successes == 0) {
    EXPECT_TRUE(std::isnan(r.mean_steps));
  } else {
    EXPECT_LE(r.mean_steps, 150.0);
  }
  EXPECT_THROW(evaluate(nullptr, PlumeConfig{}, short_env(), 0, 0, 1.0), ValidationError);
}

TEST(ProbeLoss, MatchesDirectComputation) {
  Rng rng(6);
  const auto net = GpfNetwork::create(tiny_gpf(), rng);
  std::vector<Transition> probe;
  for (int i = 0; i < 30; ++i) {
    probe.push_back({gpf::testing::random_token(rng), rng.uniform_int(6), rng.normal(),
                     gpf::testing::random_token(rng), i % 7 == 0});
  }
  for (auto rule : {TargetRule::Expected, TargetRule::Greedy}) {
    double acc = 0.0;
    for (const auto& t : probe) {
      const auto q = net.forward(encode_onehot(t.state));
      const auto qn = net.forward(encode_onehot(t.next));
      const double mean = std::accumulate(qn.begin(), qn.end(), 0.0) / 6.0;
      const double max = *std::max_element(qn.begin(), qn.end());
      const double v = rule == TargetRule::Greedy ? max : 0.1 * mean + 0.9 * max;
      const double target = t.terminal ? t.reward : t.reward + 0.95 * v;
      acc += std::pow(q[static_cast<std::size_t>(t.action)] - target, 2);
    }
    EXPECT_NEAR(probe_loss(net, probe, 0.1, 0.95, rule), acc / 30.0, 1e-10);
  }
  EXPECT_THROW(probe_loss(net, {}, 0.1, 0.95, TargetRule::Expected), ValidationError);
}

TEST(Train, ZeroEpisodesReturnsInitialNetwork) {
  TrainConfig cfg = tiny_train();
  cfg.episodes = 0;
  const auto result = train(cfg, tiny_gpf(), PlumeConfig{}, short_env());
  EXPECT_TRUE(result.records.empty());
  Rng rng(cfg.agent_seed);
  const auto fresh = GpfNetwork::create(tiny_gpf(), rng);
  EXPECT_EQ(result.final_network.layer(0).weights, fresh.layer(0).weights);
  EXPECT_EQ(result.best.meta.episode, 0);
}

TEST(Train, DeterministicGivenSeeds) {
  const auto a = train(tiny_train(), tiny_gpf(), PlumeConfig{}, short_env());
  const auto b = train(tiny_train(), tiny_gpf(), PlumeConfig{}, short_env());
  ASSERT_EQ(a.records.size(), 2u);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].val_loss, b.records[i].val_loss);
    EXPECT_EQ(a.records[i].success_rate, b.records[i].success_rate);
    EXPECT_EQ(a.records[i].event, b.records[i].event);
    EXPECT_EQ(a.records[i].mean_reward.shape, b.records[i].mean_reward.shape);
  }
  EXPECT_EQ(checkpoint_bytes(a.best), checkpoint_bytes(b.best));
  EXPECT_EQ(a.final_network.layer(0).weights, b.final_network.layer(0).weights);
}

TEST(Train, SeedChangesTheRun) {
  auto cfg = tiny_train();
  const auto a = train(cfg, tiny_gpf(), PlumeConfig{}, short_env());
  cfg.agent_seed = 44;
  const auto b = train(cfg, tiny_gpf(), PlumeConfig{}, short_env());
  EXPECT_NE(a.final_network.layer(0).weights, b.final_network.layer(0).weights);
}

TEST(Train, RecordsScheduleAndGrowth) {
  auto cfg = tiny_train();
  cfg.episodes = 30;
  cfg.eval_every = 3;
  auto g = tiny_gpf();
  g.stagnation_threshold = 1e9;  // nothing counts as improvement
  std::vector<std::int64_t> seen;
  const auto result = train(cfg, g, PlumeConfig{}, short_env(), [&](const TrainRecord& r) { seen.push_back(r.episode); });
  ASSERT_EQ(seen.size(), 10u);
  for (std::size_t i = 0; i < seen.size(); ++i) EXPECT_EQ(seen[i], 3 * static_cast<std::int64_t>(i + 1));
  int grows = 0;
  std::int64_t last = -100;
  for (const auto& r : result.records) {
    if (!r.grew) continue;
    ++grows;
    EXPECT_GE(r.episode - last, g.grow_patience);
    last = r.episode;
    EXPECT_TRUE(r.prune_retained.has_value());
    EXPECT_EQ(r.event.rfind("G: layer ", 0), 0u) << r.event;
  }
  EXPECT_GE(grows, 1);
  EXPECT_LE(grows, 3);
  EXPECT_LE(result.final_network.hidden_layers(), 4u);
  for (std::size_t i = 1; i < result.records.size(); ++i) {
    EXPECT_LE(result.records[i].epsilon, result.records[i - 1].epsilon);
  }
}

TEST(Train, StaticModeNeverChangesStructure) {
  auto cfg = tiny_train();
  cfg.gpf = false;
  auto g = tiny_gpf();
  g.stagnation_threshold = 1e9;
  const auto result = train(cfg, g, PlumeConfig{}, short_env());
  for (const auto& r : result.records) {
    EXPECT_EQ(r.event, "---");
    EXPECT_EQ(r.layers, 1);
    EXPECT_EQ(r.retained, 1.0);
  }
}

TEST(Train, BatchedUpdatesRun) {
  auto g = tiny_gpf();
  g.base_batch_size = 8;
  const auto result = train(tiny_train(), g, PlumeConfig{}, short_env());
  for (const auto& r : result.records) EXPECT_TRUE(std::isfinite(r.val_loss));
}

TEST(Train, HugeLearningRateAbortsWithDiagnostic) {
  auto g = tiny_gpf();
  g.learning_rate = 1e300;
  try {
    train(tiny_train(), g, PlumeConfig{}, short_env());
    FAIL() << "expected a numerical abort";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("episode"), std::string::npos) << e.what();
  }
}
