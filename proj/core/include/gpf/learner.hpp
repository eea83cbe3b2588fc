#pragma once

// Online Expected SARSA over the plume environment with the GPF schedule.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gpf/checkpoint.hpp"
#include "gpf/env.hpp"
#include "gpf/network.hpp"

namespace gpf {

enum class TargetRule { Expected, Greedy };

struct TrainConfig {
  int episodes = 4500;
  int eval_every = 500;
  int eval_episodes = 200;
  double gamma = 0.99;
  double epsilon_start = 1.0;
  double epsilon_min = 0.05;
  double epsilon_decay = 0.9995;
  double eval_epsilon = 0.05;
  std::uint64_t env_seed = 42;
  std::uint64_t agent_seed = 43;
  std::uint64_t eval_seed_base = 1'000'000;
  std::uint64_t test_seed_base = 2'000'000;
  int test_episodes = 100;
  int probe_size = 2048;
  TargetRule target = TargetRule::Expected;
  bool gpf = true;        // false: static network, no grow / prune / freeze
  int eval_threads = 1;   // 0 = hardware concurrency

  void validate() const;
};

/// Environment seed of training episode `index` (0-based): env_seed * 2^32 + index.
/// Evaluation seeds are seed_base + j with seed_base < 2^32, so the two never meet.
std::uint64_t training_seed(std::uint64_t env_seed, std::int64_t index);

struct Transition {
  ObservationToken state;
  int action = 0;
  double reward = 0.0;
  ObservationToken next;
  bool terminal = false;  // success only; timeouts bootstrap
};

/// r if terminated, else r + gamma [(eps/|A|) sum q' + (1 - eps) max q'].
double expected_sarsa_target(double reward, std::span<const double> q_next, double epsilon, double gamma,
                             bool terminated);

/// argmax with the lowest index winning ties.
int greedy_action(std::span<const double> q);

/// Uniform with probability epsilon, greedy otherwise. Draws one uniform
/// always and a second only when exploring.
int select_action(std::span<const double> q, double epsilon, Rng& rng);

double decay_epsilon(double epsilon, double decay = 0.9995, double floor = 0.05);

struct EpisodeOutcome {
  std::uint64_t seed = 0;
  Termination termination = Termination::None;
  int steps = 0;
  double episode_return = 0.0;
  RewardParts reward_sums;
  double final_distance = 0.0;
};

struct TraceStep {
  int step = 0;
  AgentPose pose;  // after the move
  RawObservation observation;
  ObservationToken token;
  int action = 0;
  RewardParts parts;
  double reward = 0.0;
  Termination termination = Termination::None;
};

struct EpisodeTrace {
  std::uint64_t seed = 0;
  AgentPose start_pose;
  RawObservation start_observation;
  ObservationToken start_token;
  std::vector<TraceStep> steps;

  EpisodeTokens tokens() const;
};

/// Runs one episode without learning. A null network acts uniformly at
/// random. `rng` drives action selection only.
EpisodeOutcome run_episode(const GpfNetwork* net, PlumeEnv& env, std::uint64_t seed, double epsilon, Rng& rng,
                           EpisodeTrace* trace = nullptr, std::vector<Transition>* transitions = nullptr);

struct EvalResult {
  double success_rate = 0.0;
  double mean_steps = 0.0;  // over successful episodes; NaN when none succeeded
  int successes = 0;
  int timeouts = 0;
  std::vector<EpisodeOutcome> episodes;
};

/// n_episodes episodes on seeds seed_base + j. Episode j selects actions
/// from Rng(mix_seed(seed_base + j, 2)), so results do not depend on the
/// thread count. When `transitions` is given, episode transitions are
/// appended in episode order.
EvalResult evaluate(const GpfNetwork* net, const PlumeConfig& plume_cfg, const EnvConfig& env_cfg, int n_episodes,
                    std::uint64_t seed_base, double epsilon, int threads = 1,
                    std::vector<Transition>* transitions = nullptr);

/// Mean squared TD error over a fixed transition set.
double probe_loss(const GpfNetwork& net, std::span<const Transition> probe, double epsilon, double gamma,
                  TargetRule rule);

struct TrainRecord {
  std::int64_t episode = 0;
  double success_rate = 0.0;
  double mean_steps = 0.0;
  int layers = 0;                           // hidden layers after this checkpoint's events
  std::string event;                        // "---" when nothing happened
  bool grew = false;
  std::optional<double> prune_retained;     // retention over the prune scope
  std::vector<std::size_t> frozen_layers;
  double retained = 1.0;                    // whole-network active / total
  double val_loss = 0.0;
  double epsilon = 0.0;
  RewardParts mean_reward;                  // per training episode since the last record
};

struct TrainResult {
  Checkpoint best;  // network as evaluated at the best checkpoint
  GpfNetwork final_network;
  std::vector<TrainRecord> records;
};

using RecordCallback = std::function<void(const TrainRecord&)>;
/// Called after every training episode, once that episode's structural
/// events (if any) have been applied.
using NetworkObserver = std::function<void(std::int64_t episode, const GpfNetwork&)>;

/// Throws NumericalError (with a diagnostic message) on a non-finite
/// Q-value, target or validation loss.
TrainResult train(const TrainConfig& cfg, const GpfConfig& gpf_cfg, const PlumeConfig& plume_cfg,
                  EnvConfig env_cfg, const RecordCallback& on_record = {}, const NetworkObserver& observe = {});

}  // namespace gpf
