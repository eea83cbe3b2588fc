#include "gpf/learner.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <thread>

#include "gpf/errors.hpp"

namespace gpf {

void TrainConfig::validate() const {
  if (episodes < 0) throw ValidationError("episodes", "must be >= 0");
  if (eval_every <= 0) throw ValidationError("eval_every", "must be > 0");
  if (eval_episodes <= 0) throw ValidationError("eval_episodes", "must be > 0");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ValidationError("gamma", "must lie in (0, 1]");
  if (!(epsilon_min >= 0.0 && epsilon_min <= epsilon_start && epsilon_start <= 1.0)) {
    throw ValidationError("epsilon_start", "need 0 <= epsilon_min <= epsilon_start <= 1");
  }
  if (!(epsilon_decay > 0.0 && epsilon_decay <= 1.0)) throw ValidationError("epsilon_decay", "must lie in (0, 1]");
  if (!(eval_epsilon >= 0.0 && eval_epsilon <= 1.0)) throw ValidationError("eval_epsilon", "must lie in [0, 1]");
  if (env_seed >= (1ULL << 31)) throw ValidationError("env_seed", "must be < 2^31");
  if (eval_seed_base >= (1ULL << 32) || test_seed_base >= (1ULL << 32)) {
    throw ValidationError("eval_seed_base", "evaluation seed bases must be < 2^32");
  }
  if (test_episodes <= 0) throw ValidationError("test_episodes", "must be > 0");
  if (probe_size <= 0) throw ValidationError("probe_size", "must be > 0");
  if (eval_threads < 0) throw ValidationError("eval_threads", "must be >= 0");
}

std::uint64_t training_seed(std::uint64_t env_seed, std::int64_t index) {
  return (env_seed << 32) + static_cast<std::uint64_t>(index);
}

double expected_sarsa_target(double reward, std::span<const double> q_next, double epsilon, double gamma,
                             bool terminated) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw ValidationError("epsilon", "must lie in [0, 1]");
  }
  if (terminated) {
    return reward;
  }
  if (q_next.empty()) {
    throw ValidationError("q_next", "empty action-value vector");
  }
  double sum = 0.0;
  for (double q : q_next) sum += q;
  const double best = q_next[static_cast<std::size_t>(greedy_action(q_next))];
  const double expectation = epsilon / static_cast<double>(q_next.size()) * sum + (1.0 - epsilon) * best;
  return reward + gamma * expectation;
}

int greedy_action(std::span<const double> q) {
  int best = 0;
  for (std::size_t a = 1; a < q.size(); ++a) {
    if (q[a] > q[static_cast<std::size_t>(best)]) {
      best = static_cast<int>(a);
    }
  }
  return best;
}

int select_action(std::span<const double> q, double epsilon, Rng& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw ValidationError("epsilon", "must lie in [0, 1]");
  }
  if (rng.uniform() < epsilon) {
    return rng.uniform_int(static_cast<int>(q.size()));
  }
  return greedy_action(q);
}

double decay_epsilon(double epsilon, double decay, double floor) { return std::max(floor, epsilon * decay); }

EpisodeTokens EpisodeTrace::tokens() const {
  EpisodeTokens t;
  t.observations.push_back(start_token);
  for (const auto& s : steps) {
    t.actions.push_back(s.action);
    t.observations.push_back(s.token);
  }
  return t;
}

EpisodeOutcome run_episode(const GpfNetwork* net, PlumeEnv& env, std::uint64_t seed, double epsilon, Rng& rng,
                           EpisodeTrace* trace, std::vector<Transition>* transitions) {
  EpisodeOutcome out;
  out.seed = seed;
  env.reset(seed);
  ObservationToken token = env.last_token();
  if (trace) {
    trace->seed = seed;
    trace->start_pose = env.pose();
    trace->start_observation = env.last_observation();
    trace->start_token = token;
    trace->steps.clear();
  }
  std::vector<double> q(kActionCount, 0.0);
  while (!env.done()) {
    int action = 0;
    if (net) {
      const auto x = encode_onehot(token);
      q = net->forward(x);
      action = select_action(q, epsilon, rng);
    } else {
      action = rng.uniform_int(kActionCount);
    }
    const auto step = env.step(static_cast<Action>(action));
    out.episode_return += step.reward;
    out.reward_sums.time += step.parts.time;
    out.reward_sums.event += step.parts.event;
    out.reward_sums.shape += step.parts.shape;
    if (transitions) {
      transitions->push_back({token, action, step.reward, step.token, step.terminated == Termination::Success});
    }
    if (trace) {
      trace->steps.push_back({env.steps(), env.pose(), step.observation, step.token, action, step.parts, step.reward,
                              step.terminated});
    }
    token = step.token;
    out.termination = step.terminated;
  }
  out.steps = env.steps();
  out.final_distance = env.distance_to_source();
  return out;
}

EvalResult evaluate(const GpfNetwork* net, const PlumeConfig& plume_cfg, const EnvConfig& env_cfg, int n_episodes,
                    std::uint64_t seed_base, double epsilon, int threads, std::vector<Transition>* transitions) {
  if (n_episodes <= 0) {
    throw ValidationError("n_episodes", "evaluation needs at least one episode");
  }
  const auto n = static_cast<std::size_t>(n_episodes);
  std::vector<EpisodeOutcome> outcomes(n);
  std::vector<std::vector<Transition>> per_episode(transitions ? n : 0);

  auto worker = [&](std::size_t begin, std::size_t stride) {
    PlumeEnv env(plume_cfg, env_cfg);
    for (std::size_t j = begin; j < n; j += stride) {
      const std::uint64_t seed = seed_base + j;
      Rng rng(mix_seed(seed, 2));
      outcomes[j] = run_episode(net, env, seed, epsilon, rng, nullptr, transitions ? &per_episode[j] : nullptr);
    }
  };
  std::size_t pool = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : static_cast<std::size_t>(threads);
  pool = std::clamp<std::size_t>(pool, 1, n);
  if (pool == 1) {
    worker(0, 1);
  } else {
    std::vector<std::jthread> workers;
    for (std::size_t t = 0; t < pool; ++t) {
      workers.emplace_back(worker, t, pool);
    }
  }

  EvalResult r;
  double steps = 0.0;
  for (const auto& o : outcomes) {
    if (o.termination == Termination::Success) {
      ++r.successes;
      steps += o.steps;
    } else if (o.termination == Termination::Timeout) {
      ++r.timeouts;
    }
  }
  r.success_rate = static_cast<double>(r.successes) / static_cast<double>(n);
  r.mean_steps = r.successes > 0 ? steps / r.successes : std::numeric_limits<double>::quiet_NaN();
  r.episodes = std::move(outcomes);
  if (transitions) {
    for (auto& v : per_episode) {
      transitions->insert(transitions->end(), v.begin(), v.end());
    }
  }
  return r;
}

namespace {

double bootstrap_epsilon(TargetRule rule, double epsilon) { return rule == TargetRule::Greedy ? 0.0 : epsilon; }

}  // namespace

double probe_loss(const GpfNetwork& net, std::span<const Transition> probe, double epsilon, double gamma,
                  TargetRule rule) {
  if (probe.empty()) {
    throw ValidationError("probe", "empty probe set");
  }
  const double eps = bootstrap_epsilon(rule, epsilon);
  double acc = 0.0;
  for (const auto& t : probe) {
    const auto q = net.forward(encode_onehot(t.state));
    double target = t.reward;
    if (!t.terminal) {
      target = expected_sarsa_target(t.reward, net.forward(encode_onehot(t.next)), eps, gamma, false);
    }
    const double err = q[static_cast<std::size_t>(t.action)] - target;
    acc += err * err;
  }
  return acc / static_cast<double>(probe.size());
}

namespace {

std::string percent(double fraction) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << 100.0 * fraction << '%';
  return os.str();
}

[[noreturn]] void numerical_abort(const std::string& what, std::int64_t episode, int step, const GpfNetwork& net) {
  std::ostringstream os;
  os << "non-finite " << what << " at episode " << episode << ", step " << step << "; hidden layers "
     << net.hidden_layers();
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const auto& layer = net.layer(l);
    double max_abs = 0.0;
    bool finite = true;
    for (double w : layer.weights.data()) {
      finite = finite && std::isfinite(w);
      max_abs = std::max(max_abs, std::abs(w));
    }
    os << "; layer " << l << (layer.frozen ? " (frozen)" : "") << " max|w|=" << max_abs
       << (finite ? "" : " contains non-finite weights");
  }
  throw NumericalError(os.str());
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const GpfConfig& gpf_cfg, const PlumeConfig& plume_cfg, EnvConfig env_cfg,
                  const RecordCallback& on_record, const NetworkObserver& observe) {
  cfg.validate();
  gpf_cfg.validate();
  plume_cfg.validate();
  env_cfg.gamma = cfg.gamma;
  env_cfg.validate();

  Rng agent(cfg.agent_seed);
  GpfNetwork net = GpfNetwork::create(gpf_cfg, agent);
  PlumeEnv env(plume_cfg, env_cfg);

  TrainResult result;
  result.best.network = net;
  result.best.meta = {0, cfg.epsilon_start, -1.0};
  result.best.rng_states = {agent.serialize()};

  double epsilon = cfg.epsilon_start;
  std::vector<Transition> probe;
  std::optional<double> last_val_loss;
  RewardParts interval_reward;
  int interval_episodes = 0;

  ForwardCache cache;
  Gradients pending;
  int pending_count = 0;

  for (std::int64_t episode = 1; episode <= cfg.episodes; ++episode) {
    const int batch = last_val_loss ? batch_size(*last_val_loss, net.config()) : net.config().base_batch_size;
    env.reset(training_seed(cfg.env_seed, episode - 1));
    ObservationToken token = env.last_token();
    auto x = encode_onehot(token);
    while (!env.done()) {
      const auto q = net.forward(x, cache);
      for (double v : q) {
        if (!std::isfinite(v)) numerical_abort("Q-value", episode, env.steps(), net);
      }
      const int action = select_action(q, epsilon, agent);
      const auto step = env.step(static_cast<Action>(action));
      interval_reward.time += step.parts.time;
      interval_reward.event += step.parts.event;
      interval_reward.shape += step.parts.shape;

      const auto next_x = encode_onehot(step.token);
      double target = step.reward;
      if (step.terminated != Termination::Success) {
        target = expected_sarsa_target(step.reward, net.forward(next_x), bootstrap_epsilon(cfg.target, epsilon),
                                       cfg.gamma, false);
      }
      if (!std::isfinite(target)) numerical_abort("TD target", episode, env.steps(), net);

      std::vector<double> dq(q.size(), 0.0);
      dq[static_cast<std::size_t>(action)] = q[static_cast<std::size_t>(action)] - target;
      if (batch == 1) {
        net.backward_and_step(cache, dq);
      } else {
        auto g = net.backward(cache, dq);
        if (pending_count == 0) {
          pending = std::move(g);
        } else {
          for (std::size_t l = 0; l < g.weights.size(); ++l) {
            auto& pw = pending.weights[l].data();
            const auto& gw = g.weights[l].data();
            for (std::size_t k = 0; k < pw.size(); ++k) pw[k] += gw[k];
            for (std::size_t k = 0; k < g.bias[l].size(); ++k) pending.bias[l][k] += g.bias[l][k];
          }
        }
        if (++pending_count == batch) {
          net.apply_gradients(pending, 1.0 / batch);
          pending_count = 0;
        }
      }
      x = next_x;
    }
    if (pending_count > 0) {
      net.apply_gradients(pending, 1.0 / pending_count);
      pending_count = 0;
    }
    ++interval_episodes;
    epsilon = decay_epsilon(epsilon, cfg.epsilon_decay, cfg.epsilon_min);
    if (cfg.gpf) {
      net.update_beliefs(episode);
      net.record_stability(episode);
    }

    if (episode % cfg.eval_every != 0) {
      if (observe) observe(episode, net);
      continue;
    }
    const bool collect = probe.empty();
    std::vector<Transition> collected;
    const auto eval = evaluate(&net, plume_cfg, env_cfg, cfg.eval_episodes, cfg.eval_seed_base, cfg.eval_epsilon,
                               cfg.eval_threads, collect ? &collected : nullptr);
    if (collect) {
      collected.resize(std::min(collected.size(), static_cast<std::size_t>(cfg.probe_size)));
      probe = std::move(collected);
    }
    const double val = probe_loss(net, probe, cfg.eval_epsilon, cfg.gamma, cfg.target);
    if (!std::isfinite(val)) numerical_abort("validation loss", episode, 0, net);
    last_val_loss = val;

    if (eval.success_rate > result.best.meta.eval_success) {
      result.best.network = net;
      result.best.meta = {episode, epsilon, eval.success_rate};
      result.best.rng_states = {agent.serialize()};
    }

    TrainRecord rec;
    rec.episode = episode;
    rec.success_rate = eval.success_rate;
    rec.mean_steps = eval.mean_steps;
    rec.val_loss = val;
    rec.epsilon = epsilon;
    std::vector<std::string> events;
    if (cfg.gpf) {
      const auto before = net.hidden_layers();
      if (net.maybe_grow(val, episode, agent)) {
        rec.grew = true;
        std::string e = "G: layer " + std::to_string(before) + " -> " + std::to_string(net.hidden_layers());
        const auto report = net.prune(net.hidden_layers() - 1, episode);
        rec.prune_retained = report.retained_fraction;
        events.push_back(e + "; P: kept " + percent(report.retained_fraction));
      } else if (net.standalone_prune_due(episode)) {
        const auto report = net.prune(net.hidden_layers() - 1, episode);
        rec.prune_retained = report.retained_fraction;
        events.push_back("P: kept " + percent(report.retained_fraction));
      }
      rec.frozen_layers = net.maybe_freeze(episode);
      for (auto l : rec.frozen_layers) {
        events.push_back("F: layer " + std::to_string(l + 1));
      }
    }
    if (events.empty()) {
      rec.event = "---";
    } else {
      for (std::size_t i = 0; i < events.size(); ++i) {
        rec.event += (i ? "; " : "") + events[i];
      }
    }
    rec.layers = static_cast<int>(net.hidden_layers());
    rec.retained = net.retained_fraction();
    const double k = static_cast<double>(std::max(1, interval_episodes));
    rec.mean_reward = {interval_reward.time / k, interval_reward.event / k, interval_reward.shape / k};
    interval_reward = {};
    interval_episodes = 0;
    result.records.push_back(rec);
    if (on_record) {
      on_record(rec);
    }
    if (observe) observe(episode, net);
  }
  result.final_network = std::move(net);
  return result;
}

}  // namespace gpf
