#pragma once

// Single-agent plume-search episode: pose, six discrete actions, bilateral
// antenna sensing, shaped reward and termination.

#include <array>
#include <cstdint>
#include <numbers>
#include <string_view>

#include "gpf/plume.hpp"
#include "gpf/tokenizer.hpp"

namespace gpf {

enum class Action : int {
  SurgeForward = 0,
  TurnLeft15 = 1,
  TurnRight15 = 2,
  TurnAround180 = 3,
  CastLeft30 = 4,
  CastRight30 = 5,
};

inline constexpr std::array<Action, kActionCount> kAllActions{
    Action::SurgeForward, Action::TurnLeft15, Action::TurnRight15,
    Action::TurnAround180, Action::CastLeft30, Action::CastRight30,
};

/// Heading change in radians, counter-clockwise positive.
double heading_change(Action a);
std::string_view action_name(Action a);

/// Wraps an angle to (-pi, pi].
double wrap_angle(double a);

struct EnvConfig {
  int max_steps = 1200;
  double step_length = 0.5;      // m, translation after every action
  double success_radius = 0.5;   // m
  double antenna_separation = 0.10;
  double min_start_distance = 3.0;
  double max_start_distance = 10.0;
  double heading_noise = deg_to_rad(30.0);  // half-width of uniform noise
  int max_placement_retries = 100;

  double gamma = 0.99;           // shaping discount; kept equal to the learner's
  double shaping_scale = 0.1;    // Phi(s) = -shaping_scale * distance
  double time_penalty = -0.01;
  double success_reward = 100.0;
  double whiff_reward = 1.0;
  double blank_penalty = -0.05;
  int blank_streak_limit = 20;   // penalty while the streak exceeds this

  void validate() const;
};

struct AgentPose {
  Vec2 position;
  double heading = 0.0;
};

struct RawObservation {
  double left_conc = 0.0;
  double right_conc = 0.0;
  double wind_speed = 0.0;
  double wind_dir_rel = 0.0;     // arrival direction, CCW from heading
  double source_distance = 0.0;  // privileged: shaping and metrics only
};

enum class Termination { None, Success, Timeout };
std::string_view termination_name(Termination t);

struct RewardParts {
  double time = 0.0;
  double event = 0.0;
  double shape = 0.0;

  double total() const { return time + event + shape; }
};

struct StepOutcome {
  RawObservation observation;
  ObservationToken token;
  RewardParts parts;
  double reward = 0.0;
  Termination terminated = Termination::None;
  bool whiff = false;
  int blank_streak = 0;
};

/// Shaping potential Phi(d) = -scale * d.
double shaping_potential(double distance, const EnvConfig& cfg);

RewardParts reward_of(double prev_dist, double new_dist, bool whiff, int blank_streak, bool success, double gamma,
                      const EnvConfig& cfg = {});

ObservationToken tokenize(const RawObservation& obs, const PlumeConfig& cfg);

class PlumeEnv {
public:
  PlumeEnv(PlumeConfig plume_cfg, EnvConfig env_cfg);

  /// Starts an episode. Deterministic in seed.
  RawObservation reset(std::uint64_t seed);

  /// Advances one decision step. Throws std::logic_error once terminated.
  StepOutcome step(Action a);

  const AgentPose& pose() const { return pose_; }
  const PlumeState& plume() const { return plume_; }
  const PlumeConfig& plume_config() const { return plume_cfg_; }
  const EnvConfig& env_config() const { return env_cfg_; }
  const RawObservation& last_observation() const { return last_obs_; }
  ObservationToken last_token() const { return tokenize(last_obs_, plume_cfg_); }
  int steps() const { return steps_; }
  bool done() const { return done_; }
  double distance_to_source() const;

private:
  RawObservation observe();

  PlumeConfig plume_cfg_;
  EnvConfig env_cfg_;
  PlumeState plume_;
  Rng rng_;
  AgentPose pose_;
  RawObservation last_obs_;
  int steps_ = 0;
  int blank_streak_ = 0;
  bool done_ = true;
};

}  // namespace gpf
