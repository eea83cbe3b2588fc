#include "gpf/env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "gpf/errors.hpp"

namespace gpf {

double heading_change(Action a) {
  switch (a) {
    case Action::SurgeForward: return 0.0;
    case Action::TurnLeft15: return deg_to_rad(15.0);
    case Action::TurnRight15: return -deg_to_rad(15.0);
    case Action::TurnAround180: return std::numbers::pi;
    case Action::CastLeft30: return deg_to_rad(30.0);
    case Action::CastRight30: return -deg_to_rad(30.0);
  }
  throw std::invalid_argument("heading_change: unknown action");
}

std::string_view action_name(Action a) {
  switch (a) {
    case Action::SurgeForward: return "surge";
    case Action::TurnLeft15: return "turn_left_15";
    case Action::TurnRight15: return "turn_right_15";
    case Action::TurnAround180: return "turn_around";
    case Action::CastLeft30: return "cast_left_30";
    case Action::CastRight30: return "cast_right_30";
  }
  return "unknown";
}

std::string_view termination_name(Termination t) {
  switch (t) {
    case Termination::None: return "none";
    case Termination::Success: return "success";
    case Termination::Timeout: return "timeout";
  }
  return "unknown";
}

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi) {
    a += two_pi;
  } else if (a > std::numbers::pi) {
    a -= two_pi;
  }
  return a;
}

void EnvConfig::validate() const {
  if (max_steps <= 0) throw ValidationError("max_steps", "must be > 0");
  if (!(step_length >= 0.0)) throw ValidationError("step_length", "must be >= 0");
  if (!(success_radius > 0.0)) throw ValidationError("success_radius", "must be > 0");
  if (!(antenna_separation >= 0.0)) throw ValidationError("antenna_separation", "must be >= 0");
  if (!(min_start_distance > 0.0 && min_start_distance <= max_start_distance)) {
    throw ValidationError("min_start_distance", "need 0 < min <= max_start_distance");
  }
  if (!(heading_noise >= 0.0 && heading_noise <= std::numbers::pi)) {
    throw ValidationError("heading_noise", "must lie in [0, pi]");
  }
  if (max_placement_retries < 1) throw ValidationError("max_placement_retries", "must be >= 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ValidationError("gamma", "must lie in (0, 1]");
  if (blank_streak_limit < 0) throw ValidationError("blank_streak_limit", "must be >= 0");
}

double shaping_potential(double distance, const EnvConfig& cfg) { return -cfg.shaping_scale * distance; }

RewardParts reward_of(double prev_dist, double new_dist, bool whiff, int blank_streak, bool success, double gamma,
                      const EnvConfig& cfg) {
  if (!(prev_dist >= 0.0) || !(new_dist >= 0.0)) {
    throw ValidationError("distance", "distances must be >= 0");
  }
  RewardParts r;
  r.time = cfg.time_penalty;
  if (success) {
    r.event += cfg.success_reward;
  }
  if (whiff) {
    r.event += cfg.whiff_reward;
  }
  if (blank_streak > cfg.blank_streak_limit) {
    r.event += cfg.blank_penalty;
  }
  r.shape = gamma * shaping_potential(new_dist, cfg) - shaping_potential(prev_dist, cfg);
  return r;
}

ObservationToken tokenize(const RawObservation& obs, const PlumeConfig& cfg) {
  return {quantize_concentration(obs.left_conc, cfg.noise_std), quantize_concentration(obs.right_conc, cfg.noise_std),
          quantize_wind(obs.wind_dir_rel, obs.wind_speed, cfg.calm_threshold)};
}

PlumeEnv::PlumeEnv(PlumeConfig plume_cfg, EnvConfig env_cfg)
    : plume_cfg_(plume_cfg), env_cfg_(env_cfg) {
  plume_cfg_.validate();
  env_cfg_.validate();
}

double PlumeEnv::distance_to_source() const { return norm(pose_.position - plume_.source); }

RawObservation PlumeEnv::reset(std::uint64_t seed) {
  plume_ = plume_reset(plume_cfg_, mix_seed(seed, 0));
  rng_ = Rng(mix_seed(seed, 1));

  const Vec2 downwind{std::cos(plume_cfg_.wind_mean_dir), std::sin(plume_cfg_.wind_mean_dir)};
  bool placed = false;
  for (int attempt = 0; attempt < env_cfg_.max_placement_retries && !placed; ++attempt) {
    const double d = rng_.uniform(env_cfg_.min_start_distance, env_cfg_.max_start_distance);
    const Vec2 p = plume_.source + d * downwind;
    if (inside_domain(p, plume_cfg_)) {
      pose_.position = p;
      placed = true;
    }
  }
  if (!placed) {
    throw ValidationError("max_start_distance", "agent placement fell outside the domain on every retry");
  }
  const Vec2 to_source = plume_.source - pose_.position;
  const double noise = env_cfg_.heading_noise > 0.0 ? rng_.uniform(-env_cfg_.heading_noise, env_cfg_.heading_noise)
                                                    : 0.0;
  pose_.heading = wrap_angle(std::atan2(to_source.y, to_source.x) + noise);

  steps_ = 0;
  blank_streak_ = 0;
  done_ = false;
  last_obs_ = observe();
  return last_obs_;
}

RawObservation PlumeEnv::observe() {
  const double half = 0.5 * env_cfg_.antenna_separation;
  const Vec2 left_dir{-std::sin(pose_.heading), std::cos(pose_.heading)};
  auto clip = [&](Vec2 p) {
    return Vec2{std::clamp(p.x, 0.0, plume_cfg_.domain_width), std::clamp(p.y, 0.0, plume_cfg_.domain_height)};
  };
  RawObservation obs;
  obs.left_conc = concentration_at(plume_, clip(pose_.position + half * left_dir), plume_cfg_, rng_);
  obs.right_conc = concentration_at(plume_, clip(pose_.position - half * left_dir), plume_cfg_, rng_);
  obs.wind_speed = plume_.wind.speed;
  obs.wind_dir_rel = wrap_angle(plume_.wind.direction + std::numbers::pi - pose_.heading);
  obs.source_distance = distance_to_source();
  return obs;
}

StepOutcome PlumeEnv::step(Action a) {
  if (done_) {
    throw std::logic_error("PlumeEnv::step called on a terminated episode");
  }
  const double prev_dist = distance_to_source();

  pose_.heading = wrap_angle(pose_.heading + heading_change(a));
  pose_.position = pose_.position + env_cfg_.step_length * Vec2{std::cos(pose_.heading), std::sin(pose_.heading)};
  pose_.position.x = std::clamp(pose_.position.x, 0.0, plume_cfg_.domain_width);
  pose_.position.y = std::clamp(pose_.position.y, 0.0, plume_cfg_.domain_height);

  plume_step(plume_, plume_cfg_);
  ++steps_;

  StepOutcome out;
  out.observation = observe();
  out.token = tokenize(out.observation, plume_cfg_);
  out.whiff = out.token.left >= 1 || out.token.right >= 1;
  blank_streak_ = out.whiff ? 0 : blank_streak_ + 1;
  out.blank_streak = blank_streak_;

  const double new_dist = out.observation.source_distance;
  const bool success = new_dist <= env_cfg_.success_radius;
  out.parts = reward_of(prev_dist, new_dist, out.whiff, blank_streak_, success, env_cfg_.gamma, env_cfg_);
  out.reward = out.parts.time + out.parts.event + out.parts.shape;

  if (success) {
    out.terminated = Termination::Success;
  } else if (steps_ >= env_cfg_.max_steps) {
    out.terminated = Termination::Timeout;
  }
  done_ = out.terminated != Termination::None;
  last_obs_ = out.observation;
  return out;
}

}  // namespace gpf
