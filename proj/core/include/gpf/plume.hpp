#pragma once

// Farrell-Murlis style filament plume in a 2-D rectangular domain.
//
// Filaments are Gaussian odor packets released at the source by a Poisson
// process, advected by a spatially uniform wind whose speed and direction
// follow discrete Ornstein-Uhlenbeck recursions, and widened by molecular
// diffusion. Wind direction is the direction the wind blows toward, in the
// world frame, counter-clockwise from +x.

#include <cstdint>
#include <numbers>
#include <vector>

#include "gpf/rng.hpp"

namespace gpf {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2, Vec2) = default;
};

double norm(Vec2 v);
double squared_norm(Vec2 v);

inline constexpr double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }

struct PlumeConfig {
  double domain_width = 20.0;   // m
  double domain_height = 20.0;  // m
  double dt = 0.1;              // s
  double emission_rate = 5.0;   // filaments / s
  double filament_mass = 0.1;
  double init_radius = 0.01;     // m
  double diffusion_rate = 0.05;  // m^2 / s
  double decay_time = 30.0;      // s
  double noise_std = 1e-3;
  double conc_clamp = 1.0;

  double wind_mean_speed = 1.0;               // m/s
  double wind_mean_dir = 0.0;                 // rad
  double wind_speed_std = 0.2;                // m/s
  double wind_dir_std = deg_to_rad(15.0);     // rad
  double wind_corr_time = 2.0;                // s
  double wind_min_speed = 0.1;                // m/s
  double calm_threshold = 0.05;               // m/s

  // Source placement as fractions of the domain extent: fixed upwind offset
  // from the centre plus uniform jitter on both axes.
  double source_upwind_offset = 0.25;
  double source_jitter = 0.15;

  // Filaments leaving the domain are dropped. Disable for population studies.
  bool remove_outside_domain = true;

  /// Mean-reversion coefficient dt / tau_c.
  double wind_alpha() const { return dt / wind_corr_time; }

  /// Throws ValidationError naming the first invalid field.
  void validate() const;
};

struct Filament {
  std::uint64_t id = 0;
  Vec2 center;
  std::int64_t age_steps = 0;

  double age(double dt) const { return static_cast<double>(age_steps) * dt; }
};

struct WindState {
  double speed = 0.0;
  double direction = 0.0;
};

struct PlumeState {
  std::vector<Filament> filaments;
  WindState wind;
  Vec2 source;
  std::int64_t step = 0;
  std::uint64_t next_filament_id = 0;
  Rng rng;

  double time(const PlumeConfig& cfg) const { return static_cast<double>(step) * cfg.dt; }
};

/// Fresh plume: source placed upwind, no filaments, wind at its mean.
PlumeState plume_reset(const PlumeConfig& cfg, std::uint64_t seed);

/// One OU update with explicit innovations; speed is clamped to v_min.
WindState wind_step(const WindState& w, const PlumeConfig& cfg, double eps_speed, double eps_dir);
WindState wind_step(const WindState& w, const PlumeConfig& cfg, Rng& rng);

/// Emit, advect, age and cull filaments, then advance the wind.
void plume_step(PlumeState& s, const PlumeConfig& cfg);

/// sigma(tau) = sqrt(sigma0^2 + 2 D tau). Throws for negative age.
double filament_radius(double age, const PlumeConfig& cfg);

/// Gaussian kernel m / (2 pi sigma^2) exp(-d^2 / (2 sigma^2)), no cutoff.
double filament_kernel(double squared_distance, double sigma, const PlumeConfig& cfg);

/// Noise-free, unclamped sum of filament kernels at p (3-sigma cutoff).
double raw_concentration(const PlumeState& s, Vec2 p, const PlumeConfig& cfg);

/// Sensor reading at p: kernel sum plus N(0, noise_std^2), clamped to
/// [0, conc_clamp]. Pass no rng for a noiseless reading. Points outside
/// the domain are rejected.
double concentration_at(const PlumeState& s, Vec2 p, const PlumeConfig& cfg);
double concentration_at(const PlumeState& s, Vec2 p, const PlumeConfig& cfg, Rng& rng);

bool inside_domain(Vec2 p, const PlumeConfig& cfg);

}  // namespace gpf
