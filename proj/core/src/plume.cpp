#include "gpf/plume.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "gpf/errors.hpp"

namespace gpf {

double norm(Vec2 v) { return std::hypot(v.x, v.y); }
double squared_norm(Vec2 v) { return v.x * v.x + v.y * v.y; }

namespace {

void require_positive(double value, const char* field) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw ValidationError(field, "must be finite and > 0 (got " + std::to_string(value) + ")");
  }
}

void require_nonnegative(double value, const char* field) {
  if (!(value >= 0.0) || !std::isfinite(value)) {
    throw ValidationError(field, "must be finite and >= 0 (got " + std::to_string(value) + ")");
  }
}

void require_fraction(double value, const char* field) {
  if (!(value >= 0.0 && value <= 0.5)) {
    throw ValidationError(field, "must lie in [0, 0.5] (got " + std::to_string(value) + ")");
  }
}

}  // namespace

void PlumeConfig::validate() const {
  require_positive(domain_width, "domain_size");
  require_positive(domain_height, "domain_size");
  require_positive(dt, "dt");
  require_positive(emission_rate, "emission_rate");
  require_positive(filament_mass, "filament_mass");
  require_positive(init_radius, "init_radius");
  require_positive(diffusion_rate, "diffusion_rate");
  require_positive(decay_time, "decay_time");
  require_positive(noise_std, "noise_std");
  require_positive(conc_clamp, "conc_clamp");
  require_positive(wind_mean_speed, "wind_mean_speed");
  require_nonnegative(wind_speed_std, "wind_speed_std");
  require_nonnegative(wind_dir_std, "wind_dir_std");
  require_positive(wind_corr_time, "wind_corr_time");
  require_positive(wind_min_speed, "wind_min_speed");
  require_positive(calm_threshold, "calm_threshold");
  if (!std::isfinite(wind_mean_dir)) {
    throw ValidationError("wind_mean_dir", "must be finite");
  }
  if (!(dt < wind_corr_time)) {
    throw ValidationError("dt", "must be smaller than wind_corr_time");
  }
  require_fraction(source_upwind_offset, "source_upwind_offset");
  require_fraction(source_jitter, "source_jitter");
  if (source_upwind_offset + source_jitter > 0.5) {
    throw ValidationError("source_jitter", "upwind offset plus jitter must stay inside the domain");
  }
}

bool inside_domain(Vec2 p, const PlumeConfig& cfg) {
  return p.x >= 0.0 && p.x <= cfg.domain_width && p.y >= 0.0 && p.y <= cfg.domain_height;
}

PlumeState plume_reset(const PlumeConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  PlumeState s;
  s.rng = Rng(seed);
  s.wind = {cfg.wind_mean_speed, cfg.wind_mean_dir};

  const Vec2 center{0.5 * cfg.domain_width, 0.5 * cfg.domain_height};
  const Vec2 upwind{-std::cos(cfg.wind_mean_dir), -std::sin(cfg.wind_mean_dir)};
  const double jx = s.rng.uniform(-cfg.source_jitter, cfg.source_jitter);
  const double jy = s.rng.uniform(-cfg.source_jitter, cfg.source_jitter);
  s.source = {
      center.x + (cfg.source_upwind_offset * upwind.x + jx) * cfg.domain_width,
      center.y + (cfg.source_upwind_offset * upwind.y + jy) * cfg.domain_height,
  };
  return s;
}

WindState wind_step(const WindState& w, const PlumeConfig& cfg, double eps_speed, double eps_dir) {
  const double alpha = cfg.wind_alpha();
  const double kick = std::sqrt(2.0 * alpha);
  WindState next;
  next.speed = w.speed - alpha * (w.speed - cfg.wind_mean_speed) + cfg.wind_speed_std * kick * eps_speed;
  next.direction = w.direction - alpha * (w.direction - cfg.wind_mean_dir) + cfg.wind_dir_std * kick * eps_dir;
  next.speed = std::max(next.speed, cfg.wind_min_speed);
  return next;
}

WindState wind_step(const WindState& w, const PlumeConfig& cfg, Rng& rng) {
  const double eps_speed = rng.normal();
  const double eps_dir = rng.normal();
  return wind_step(w, cfg, eps_speed, eps_dir);
}

void plume_step(PlumeState& s, const PlumeConfig& cfg) {
  const int n_new = s.rng.poisson(cfg.emission_rate * cfg.dt);
  for (int i = 0; i < n_new; ++i) {
    Filament f;
    f.id = s.next_filament_id++;
    f.center = {s.source.x + s.rng.normal(0.0, cfg.init_radius), s.source.y + s.rng.normal(0.0, cfg.init_radius)};
    s.filaments.push_back(f);
  }

  const Vec2 displacement{s.wind.speed * cfg.dt * std::cos(s.wind.direction),
                          s.wind.speed * cfg.dt * std::sin(s.wind.direction)};
  // Age limit in whole steps; the tolerance absorbs decay_time/dt rounding.
  const auto max_age_steps = static_cast<std::int64_t>(std::floor(cfg.decay_time / cfg.dt + 1e-9));
  for (auto& f : s.filaments) {
    f.center = f.center + displacement;
    ++f.age_steps;
  }
  std::erase_if(s.filaments, [&](const Filament& f) {
    return f.age_steps > max_age_steps || (cfg.remove_outside_domain && !inside_domain(f.center, cfg));
  });

  s.wind = wind_step(s.wind, cfg, s.rng);
  ++s.step;
}

double filament_radius(double age, const PlumeConfig& cfg) {
  if (!(age >= 0.0)) {
    throw ValidationError("age", "filament age must be >= 0");
  }
  return std::sqrt(cfg.init_radius * cfg.init_radius + 2.0 * cfg.diffusion_rate * age);
}

double filament_kernel(double squared_distance, double sigma, const PlumeConfig& cfg) {
  const double sigma2 = sigma * sigma;
  return cfg.filament_mass / (2.0 * std::numbers::pi * sigma2) * std::exp(-squared_distance / (2.0 * sigma2));
}

double raw_concentration(const PlumeState& s, Vec2 p, const PlumeConfig& cfg) {
  double total = 0.0;
  for (const auto& f : s.filaments) {
    const double sigma = filament_radius(f.age(cfg.dt), cfg);
    const double d2 = squared_norm(p - f.center);
    if (d2 > 9.0 * sigma * sigma) {
      continue;
    }
    total += filament_kernel(d2, sigma, cfg);
  }
  return total;
}

namespace {

void require_inside(Vec2 p, const PlumeConfig& cfg) {
  if (!inside_domain(p, cfg)) {
    throw ValidationError("position", "query point (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                                          ") lies outside the domain");
  }
}

}  // namespace

double concentration_at(const PlumeState& s, Vec2 p, const PlumeConfig& cfg) {
  require_inside(p, cfg);
  return std::clamp(raw_concentration(s, p, cfg), 0.0, cfg.conc_clamp);
}

double concentration_at(const PlumeState& s, Vec2 p, const PlumeConfig& cfg, Rng& rng) {
  require_inside(p, cfg);
  const double c = raw_concentration(s, p, cfg) + rng.normal(0.0, cfg.noise_std);
  return std::clamp(c, 0.0, cfg.conc_clamp);
}

}  // namespace gpf
