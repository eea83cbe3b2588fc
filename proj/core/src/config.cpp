#include "gpf/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "gpf/errors.hpp"

namespace gpf {

namespace {

namespace pt = boost::property_tree;

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Degrees pass through a radian conversion, so 15 digits keep "15" from
// coming back as "15.000000000000002".
std::string fmt_degrees(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.15g", v);
  return buf;
}

double rad_to_deg(double r) { return r * 180.0 / std::numbers::pi; }

double to_double(const std::string& key, const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ValidationError(key, "expected a number, got '" + s + "'");
  }
}

long long to_integer(const std::string& key, const std::string& s) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ValidationError(key, "expected an integer, got '" + s + "'");
  }
}

bool to_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "on" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "off" || s == "0" || s == "no") return false;
  throw ValidationError(key, "expected a boolean, got '" + s + "'");
}

// One entry per key: a reader into the config and a writer producing the
// canonical value text.
struct Field {
  std::function<void(RunConfig&, const std::string& key, const std::string& value)> read;
  std::function<std::string(const RunConfig&)> write;
};

using FieldTable = std::vector<std::pair<std::string, Field>>;

template <typename Get>
Field real(Get get) {
  return {[get](RunConfig& c, const std::string& k, const std::string& v) { get(c) = to_double(k, v); },
          [get](const RunConfig& c) { return fmt(get(c)); }};
}

template <typename Get>
Field degrees(Get get) {
  return {[get](RunConfig& c, const std::string& k, const std::string& v) { get(c) = deg_to_rad(to_double(k, v)); },
          [get](const RunConfig& c) { return fmt_degrees(rad_to_deg(get(c))); }};
}

template <typename Get>
Field integer(Get get) {
  return {[get](RunConfig& c, const std::string& k, const std::string& v) {
            using T = std::remove_reference_t<decltype(get(c))>;
            const long long n = to_integer(k, v);
            if constexpr (std::is_unsigned_v<T>) {
              if (n < 0) throw ValidationError(k, "must be >= 0");
            }
            get(c) = static_cast<T>(n);
          },
          [get](const RunConfig& c) { return std::to_string(get(c)); }};
}

template <typename Get>
Field boolean(Get get) {
  return {[get](RunConfig& c, const std::string& k, const std::string& v) { get(c) = to_bool(k, v); },
          [get](const RunConfig& c) { return std::string(get(c) ? "true" : "false"); }};
}

#define GPF_FIELD(kind, section, member) \
  {#section "." #member, kind([](auto& c) -> auto& { return c.section.member; })}

const FieldTable& fields() {
  static const FieldTable table = [] {
    FieldTable t;
    t.push_back({"plume.domain_size",
                 {[](RunConfig& c, const std::string& k, const std::string& v) {
                    std::istringstream is(v);
                    std::string a, b, extra;
                    if (!(is >> a >> b) || (is >> extra)) {
                      throw ValidationError(k, "expected two numbers 'width height', got '" + v + "'");
                    }
                    c.plume.domain_width = to_double(k, a);
                    c.plume.domain_height = to_double(k, b);
                  },
                  [](const RunConfig& c) { return fmt(c.plume.domain_width) + " " + fmt(c.plume.domain_height); }}});
    const FieldTable rest = {
        GPF_FIELD(real, plume, dt),
        GPF_FIELD(real, plume, emission_rate),
        GPF_FIELD(real, plume, filament_mass),
        GPF_FIELD(real, plume, init_radius),
        GPF_FIELD(real, plume, diffusion_rate),
        GPF_FIELD(real, plume, decay_time),
        GPF_FIELD(real, plume, noise_std),
        GPF_FIELD(real, plume, conc_clamp),
        GPF_FIELD(real, plume, wind_mean_speed),
        {"plume.wind_mean_dir_deg", degrees([](auto& c) -> auto& { return c.plume.wind_mean_dir; })},
        GPF_FIELD(real, plume, wind_speed_std),
        {"plume.wind_dir_std_deg", degrees([](auto& c) -> auto& { return c.plume.wind_dir_std; })},
        GPF_FIELD(real, plume, wind_corr_time),
        GPF_FIELD(real, plume, wind_min_speed),
        GPF_FIELD(real, plume, calm_threshold),
        GPF_FIELD(real, plume, source_upwind_offset),
        GPF_FIELD(real, plume, source_jitter),
        GPF_FIELD(boolean, plume, remove_outside_domain),

        GPF_FIELD(integer, env, max_steps),
        GPF_FIELD(real, env, step_length),
        GPF_FIELD(real, env, success_radius),
        GPF_FIELD(real, env, antenna_separation),
        GPF_FIELD(real, env, min_start_distance),
        GPF_FIELD(real, env, max_start_distance),
        {"env.heading_noise_deg", degrees([](auto& c) -> auto& { return c.env.heading_noise; })},
        GPF_FIELD(integer, env, max_placement_retries),
        GPF_FIELD(real, env, shaping_scale),
        GPF_FIELD(real, env, time_penalty),
        GPF_FIELD(real, env, success_reward),
        GPF_FIELD(real, env, whiff_reward),
        GPF_FIELD(real, env, blank_penalty),
        GPF_FIELD(integer, env, blank_streak_limit),

        GPF_FIELD(integer, gpf, input_dim),
        GPF_FIELD(integer, gpf, hidden_width),
        GPF_FIELD(integer, gpf, output_dim),
        GPF_FIELD(integer, gpf, initial_hidden_layers),
        GPF_FIELD(integer, gpf, max_hidden_layers),
        GPF_FIELD(real, gpf, stagnation_threshold),
        GPF_FIELD(real, gpf, belief_prune_threshold),
        {"gpf.prune_magnitude_threshold",
         {[](RunConfig& c, const std::string& k, const std::string& v) {
            if (v == "percentile" || v.empty()) {
              c.gpf.prune_magnitude_threshold.reset();
            } else {
              c.gpf.prune_magnitude_threshold = to_double(k, v);
            }
          },
          [](const RunConfig& c) {
            return c.gpf.prune_magnitude_threshold ? fmt(*c.gpf.prune_magnitude_threshold) : std::string("percentile");
          }}},
        GPF_FIELD(real, gpf, prune_percentile),
        GPF_FIELD(real, gpf, freeze_change_threshold),
        GPF_FIELD(real, gpf, freeze_fraction),
        GPF_FIELD(integer, gpf, enable_patience),
        GPF_FIELD(integer, gpf, grow_patience),
        GPF_FIELD(integer, gpf, prune_patience),
        GPF_FIELD(integer, gpf, freeze_patience),
        GPF_FIELD(boolean, gpf, standalone_prune),
        GPF_FIELD(real, gpf, belief_increment),
        GPF_FIELD(real, gpf, belief_magnitude),
        GPF_FIELD(real, gpf, batch_decay),
        GPF_FIELD(integer, gpf, base_batch_size),
        GPF_FIELD(real, gpf, learning_rate),
        GPF_FIELD(real, gpf, adam_beta1),
        GPF_FIELD(real, gpf, adam_beta2),
        GPF_FIELD(real, gpf, adam_epsilon),

        GPF_FIELD(integer, train, episodes),
        GPF_FIELD(integer, train, eval_every),
        GPF_FIELD(integer, train, eval_episodes),
        GPF_FIELD(real, train, gamma),
        GPF_FIELD(real, train, epsilon_start),
        GPF_FIELD(real, train, epsilon_min),
        GPF_FIELD(real, train, epsilon_decay),
        GPF_FIELD(real, train, eval_epsilon),
        GPF_FIELD(integer, train, env_seed),
        GPF_FIELD(integer, train, agent_seed),
        GPF_FIELD(integer, train, eval_seed_base),
        GPF_FIELD(integer, train, test_seed_base),
        GPF_FIELD(integer, train, test_episodes),
        GPF_FIELD(integer, train, probe_size),
        {"train.target",
         {[](RunConfig& c, const std::string& k, const std::string& v) {
            if (v == "expected") {
              c.train.target = TargetRule::Expected;
            } else if (v == "greedy") {
              c.train.target = TargetRule::Greedy;
            } else {
              throw ValidationError(k, "expected 'expected' or 'greedy', got '" + v + "'");
            }
          },
          [](const RunConfig& c) {
            return std::string(c.train.target == TargetRule::Greedy ? "greedy" : "expected");
          }}},
        GPF_FIELD(boolean, train, gpf),
        GPF_FIELD(integer, train, eval_threads),
    };
    t.insert(t.end(), rest.begin(), rest.end());
    return t;
  }();
  return table;
}

#undef GPF_FIELD

}  // namespace

void RunConfig::validate() const {
  plume.validate();
  EnvConfig e = env;
  e.gamma = train.gamma;
  e.validate();
  gpf.validate();
  train.validate();
  if (gpf.input_dim != kOneHotSize) {
    throw ValidationError("gpf.input_dim", "must equal the one-hot size " + std::to_string(kOneHotSize));
  }
  if (gpf.output_dim != kActionCount) {
    throw ValidationError("gpf.output_dim", "must equal the action count " + std::to_string(kActionCount));
  }
}

RunConfig parse_config(const std::string& text) {
  pt::ptree tree;
  try {
    std::istringstream is(text);
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ValidationError("config", std::string("malformed INI: ") + e.message() + " at line " +
                                        std::to_string(e.line()));
  }
  std::map<std::string, const Field*> lookup;
  for (const auto& [key, field] : fields()) {
    lookup.emplace(key, &field);
  }
  RunConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ValidationError(section, "keys must live inside a [section]");
    }
    for (const auto& [name, value] : body) {
      const std::string key = section + "." + name;
      const auto it = lookup.find(key);
      if (it == lookup.end()) {
        throw ValidationError(key, "unknown configuration key");
      }
      it->second->read(cfg, key, value.get_value<std::string>());
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) {
    throw ValidationError("config", "cannot open " + path.string());
  }
  std::ostringstream os;
  os << is.rdbuf();
  return parse_config(os.str());
}

std::string to_ini(const RunConfig& cfg) {
  std::ostringstream os;
  std::string current;
  for (const auto& [key, field] : fields()) {
    const auto dot = key.find('.');
    const std::string section = key.substr(0, dot);
    if (section != current) {
      os << (current.empty() ? "" : "\n") << '[' << section << "]\n";
      current = section;
    }
    os << key.substr(dot + 1) << " = " << field.write(cfg) << '\n';
  }
  return os.str();
}

std::string config_hash(const RunConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_ini(cfg)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace gpf
