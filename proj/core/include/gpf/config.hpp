#pragma once

// INI-style run configuration with sections [plume], [env], [gpf], [train].
// Keys are the struct field names; angles are given in degrees under keys
// ending in _deg and stored in radians. See docs/config.md.

#include <cstdint>
#include <filesystem>
#include <string>

#include "gpf/env.hpp"
#include "gpf/learner.hpp"
#include "gpf/network.hpp"
#include "gpf/plume.hpp"

namespace gpf {

struct RunConfig {
  PlumeConfig plume;
  EnvConfig env;
  GpfConfig gpf;
  TrainConfig train;

  /// Validates every section.
  void validate() const;
};

/// Parses INI text on top of the defaults. Unknown sections or keys and
/// malformed values throw ValidationError naming "section.key".
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Canonical INI text with every key; parse_config(to_ini(c)) == c.
std::string to_ini(const RunConfig& cfg);

/// FNV-1a of to_ini(cfg), as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

}  // namespace gpf
