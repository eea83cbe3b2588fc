#pragma once

// Small helpers shared by the test binaries: hand-rolled property-test
// generators and scratch directories.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "gpf/matrix.hpp"
#include "gpf/network.hpp"
#include "gpf/rng.hpp"
#include "gpf/tokenizer.hpp"

namespace gpf::testing {

/// Runs `prop(rng, case_index)` for `cases` independent cases. Each case
/// gets its own stream so a failing case index can be replayed alone.
inline void for_all(std::uint64_t seed, int cases, const std::function<void(Rng&, int)>& prop) {
  for (int i = 0; i < cases; ++i) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    prop(rng, i);
  }
}

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double stddev = 1.0) {
  Matrix m(rows, cols);
  for (auto& x : m.data()) x = rng.normal(0.0, stddev);
  return m;
}

inline ObservationToken random_token(Rng& rng) {
  return ObservationToken::from_index(rng.uniform_int(kObservationStates));
}

inline EpisodeTokens random_episode(Rng& rng, int max_actions = 60) {
  EpisodeTokens ep;
  const int n = rng.uniform_int(max_actions + 1);
  ep.observations.push_back(random_token(rng));
  for (int t = 0; t < n; ++t) {
    ep.actions.push_back(rng.uniform_int(kActionCount));
    ep.observations.push_back(random_token(rng));
  }
  return ep;
}

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double stddev = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal(0.0, stddev);
  return v;
}

/// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("gpf_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Byte-level snapshot of a layer's weights and biases.
inline std::vector<double> layer_params(const GpfLayer& layer) {
  std::vector<double> p = layer.weights.data();
  p.insert(p.end(), layer.bias.begin(), layer.bias.end());
  return p;
}

}  // namespace gpf::testing
