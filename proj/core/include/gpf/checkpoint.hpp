#pragma once

// Binary checkpoint format. Layout is documented in docs/checkpoint_format.md.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "gpf/network.hpp"

namespace gpf {

inline constexpr char kCheckpointMagic[8] = {'G', 'P', 'F', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::int64_t episode = 0;
  double epsilon = 1.0;
  double eval_success = 0.0;

  friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

struct Checkpoint {
  GpfNetwork network;
  CheckpointMeta meta;
  std::vector<std::string> rng_states;
};

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt);
/// Throws FormatError with a description of the header on any mismatch.
Checkpoint read_checkpoint(std::istream& is);

std::string checkpoint_bytes(const Checkpoint& ckpt);
Checkpoint checkpoint_from_bytes(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gpf
