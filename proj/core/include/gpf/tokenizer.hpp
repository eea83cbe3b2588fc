#pragma once

// Discrete observation vocabulary.
//
// An observation is the triple (left bin, right bin, wind octant) in
// 7 x 7 x 8 = 392 states. Flat integer ids used in token files:
//
//   0..6    left concentration bin
//   7..13   right concentration bin
//   14..21  wind octant
//   22..27  action
//   28 PAD, 29 BOS, 30 EOS, 31 RESET
//
// An observation occupies three consecutive ids (left, right, wind).

#include <array>
#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace gpf {

inline constexpr int kConcentrationBins = 7;
inline constexpr int kWindOctants = 8;
inline constexpr int kObservationStates = kConcentrationBins * kConcentrationBins * kWindOctants;
inline constexpr int kOneHotSize = 2 * kConcentrationBins + kWindOctants;
inline constexpr int kActionCount = 6;
inline constexpr std::array<double, 6> kBinEdgeMultipliers{3.0, 6.0, 15.0, 45.0, 150.0, 600.0};

namespace token_id {
inline constexpr int kLeftBase = 0;
inline constexpr int kRightBase = 7;
inline constexpr int kWindBase = 14;
inline constexpr int kActionBase = 22;
inline constexpr int kPad = 28;
inline constexpr int kBos = 29;
inline constexpr int kEos = 30;
inline constexpr int kReset = 31;
inline constexpr int kVocabularySize = 32;
}  // namespace token_id

/// Bin edges e_k = m_k * noise_std.
std::array<double, 6> bin_edges(double noise_std = 1e-3);

/// 0 if c <= e0, k if e_{k-1} < c <= e_k, 6 if c > e5. NaN throws.
int quantize_concentration(double c, double noise_std = 1e-3);

/// Octant of the wind-arrival direction relative to heading.
/// dir_rel is measured counter-clockwise from the heading (radians); octants
/// count clockwise from dead ahead, octant k covering clockwise angles
/// [45k - 22.5, 45k + 22.5) degrees. Calm wind maps to octant 0.
int quantize_wind(double dir_rel, double speed, double calm_threshold = 0.05);

struct ObservationToken {
  int left = 0;
  int right = 0;
  int wind = 0;

  /// Dense index in [0, 392).
  int index() const { return (left * kConcentrationBins + right) * kWindOctants + wind; }
  static ObservationToken from_index(int index);
  bool valid() const;

  auto operator<=>(const ObservationToken&) const = default;
};

/// Ones at left, 7 + right, 14 + wind.
std::array<double, kOneHotSize> encode_onehot(const ObservationToken& t);

enum class SpecialToken : std::uint8_t { Pad, Bos, Eos, Reset };

struct ActionToken {
  int action = 0;
  auto operator<=>(const ActionToken&) const = default;
};

using SequenceToken = std::variant<ObservationToken, ActionToken, SpecialToken>;

/// BOS, o0, a0, ..., o_{T-1}, a_{T-1}, o_T, EOS. Requires |obs| = |acts| + 1.
std::vector<SequenceToken> serialize_episode(std::span<const ObservationToken> obs, std::span<const int> acts);

struct EpisodeTokens {
  std::vector<ObservationToken> observations;
  std::vector<int> actions;
  friend bool operator==(const EpisodeTokens&, const EpisodeTokens&) = default;
};

/// Several segments in one stream, separated by RESET:
/// BOS seg0 RESET seg1 ... EOS, each segment being o (a o)*.
std::vector<SequenceToken> serialize_segments(std::span<const EpisodeTokens> segments);

/// Inverse of serialize_segments. Throws FormatError on grammar violations.
std::vector<EpisodeTokens> parse_sequence(std::span<const SequenceToken> seq);

std::vector<int> to_ids(std::span<const SequenceToken> seq);
/// Throws FormatError on unknown ids or a truncated observation triple.
std::vector<SequenceToken> from_ids(std::span<const int> ids);

/// One line of whitespace-separated ids.
std::string format_id_line(std::span<const int> ids);
std::vector<int> parse_id_line(const std::string& line);

}  // namespace gpf
