#include "gpf/tokenizer.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "gpf/errors.hpp"

namespace gpf {

std::array<double, 6> bin_edges(double noise_std) {
  std::array<double, 6> edges{};
  for (std::size_t k = 0; k < edges.size(); ++k) {
    edges[k] = kBinEdgeMultipliers[k] * noise_std;
  }
  return edges;
}

int quantize_concentration(double c, double noise_std) {
  if (std::isnan(c)) {
    throw ValidationError("concentration", "NaN reading");
  }
  const auto edges = bin_edges(noise_std);
  int bin = 0;
  for (double e : edges) {
    if (c > e) {
      ++bin;
    } else {
      break;
    }
  }
  return bin;
}

int quantize_wind(double dir_rel, double speed, double calm_threshold) {
  if (speed < calm_threshold || !std::isfinite(dir_rel)) {
    return 0;
  }
  double cw_deg = -dir_rel * 180.0 / std::numbers::pi;
  cw_deg = std::fmod(cw_deg, 360.0);
  if (cw_deg < 0.0) {
    cw_deg += 360.0;
  }
  const int octant = static_cast<int>(std::floor((cw_deg + 22.5) / 45.0));
  return octant % kWindOctants;
}

ObservationToken ObservationToken::from_index(int index) {
  if (index < 0 || index >= kObservationStates) {
    throw ValidationError("index", "observation index out of range");
  }
  ObservationToken t;
  t.wind = index % kWindOctants;
  index /= kWindOctants;
  t.right = index % kConcentrationBins;
  t.left = index / kConcentrationBins;
  return t;
}

bool ObservationToken::valid() const {
  return left >= 0 && left < kConcentrationBins && right >= 0 && right < kConcentrationBins && wind >= 0 &&
         wind < kWindOctants;
}

std::array<double, kOneHotSize> encode_onehot(const ObservationToken& t) {
  if (!t.valid()) {
    throw ValidationError("token", "observation token out of range");
  }
  std::array<double, kOneHotSize> v{};
  v[t.left] = 1.0;
  v[kConcentrationBins + t.right] = 1.0;
  v[2 * kConcentrationBins + t.wind] = 1.0;
  return v;
}

std::vector<SequenceToken> serialize_episode(std::span<const ObservationToken> obs, std::span<const int> acts) {
  if (obs.size() != acts.size() + 1) {
    throw ValidationError("episode", "expected exactly one more observation than actions");
  }
  EpisodeTokens ep{{obs.begin(), obs.end()}, {acts.begin(), acts.end()}};
  return serialize_segments(std::span<const EpisodeTokens>(&ep, 1));
}

std::vector<SequenceToken> serialize_segments(std::span<const EpisodeTokens> segments) {
  if (segments.empty()) {
    throw ValidationError("segments", "at least one segment required");
  }
  std::vector<SequenceToken> seq;
  seq.emplace_back(SpecialToken::Bos);
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const auto& ep = segments[s];
    if (ep.observations.size() != ep.actions.size() + 1) {
      throw ValidationError("episode", "expected exactly one more observation than actions");
    }
    if (s > 0) {
      seq.emplace_back(SpecialToken::Reset);
    }
    for (std::size_t t = 0; t < ep.actions.size(); ++t) {
      if (!ep.observations[t].valid() || ep.actions[t] < 0 || ep.actions[t] >= kActionCount) {
        throw ValidationError("episode", "token out of range at step " + std::to_string(t));
      }
      seq.emplace_back(ep.observations[t]);
      seq.emplace_back(ActionToken{ep.actions[t]});
    }
    if (!ep.observations.back().valid()) {
      throw ValidationError("episode", "final observation out of range");
    }
    seq.emplace_back(ep.observations.back());
  }
  seq.emplace_back(SpecialToken::Eos);
  return seq;
}

std::vector<EpisodeTokens> parse_sequence(std::span<const SequenceToken> seq) {
  auto fail = [](std::size_t pos, const char* what) {
    throw FormatError("token grammar violation at position " + std::to_string(pos) + ": " + what);
  };
  if (seq.size() < 3) {
    fail(0, "sequence shorter than BOS o EOS");
  }
  const auto* first = std::get_if<SpecialToken>(&seq.front());
  if (first == nullptr || *first != SpecialToken::Bos) {
    fail(0, "expected BOS");
  }
  std::vector<EpisodeTokens> out(1);
  // expect_obs alternates with actions; a segment must end on an observation.
  bool expect_obs = true;
  for (std::size_t i = 1; i < seq.size(); ++i) {
    const auto& tok = seq[i];
    if (const auto* o = std::get_if<ObservationToken>(&tok)) {
      if (!expect_obs) fail(i, "observation where an action was expected");
      if (!o->valid()) fail(i, "observation out of range");
      out.back().observations.push_back(*o);
      expect_obs = false;
    } else if (const auto* a = std::get_if<ActionToken>(&tok)) {
      if (expect_obs) fail(i, "action where an observation was expected");
      if (a->action < 0 || a->action >= kActionCount) fail(i, "action out of range");
      out.back().actions.push_back(a->action);
      expect_obs = true;
    } else {
      const auto special = std::get<SpecialToken>(tok);
      if (special == SpecialToken::Eos) {
        if (expect_obs) fail(i, "EOS must follow an observation");
        if (i + 1 != seq.size()) fail(i, "tokens after EOS");
        return out;
      }
      if (special == SpecialToken::Reset) {
        if (expect_obs) fail(i, "RESET must follow an observation");
        out.emplace_back();
        expect_obs = true;
        continue;
      }
      fail(i, special == SpecialToken::Bos ? "nested BOS" : "PAD inside an episode");
    }
  }
  fail(seq.size(), "missing EOS");
  return out;
}

std::vector<int> to_ids(std::span<const SequenceToken> seq) {
  std::vector<int> ids;
  ids.reserve(seq.size() * 2);
  for (const auto& tok : seq) {
    if (const auto* o = std::get_if<ObservationToken>(&tok)) {
      ids.push_back(token_id::kLeftBase + o->left);
      ids.push_back(token_id::kRightBase + o->right);
      ids.push_back(token_id::kWindBase + o->wind);
    } else if (const auto* a = std::get_if<ActionToken>(&tok)) {
      ids.push_back(token_id::kActionBase + a->action);
    } else {
      switch (std::get<SpecialToken>(tok)) {
        case SpecialToken::Pad: ids.push_back(token_id::kPad); break;
        case SpecialToken::Bos: ids.push_back(token_id::kBos); break;
        case SpecialToken::Eos: ids.push_back(token_id::kEos); break;
        case SpecialToken::Reset: ids.push_back(token_id::kReset); break;
      }
    }
  }
  return ids;
}

std::vector<SequenceToken> from_ids(std::span<const int> ids) {
  std::vector<SequenceToken> seq;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    if (id >= token_id::kLeftBase && id < token_id::kRightBase) {
      if (i + 2 >= ids.size() || ids[i + 1] < token_id::kRightBase || ids[i + 1] >= token_id::kWindBase ||
          ids[i + 2] < token_id::kWindBase || ids[i + 2] >= token_id::kActionBase) {
        throw FormatError("malformed observation triple at id position " + std::to_string(i));
      }
      seq.emplace_back(ObservationToken{id - token_id::kLeftBase, ids[i + 1] - token_id::kRightBase,
                                        ids[i + 2] - token_id::kWindBase});
      i += 2;
    } else if (id >= token_id::kActionBase && id < token_id::kPad) {
      seq.emplace_back(ActionToken{id - token_id::kActionBase});
    } else if (id == token_id::kPad) {
      seq.emplace_back(SpecialToken::Pad);
    } else if (id == token_id::kBos) {
      seq.emplace_back(SpecialToken::Bos);
    } else if (id == token_id::kEos) {
      seq.emplace_back(SpecialToken::Eos);
    } else if (id == token_id::kReset) {
      seq.emplace_back(SpecialToken::Reset);
    } else {
      throw FormatError("unexpected token id " + std::to_string(id) + " at position " + std::to_string(i));
    }
  }
  return seq;
}

std::string format_id_line(std::span<const int> ids) {
  std::string line;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) line += ' ';
    line += std::to_string(ids[i]);
  }
  return line;
}

std::vector<int> parse_id_line(const std::string& line) {
  std::istringstream is(line);
  std::vector<int> ids;
  std::string word;
  while (is >> word) {
    std::size_t used = 0;
    int value = 0;
    try {
      value = std::stoi(word, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != word.size()) {
      throw FormatError("non-integer token '" + word + "'");
    }
    ids.push_back(value);
  }
  return ids;
}

}  // namespace gpf
