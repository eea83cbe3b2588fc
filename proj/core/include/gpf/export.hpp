#pragma once

// Comma-separated exports: plume snapshots, episode traces, training
// metrics, spectra and Stieltjes tables, plus token files.

#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "gpf/learner.hpp"
#include "gpf/plume.hpp"
#include "gpf/spectral.hpp"
#include "gpf/tokenizer.hpp"

namespace gpf {

/// Shortest round-trip decimal text; "nan" / "inf" for non-finite values.
std::string format_number(double v);

/// time,id,x,y,age
void write_plume_header(std::ostream& os);
void write_plume_snapshot(std::ostream& os, const PlumeState& s, const PlumeConfig& cfg);

/// step,x,y,heading,c_left,c_right,bin_left,bin_right,wind_octant,action,r_time,r_event,r_shape,terminated
void write_trace(std::ostream& os, const EpisodeTrace& trace);

inline constexpr const char* kMetricsHeader =
    "episode,success_pct,layers,event,mean_steps,retained_pct,val_loss,epsilon,r_time,r_event,r_shape";

std::string metrics_row(const TrainRecord& r);

/// Append-only metrics file; every row is flushed as it is written.
class MetricsWriter {
public:
  explicit MetricsWriter(const std::filesystem::path& path);
  void append(const TrainRecord& r);

private:
  std::ofstream os_;
};

/// episode,layer,index,value
void write_esd_header(std::ostream& os);
void write_esd(std::ostream& os, const Esd& esd);

/// snapshot,depth,re_z,im_z,re_s,im_s
void write_stieltjes_table(std::ostream& os, std::span<const DepthProbeRow> rows, std::span<const Complex> grid);

/// One complex number per line: "re im".
std::vector<Complex> read_z_grid(std::istream& is);

/// One episode per line of token ids (BOS ... EOS).
void write_token_file(std::ostream& os, std::span<const EpisodeTokens> episodes);
/// Throws FormatError on malformed lines.
std::vector<EpisodeTokens> read_token_file(std::istream& is);

}  // namespace gpf
