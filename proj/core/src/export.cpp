#include "gpf/export.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "gpf/errors.hpp"

namespace gpf {

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_plume_header(std::ostream& os) { os << "time,id,x,y,age\n"; }

void write_plume_snapshot(std::ostream& os, const PlumeState& s, const PlumeConfig& cfg) {
  const std::string t = format_number(s.time(cfg));
  for (const auto& f : s.filaments) {
    os << t << ',' << f.id << ',' << format_number(f.center.x) << ',' << format_number(f.center.y) << ','
       << format_number(f.age(cfg.dt)) << '\n';
  }
}

void write_trace(std::ostream& os, const EpisodeTrace& trace) {
  os << "step,x,y,heading,c_left,c_right,bin_left,bin_right,wind_octant,action,r_time,r_event,r_shape,terminated\n";
  const auto& p0 = trace.start_pose;
  const auto& o0 = trace.start_observation;
  os << 0 << ',' << format_number(p0.position.x) << ',' << format_number(p0.position.y) << ','
     << format_number(p0.heading) << ',' << format_number(o0.left_conc) << ',' << format_number(o0.right_conc) << ','
     << trace.start_token.left << ',' << trace.start_token.right << ',' << trace.start_token.wind << ",,0,0,0,none\n";
  for (const auto& s : trace.steps) {
    os << s.step << ',' << format_number(s.pose.position.x) << ',' << format_number(s.pose.position.y) << ','
       << format_number(s.pose.heading) << ',' << format_number(s.observation.left_conc) << ','
       << format_number(s.observation.right_conc) << ',' << s.token.left << ',' << s.token.right << ','
       << s.token.wind << ',' << action_name(static_cast<Action>(s.action)) << ',' << format_number(s.parts.time)
       << ',' << format_number(s.parts.event) << ',' << format_number(s.parts.shape) << ','
       << termination_name(s.termination) << '\n';
  }
}

namespace {

std::string percent_text(double fraction) {
  if (!std::isfinite(fraction)) return format_number(fraction);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * fraction);
  return buf;
}

}  // namespace

std::string metrics_row(const TrainRecord& r) {
  std::ostringstream os;
  std::string event = r.event;
  // The event column is free text; keep the row parseable.
  for (char& c : event) {
    if (c == ',') c = ';';
  }
  os << r.episode << ',' << percent_text(r.success_rate) << ',' << r.layers << ',' << event << ','
     << format_number(r.mean_steps) << ',' << percent_text(r.retained) << ',' << format_number(r.val_loss)
     << ',' << format_number(r.epsilon) << ',' << format_number(r.mean_reward.time) << ','
     << format_number(r.mean_reward.event) << ',' << format_number(r.mean_reward.shape);
  return os.str();
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path) : os_(path, std::ios::trunc) {
  if (!os_) {
    throw std::runtime_error("cannot open metrics file " + path.string());
  }
  os_ << kMetricsHeader << '\n' << std::flush;
}

void MetricsWriter::append(const TrainRecord& r) { os_ << metrics_row(r) << '\n' << std::flush; }

void write_esd_header(std::ostream& os) { os << "episode,layer,index,value\n"; }

void write_esd(std::ostream& os, const Esd& esd) {
  for (std::size_t i = 0; i < esd.eigenvalues.size(); ++i) {
    os << esd.episode << ',' << esd.layer << ',' << i << ',' << format_number(esd.eigenvalues[i]) << '\n';
  }
}

void write_stieltjes_table(std::ostream& os, std::span<const DepthProbeRow> rows, std::span<const Complex> grid) {
  os << "snapshot,depth,re_z,im_z,re_s,im_s\n";
  for (const auto& row : rows) {
    for (std::size_t k = 0; k < grid.size() && k < row.s.size(); ++k) {
      os << row.snapshot << ',' << row.depth << ',' << format_number(grid[k].real()) << ','
         << format_number(grid[k].imag()) << ',' << format_number(row.s[k].real()) << ','
         << format_number(row.s[k].imag()) << '\n';
    }
  }
}

std::vector<Complex> read_z_grid(std::istream& is) {
  std::vector<Complex> grid;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    double re = 0.0;
    double im = 0.0;
    if (!(ls >> re)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      throw FormatError("z grid line " + std::to_string(lineno) + ": expected 're im'");
    }
    std::string extra;
    if (!(ls >> im) || (ls >> extra)) {
      throw FormatError("z grid line " + std::to_string(lineno) + ": expected 're im'");
    }
    if (im == 0.0) {
      throw FormatError("z grid line " + std::to_string(lineno) + ": imaginary part must be non-zero");
    }
    grid.emplace_back(re, im);
  }
  if (grid.empty()) {
    throw FormatError("z grid is empty");
  }
  return grid;
}

void write_token_file(std::ostream& os, std::span<const EpisodeTokens> episodes) {
  for (const auto& ep : episodes) {
    const EpisodeTokens one[] = {ep};
    const auto seq = serialize_segments(one);
    os << format_id_line(to_ids(seq)) << '\n';
  }
}

std::vector<EpisodeTokens> read_token_file(std::istream& is) {
  std::vector<EpisodeTokens> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto ids = parse_id_line(line);
      const auto seq = from_ids(ids);
      for (auto& seg : parse_sequence(seq)) {
        out.push_back(std::move(seg));
      }
    } catch (const FormatError& e) {
      throw FormatError("token file line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace gpf
