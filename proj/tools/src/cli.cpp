#include "gpf_cli/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>

#include "gpf/checkpoint.hpp"
#include "gpf/config.hpp"
#include "gpf/errors.hpp"
#include "gpf/export.hpp"
#include "gpf/learner.hpp"
#include "gpf/spectral.hpp"

namespace gpf::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.3.0";

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

fs::path output_root() {
  if (const char* env = std::getenv("GPF_OUT_DIR"); env && *env) {
    return env;
  }
  return ".";
}

/// Relative paths land under GPF_OUT_DIR when it is set.
fs::path resolve_output(const std::string& path) {
  fs::path p(path);
  return p.is_absolute() ? p : output_root() / p;
}

RunConfig load_run_config(const std::string& path) { return path.empty() ? RunConfig{} : load_config(path); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) {
    throw std::runtime_error("cannot write " + path.string());
  }
  os << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string percent(double fraction) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << 100.0 * fraction << '%';
  return os.str();
}

json eval_json(const EvalResult& r) {
  return {{"success_rate", r.success_rate},
          {"successes", r.successes},
          {"timeouts", r.timeouts},
          {"episodes", r.episodes.size()},
          {"mean_steps", std::isfinite(r.mean_steps) ? json(r.mean_steps) : json(nullptr)}};
}

void print_eval(std::ostream& out, const EvalResult& r) {
  const int other = static_cast<int>(r.episodes.size()) - r.successes - r.timeouts;
  out << "success rate: " << percent(r.success_rate) << " (" << r.successes << "/" << r.episodes.size() << ")\n";
  out << "mean steps to source: " << (std::isfinite(r.mean_steps) ? format_number(r.mean_steps) : "n/a") << "\n";
  out << "failures: " << r.timeouts << " timeout, " << other << " other\n";
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string config;
  std::optional<int> episodes;
  std::string gpf = "on";
  std::string target;
  std::optional<std::uint64_t> seed_env;
  std::optional<std::uint64_t> seed_agent;
  std::optional<int> eval_every;
  std::optional<int> eval_episodes;
  std::optional<int> threads;
  std::string out = "run";
};

int cmd_train(const TrainArgs& a, const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  try {
    cfg = load_run_config(a.config);
    if (a.episodes) cfg.train.episodes = *a.episodes;
    if (a.gpf == "on") {
      cfg.train.gpf = true;
    } else if (a.gpf == "off") {
      cfg.train.gpf = false;
    } else {
      throw ValidationError("--gpf", "expected on or off");
    }
    if (a.target == "expected") {
      cfg.train.target = TargetRule::Expected;
    } else if (a.target == "greedy") {
      cfg.train.target = TargetRule::Greedy;
    } else if (!a.target.empty()) {
      throw ValidationError("--target", "expected 'expected' or 'greedy'");
    }
    if (a.seed_env) cfg.train.env_seed = *a.seed_env;
    if (a.seed_agent) cfg.train.agent_seed = *a.seed_agent;
    if (a.eval_every) cfg.train.eval_every = *a.eval_every;
    if (a.eval_episodes) cfg.train.eval_episodes = *a.eval_episodes;
    if (a.threads) cfg.train.eval_threads = *a.threads;
    cfg.validate();
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  const fs::path dir = resolve_output(a.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    err << "cannot create output directory " << dir << ": " << ec.message() << "\n";
    return kExitConfig;
  }
  const fs::path config_path = dir / "config.ini";
  const fs::path metrics_path = dir / "metrics.csv";
  const fs::path best_path = dir / "best.ckpt";
  const fs::path final_path = dir / "final.ckpt";
  const fs::path manifest_path = dir / "manifest.json";
  const fs::path abort_path = dir / "abort.txt";

  json manifest = {
      {"tool", "gpf"},
      {"version", kVersion},
      {"command", argv},
      {"config_hash", config_hash(cfg)},
      {"seeds",
       {{"env", cfg.train.env_seed},
        {"agent", cfg.train.agent_seed},
        {"eval_seed_base", cfg.train.eval_seed_base},
        {"test_seed_base", cfg.train.test_seed_base}}},
      {"started_at", utc_now()},
      {"finished_at", nullptr},
      {"status", "running"},
      {"outputs",
       {{"config", config_path.filename().string()},
        {"metrics", metrics_path.filename().string()},
        {"best_checkpoint", best_path.filename().string()},
        {"final_checkpoint", final_path.filename().string()}}},
  };
  try {
    write_text(config_path, to_ini(cfg));
    write_json(manifest_path, manifest);
  } catch (const std::exception& e) {
    err << e.what() << "\n";
    return kExitConfig;
  }

  out << "training " << cfg.train.episodes << " episodes (gpf " << (cfg.train.gpf ? "on" : "off") << ", target "
      << (cfg.train.target == TargetRule::Greedy ? "greedy" : "expected") << ") -> " << dir.string() << std::endl;
  MetricsWriter metrics(metrics_path);
  TrainResult result;
  // One snapshot per depth: the network right after each grow event, for
  // the spectra subcommand.
  std::size_t depth = 0;
  json snapshots = json::array();
  auto on_episode = [&](std::int64_t episode, const GpfNetwork& net) {
    if (net.hidden_layers() == depth) return;
    depth = net.hidden_layers();
    const auto name = "snapshot_l" + std::to_string(depth) + ".ckpt";
    save_checkpoint(dir / name, Checkpoint{net, {episode, 0.0, -1.0}, {}});
    snapshots.push_back(name);
  };
  {
    Rng init(cfg.train.agent_seed);  // same draws train() starts from
    on_episode(0, GpfNetwork::create(cfg.gpf, init));
  }
  try {
    result = train(
        cfg.train, cfg.gpf, cfg.plume, cfg.env,
        [&](const TrainRecord& r) {
          metrics.append(r);
          out << "episode " << r.episode << ": success " << percent(r.success_rate) << ", layers " << r.layers
              << ", " << r.event << std::endl;
        },
        on_episode);
  } catch (const NumericalError& e) {
    err << "training aborted: " << e.what() << "\n";
    write_text(abort_path, std::string(e.what()) + "\n");
    manifest["status"] = "aborted";
    manifest["finished_at"] = utc_now();
    manifest["outputs"]["abort_report"] = abort_path.filename().string();
    write_json(manifest_path, manifest);
    return kExitRuntime;
  }

  save_checkpoint(best_path, result.best);
  Checkpoint final_ckpt{result.final_network, {cfg.train.episodes, 0.0, -1.0}, {}};
  if (!result.records.empty()) {
    final_ckpt.meta.epsilon = result.records.back().epsilon;
    final_ckpt.meta.eval_success = result.records.back().success_rate;
  }
  save_checkpoint(final_path, final_ckpt);

  manifest["outputs"]["snapshots"] = snapshots;
  manifest["best"] = {{"episode", result.best.meta.episode},
                      {"eval_success", result.best.meta.eval_success},
                      {"hidden_layers", result.best.network.hidden_layers()}};
  if (!result.records.empty()) {
    const auto test = evaluate(&result.best.network, cfg.plume, cfg.env, cfg.train.test_episodes,
                               cfg.train.test_seed_base, cfg.train.eval_epsilon, cfg.train.eval_threads);
    manifest["test"] = eval_json(test);
    out << "best checkpoint: episode " << result.best.meta.episode << ", eval success "
        << percent(result.best.meta.eval_success) << "\n";
    out << "test (" << cfg.train.test_episodes << " episodes):\n";
    print_eval(out, test);
  }
  manifest["status"] = "completed";
  manifest["finished_at"] = utc_now();
  write_json(manifest_path, manifest);
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string config;
  int episodes = 100;
  std::optional<std::uint64_t> seed_base;
  std::optional<double> epsilon;
  std::string trace;
  int threads = 1;
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  Checkpoint ckpt;
  try {
    cfg = load_run_config(a.config);
    if (a.episodes <= 0) throw ValidationError("--episodes", "must be > 0");
    ckpt = load_checkpoint(a.checkpoint);
  } catch (const FormatError& e) {
    err << "checkpoint error: " << a.checkpoint << ": " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  const std::uint64_t base = a.seed_base.value_or(cfg.train.test_seed_base);
  const double eps = a.epsilon.value_or(cfg.train.eval_epsilon);
  const auto r = evaluate(&ckpt.network, cfg.plume, cfg.env, a.episodes, base, eps, a.threads);
  out << "checkpoint: " << a.checkpoint << " (episode " << ckpt.meta.episode << ", " << ckpt.network.hidden_layers()
      << " hidden layers)\n";
  out << "episodes: " << a.episodes << ", seeds " << base << ".." << base + static_cast<std::uint64_t>(a.episodes) - 1
      << ", epsilon " << format_number(eps) << "\n";
  print_eval(out, r);

  if (!a.trace.empty()) {
    const fs::path dir = resolve_output(a.trace);
    fs::create_directories(dir);
    PlumeEnv env(cfg.plume, cfg.env);
    for (int j = 0; j < a.episodes; ++j) {
      const std::uint64_t seed = base + static_cast<std::uint64_t>(j);
      Rng rng(mix_seed(seed, 2));
      EpisodeTrace trace;
      run_episode(&ckpt.network, env, seed, eps, rng, &trace);
      std::ofstream os(dir / ("trace_" + std::to_string(seed) + ".csv"));
      write_trace(os, trace);
    }
    out << "traces written to " << dir.string() << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------- plume

struct PlumeArgs {
  std::string config;
  std::uint64_t seed = 42;
  int steps = 600;
  int every = 10;
  bool keep_outside = false;
  std::string out;
};

int cmd_plume(const PlumeArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  try {
    cfg = load_run_config(a.config);
    if (a.steps < 0) throw ValidationError("--steps", "must be >= 0");
    if (a.every <= 0) throw ValidationError("--every", "must be > 0");
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  if (a.keep_outside) cfg.plume.remove_outside_domain = false;
  std::ofstream file;
  std::ostream* os = &out;
  if (!a.out.empty()) {
    const auto path = resolve_output(a.out);
    file.open(path, std::ios::trunc);
    if (!file) {
      err << "cannot write " << path << "\n";
      return kExitConfig;
    }
    os = &file;
  }
  PlumeState s = plume_reset(cfg.plume, a.seed);
  write_plume_header(*os);
  for (int k = 0; k <= a.steps; ++k) {
    if (k % a.every == 0) {
      write_plume_snapshot(*os, s, cfg.plume);
    }
    if (k < a.steps) {
      plume_step(s, cfg.plume);
    }
  }
  if (!a.out.empty()) {
    out << "source at (" << format_number(s.source.x) << ", " << format_number(s.source.y) << "), "
        << s.filaments.size() << " live filaments after " << a.steps << " steps\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------- spectra

struct SpectraArgs {
  std::vector<std::string> checkpoints;
  std::string z_grid;
  std::string out = "spectra";
};

int cmd_spectra(const SpectraArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<Checkpoint> ckpts;
  std::vector<Complex> grid = default_z_grid();
  try {
    for (const auto& path : a.checkpoints) {
      ckpts.push_back(load_checkpoint(path));
    }
    if (!a.z_grid.empty()) {
      std::ifstream is(a.z_grid);
      if (!is) throw FormatError("cannot open z grid " + a.z_grid);
      grid = read_z_grid(is);
    }
  } catch (const std::exception& e) {
    err << "input error: " << e.what() << "\n";
    return kExitConfig;
  }
  std::vector<GpfNetwork> nets;
  for (auto& c : ckpts) nets.push_back(c.network);
  std::vector<DepthProbeRow> rows;
  try {
    rows = depth_composition_probe(nets, grid);
  } catch (const ValidationError& e) {
    err << "shape mismatch: " << e.what() << "\n";
    return kExitConfig;
  }

  const fs::path dir = resolve_output(a.out);
  fs::create_directories(dir);
  std::ofstream ks(dir / "ks.csv");
  ks << "snapshot,episode,layer,rows,cols,q,sigma2,ks\n";
  int files = 0;
  for (std::size_t s = 0; s < ckpts.size(); ++s) {
    const auto& net = ckpts[s].network;
    for (std::size_t l = 0; l < net.hidden_layers(); ++l) {
      const auto& w = net.layer(l).weights;
      const double m = static_cast<double>(w.rows());
      Esd esd = gram_esd(w, m);
      esd.layer = static_cast<int>(l);
      esd.episode = ckpts[s].meta.episode;
      std::ofstream os(dir / ("esd_s" + std::to_string(s) + "_l" + std::to_string(l) + ".csv"));
      write_esd_header(os);
      write_esd(os, esd);
      ++files;
      const auto law = variance_matched_mp(w, m);
      const double d = ks_distance(esd, law);
      ks << s << ',' << esd.episode << ',' << l << ',' << w.rows() << ',' << w.cols() << ',' << format_number(law.q)
         << ',' << format_number(law.sigma2) << ',' << format_number(d) << '\n';
      out << "snapshot " << s << " layer " << l << ": " << w.rows() << "x" << w.cols() << ", KS vs MP "
          << format_number(d) << "\n";
    }
  }
  {
    std::ofstream os(dir / "stieltjes.csv");
    write_stieltjes_table(os, rows, grid);
  }
  {
    std::ofstream os(dir / "composition.csv");
    os << "snapshot,depth,diff\n";
    for (const auto& r : rows) {
      os << r.snapshot << ',' << r.depth << ',' << format_number(r.diff) << '\n';
    }
  }
  out << files << " ESD files, " << rows.size() << " composition rows written to " << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- tokens

struct TokenArgs {
  std::string policy = "random";
  std::string checkpoint;
  std::string config;
  int episodes = 1;
  std::uint64_t seed_base = 3'000'000;
  std::optional<double> epsilon;
  std::string out = "tokens.txt";
};

int cmd_tokens(const TokenArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  std::optional<Checkpoint> ckpt;
  try {
    cfg = load_run_config(a.config);
    if (a.episodes <= 0) throw ValidationError("--episodes", "must be > 0");
    if (a.policy == "checkpoint") {
      if (a.checkpoint.empty()) throw ValidationError("--checkpoint", "required with --policy checkpoint");
      ckpt = load_checkpoint(a.checkpoint);
    } else if (a.policy != "random") {
      throw ValidationError("--policy", "expected random or checkpoint");
    }
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  const double eps = a.epsilon.value_or(cfg.train.eval_epsilon);
  PlumeEnv env(cfg.plume, cfg.env);
  std::vector<EpisodeTokens> episodes;
  std::vector<std::string> lines;
  for (int j = 0; j < a.episodes; ++j) {
    const std::uint64_t seed = a.seed_base + static_cast<std::uint64_t>(j);
    Rng rng(mix_seed(seed, 2));
    EpisodeTrace trace;
    run_episode(ckpt ? &ckpt->network : nullptr, env, seed, eps, rng, &trace);
    episodes.push_back(trace.tokens());
    std::ostringstream os;
    write_token_file(os, std::span(&episodes.back(), 1));
    std::string line = os.str();
    if (!line.empty() && line.back() == '\n') line.pop_back();
    lines.push_back(std::move(line));
  }
  if (const auto problem = token_self_check(episodes, lines); !problem.empty()) {
    err << "token self-check failed: " << problem << "\n";
    return kExitRuntime;
  }
  const auto path = resolve_output(a.out);
  std::ofstream os(path, std::ios::trunc);
  if (!os) {
    err << "cannot write " << path << "\n";
    return kExitConfig;
  }
  for (const auto& line : lines) os << line << '\n';
  out << a.episodes << " episodes written to " << path.string() << "\n";
  return kExitOk;
}

}  // namespace

std::string token_self_check(std::span<const EpisodeTokens> episodes, std::span<const std::string> lines) {
  if (episodes.size() != lines.size()) {
    return "episode and line counts differ";
  }
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      const auto ids = parse_id_line(lines[i]);
      for (int id : ids) {
        if (id < 0 || id >= token_id::kVocabularySize) {
          return "line " + std::to_string(i + 1) + ": id " + std::to_string(id) + " outside the vocabulary";
        }
      }
      const auto parsed = parse_sequence(from_ids(ids));
      if (parsed.size() != 1 || !(parsed.front() == episodes[i])) {
        return "line " + std::to_string(i + 1) + ": round trip does not reproduce the episode";
      }
    } catch (const FormatError& e) {
      return "line " + std::to_string(i + 1) + ": " + e.what();
    }
  }
  return {};
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Grow-prune-freeze plume navigation: training, evaluation and diagnostics", "gpf"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train an agent and write metrics, checkpoints and a manifest");
  train_cmd->add_option("--config", train_args.config, "INI configuration file");
  train_cmd->add_option("--episodes", train_args.episodes, "Training episodes");
  train_cmd->add_option("--gpf", train_args.gpf, "on: grow/prune/freeze; off: static single-layer network")
      ->check(CLI::IsMember({"on", "off"}));
  train_cmd->add_option("--target", train_args.target, "TD target: expected or greedy")
      ->check(CLI::IsMember({"expected", "greedy"}));
  train_cmd->add_option("--seed-env", train_args.seed_env, "Environment seed");
  train_cmd->add_option("--seed-agent", train_args.seed_agent, "Agent seed (initialisation and exploration)");
  train_cmd->add_option("--eval-every", train_args.eval_every, "Episodes between evaluations");
  train_cmd->add_option("--eval-episodes", train_args.eval_episodes, "Episodes per evaluation");
  train_cmd->add_option("--threads", train_args.threads, "Evaluation threads (0 = all cores)");
  train_cmd->add_option("--out", train_args.out, "Output directory")->capture_default_str();

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on held-out episodes");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--config", eval_args.config, "INI configuration file (plume and env sections)");
  eval_cmd->add_option("--episodes", eval_args.episodes, "Episodes")->capture_default_str();
  eval_cmd->add_option("--seed-base", eval_args.seed_base, "First episode seed (default: train.test_seed_base)");
  eval_cmd->add_option("--epsilon", eval_args.epsilon, "Exploration rate (default: train.eval_epsilon)");
  eval_cmd->add_option("--trace", eval_args.trace, "Directory for per-episode trace CSVs");
  eval_cmd->add_option("--threads", eval_args.threads, "Evaluation threads (0 = all cores)")->capture_default_str();

  PlumeArgs plume_args;
  auto* plume_cmd = app.add_subcommand("plume", "Simulate the plume alone and export filament snapshots");
  plume_cmd->add_option("--config", plume_args.config, "INI configuration file");
  plume_cmd->add_option("--seed", plume_args.seed, "Plume seed")->capture_default_str();
  plume_cmd->add_option("--steps", plume_args.steps, "Simulation steps")->capture_default_str();
  plume_cmd->add_option("--every", plume_args.every, "Snapshot interval in steps")->capture_default_str();
  plume_cmd->add_flag("--keep-outside", plume_args.keep_outside, "Keep filaments that leave the domain");
  plume_cmd->add_option("--out", plume_args.out, "Output CSV (default: stdout)");

  SpectraArgs spectra_args;
  auto* spectra_cmd = app.add_subcommand("spectra", "Layer spectra, MP fits and depth-composition tables");
  spectra_cmd->add_option("--checkpoint", spectra_args.checkpoints, "Checkpoint(s), in snapshot order")
      ->required()
      ->expected(1, -1);
  spectra_cmd->add_option("--z-grid", spectra_args.z_grid, "File of 're im' lines overriding the default grid");
  spectra_cmd->add_option("--out", spectra_args.out, "Output directory")->capture_default_str();

  TokenArgs token_args;
  auto* tokens_cmd = app.add_subcommand("tokens", "Roll out episodes and write token-sequence files");
  tokens_cmd->add_option("--policy", token_args.policy, "random or checkpoint")
      ->check(CLI::IsMember({"random", "checkpoint"}))
      ->capture_default_str();
  tokens_cmd->add_option("--checkpoint", token_args.checkpoint, "Checkpoint for --policy checkpoint");
  tokens_cmd->add_option("--config", token_args.config, "INI configuration file");
  tokens_cmd->add_option("--episodes", token_args.episodes, "Episodes")->capture_default_str();
  tokens_cmd->add_option("--seed-base", token_args.seed_base, "First episode seed")->capture_default_str();
  tokens_cmd->add_option("--epsilon", token_args.epsilon, "Exploration rate for --policy checkpoint");
  tokens_cmd->add_option("--out", token_args.out, "Output file")->capture_default_str();

  std::vector<std::string> reversed;
  if (!args.empty()) reversed.assign(args.rbegin(), args.rend() - 1);
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  const std::vector<std::string> argv(args.begin(), args.end());
  try {
    if (*train_cmd) return cmd_train(train_args, argv, out, err);
    if (*eval_cmd) return cmd_eval(eval_args, out, err);
    if (*plume_cmd) return cmd_plume(plume_args, out, err);
    if (*spectra_cmd) return cmd_spectra(spectra_args, out, err);
    if (*tokens_cmd) return cmd_tokens(token_args, out, err);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args, out, err);
}

}  // namespace gpf::cli
