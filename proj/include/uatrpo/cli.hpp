#pragma once

// Command-line front end: `train`, `report` and `selftest`.
//
// Run directory layout: config.echo, seed_<k>.csv, summary.csv, plots/.
// Exit codes: 0 success, 1 runtime failure (failed self-check, no readable
// runs), 2 usage or configuration error, 3 every seed diverged.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "uatrpo/config.hpp"
#include "uatrpo/error.hpp"
#include "uatrpo/harness.hpp"
#include "uatrpo/plots.hpp"
#include "uatrpo/selftest.hpp"

namespace uatrpo {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitAllDiverged = 3;

inline std::string flag_name(const std::string& key) {
  std::string s = "--" + key;
  std::replace(s.begin(), s.end(), '_', '-');
  return s;
}

/// Reads every seed_<k>.csv of a run directory, in seed order.
inline std::vector<RunRecord> load_run_dir(const std::filesystem::path& dir, std::ostream& err) {
  namespace fs = std::filesystem;
  std::map<std::uint64_t, fs::path> files;
  if (!fs::is_directory(dir)) {
    err << "warning: " << dir.string() << " is not a directory\n";
    return {};
  }
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("seed_", 0) != 0 || entry.path().extension() != ".csv") continue;
    std::uint64_t seed = 0;
    if (!detail::parse_int_field(name.substr(5, name.size() - 9), seed)) continue;
    files.emplace(seed, entry.path());
  }
  std::vector<RunRecord> out;
  for (const auto& [seed, path] : files) {
    std::ifstream is(path);
    CsvReadResult csv = read_metrics_csv(is);
    if (csv.skipped > 0) err << "warning: " << path.string() << ": skipped " << csv.skipped << " invalid row(s)\n";
    if (csv.rows.empty()) continue;
    RunRecord rec;
    rec.seed = seed;
    rec.rows = std::move(csv.rows);
    rec.initial_return = rec.rows.front().mean_return;
    out.push_back(std::move(rec));
  }
  return out;
}

inline void write_run_outputs(const std::filesystem::path& out, std::span<const RunGroup> groups) {
  std::ofstream summary(out / "summary.csv");
  bool header = true;
  for (const auto& g : groups) {
    write_summary_csv(summary, g.label, g.records, header);
    header = false;
  }
  emit_plots(groups, out / "plots");
}

struct TrainFlags {
  std::map<std::string, std::string> values;  // config key -> flag value, only flags actually given
  bool adversarial = false;
  std::optional<std::size_t> seeds;
  std::optional<std::uint64_t> seed;
  std::string config_file;
  std::string out;
  std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
};

inline int cmd_train(const TrainFlags& flags, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg;
  bool env_given = false;
  try {
    if (!flags.config_file.empty()) {
      std::ifstream is(flags.config_file);
      if (!is) throw ConfigError("cannot read config file '" + flags.config_file + "'");
      for (const auto& [k, v] : parse_config(is)) {
        apply_setting(cfg, k, v);
        env_given = env_given || k == "env";
      }
    }
    for (const auto& [k, v] : flags.values) {
      apply_setting(cfg, k, v);
      env_given = env_given || k == "env";
    }
    if (flags.adversarial) cfg.adversarial_noise = true;
    const int seed_sources = int(flags.seeds.has_value()) + int(flags.seed.has_value()) +
                             int(flags.values.count("seed_list") > 0);
    if (seed_sources > 1) throw ConfigError("use only one of --seed, --seeds and --seed-list");
    if (flags.seeds) {
      if (*flags.seeds == 0) throw ConfigError("--seeds must be >= 1");
      cfg.seeds = ExperimentConfig::default_seeds(*flags.seeds);
    }
    if (flags.seed) cfg.seeds = {*flags.seed};
    if (!env_given) throw ConfigError("--env is required (lqr, pointmass or pendulum)");
    cfg.validate();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\nRun with --help for usage.\n";
    return kExitUsage;
  }

  const std::filesystem::path dir(flags.out);
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "config.echo") << echo_config(cfg);
  const auto records = run_experiment(cfg, dir, flags.jobs);

  std::size_t failed = 0;
  for (const auto& r : records) {
    out << "seed " << r.seed << ": final return " << format_double(r.final_return());
    if (r.failed) {
      ++failed;
      out << " (failed: " << r.failure << ")";
    }
    out << '\n';
  }
  const RunGroup group{to_string(cfg.algo), records};
  write_run_outputs(dir, std::span<const RunGroup>(&group, 1));
  out << "wrote " << records.size() << " seed file(s) to " << dir.string() << '\n';
  if (failed == records.size()) {
    err << "error: every seed diverged\n";
    return kExitAllDiverged;
  }
  return kExitOk;
}

inline int cmd_report(const std::vector<std::string>& runs, const std::string& out_flag, std::ostream& out,
                      std::ostream& err) {
  if (runs.empty()) {
    err << "error: --runs needs at least one run directory\n";
    return kExitUsage;
  }
  if (out_flag.empty() && runs.size() > 1) {
    err << "error: --out is required when reporting several runs\n";
    return kExitUsage;
  }
  std::vector<RunGroup> groups;
  for (const auto& r : runs) {
    const std::filesystem::path p(r);
    std::string label = p.filename().string();
    if (label.empty()) label = p.parent_path().filename().string();
    auto records = load_run_dir(p, err);
    if (records.empty()) {
      err << "warning: no readable seed files in " << r << '\n';
      continue;
    }
    groups.push_back({label, std::move(records)});
  }
  if (groups.empty()) {
    err << "error: no valid runs\n";
    return kExitFailure;
  }
  const std::filesystem::path dir = out_flag.empty() ? std::filesystem::path(runs.front()) : std::filesystem::path(out_flag);
  std::filesystem::create_directories(dir);
  write_run_outputs(dir, groups);
  out << "wrote summary.csv and plots/ to " << dir.string() << '\n';
  return kExitOk;
}

inline int cmd_selftest(const SelftestOptions& opt, std::ostream& out) {
  const bool ok = print_selftest(out, run_selftest(opt));
  out << (ok ? "all checks passed\n" : "self-test FAILED\n");
  return ok ? kExitOk : kExitFailure;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Trust-region policy optimization experiments (TRPO and UA-TRPO)"};
  app.require_subcommand(1);

  TrainFlags train;
  auto* tr = app.add_subcommand("train", "train policies for every seed and write a run directory");
  std::map<std::string, std::string> raw;
  for (const auto& key : config_keys()) {
    const std::string name = key.name;
    if (name == "adversarial_noise") continue;
    tr->add_option(flag_name(name), raw[name], key.help);
  }
  tr->add_flag("--adversarial-noise", train.adversarial, "push each gradient coordinate one standard error toward zero");
  tr->add_option("--seeds", train.seeds, "number of seeds, 0..N-1");
  tr->add_option("--seed", train.seed, "a single seed");
  tr->add_option("--config", train.config_file, "flat key = value file; flags override it");
  tr->add_option("--out", train.out, "run directory")->required();
  tr->add_option("--jobs", train.jobs, "seeds trained in parallel")->check(CLI::PositiveNumber);

  std::vector<std::string> runs;
  std::string report_out;
  auto* rep = app.add_subcommand("report", "merge finished runs into summary.csv and plots");
  rep->add_option("--runs", runs, "run directories")->required();
  rep->add_option("--out", report_out, "output directory (defaults to the run directory when there is one)");

  SelftestOptions st;
  std::string fault;
  auto* self = app.add_subcommand("selftest", "run the fast numerical self-checks");
  self->add_flag("--quick", st.quick, "halve Monte Carlo trial counts");
  self->add_option("--inject-fault", fault, "deliberately break a component (eigen)")
      ->check(CLI::IsMember({"eigen"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*tr) {
      for (const auto& [k, v] : raw)
        if (tr->count(flag_name(k)) > 0) train.values[k] = v;
      return cmd_train(train, out, err);
    }
    if (*rep) return cmd_report(runs, report_out, out, err);
    st.inject_eigen_fault = fault == "eigen";
    return cmd_selftest(st, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace uatrpo
