#pragma once

// Experiment orchestration: multi-seed training runs, robustness metrics
// (kappa-CVaR across seeds), adversarial gradient noise, the KL-ratio audit
// and the metrics CSV format.

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "uatrpo/envs.hpp"
#include "uatrpo/error.hpp"
#include "uatrpo/estimation.hpp"
#include "uatrpo/optimizers.hpp"
#include "uatrpo/policy.hpp"
#include "uatrpo/rng.hpp"
#include "uatrpo/trust_region.hpp"

namespace uatrpo {

enum class Algorithm { Trpo, UaTrpo };

inline std::string to_string(Algorithm a) { return a == Algorithm::Trpo ? "trpo" : "ua_trpo"; }

inline Algorithm parse_algorithm(const std::string& s) {
  if (s == "trpo") return Algorithm::Trpo;
  if (s == "ua_trpo") return Algorithm::UaTrpo;
  throw InvalidArgument("unknown algorithm '" + s + "' (expected trpo or ua_trpo)");
}

struct ExperimentConfig {
  std::string env = "lqr";
  Algorithm algo = Algorithm::UaTrpo;
  std::size_t total_steps = 50000;
  std::size_t batch_steps = 1000;
  std::vector<std::uint64_t> seeds = default_seeds(20);
  std::size_t eval_episodes = 5;
  bool adversarial_noise = false;

  EnvOptions env_options{};
  double lambda = 0.97;
  double vf_step_size = 1e-3;
  int vf_iters = 5;
  std::vector<std::size_t> hidden{8, 8};
  std::size_t subsample_factor = 10;

  TrpoConfig trpo{};
  UaTrpoConfig ua{};

  static std::vector<std::uint64_t> default_seeds(std::size_t n) {
    std::vector<std::uint64_t> s(n);
    std::iota(s.begin(), s.end(), std::uint64_t{0});
    return s;
  }

  std::size_t iterations() const { return std::max<std::size_t>(1, total_steps / batch_steps); }

  void validate() const {
    require(batch_steps >= 1, "batch steps must be >= 1");
    require(!seeds.empty(), "seed list must be nonempty");
    require(total_steps >= 1, "total steps must be >= 1");
    require(eval_episodes >= 1, "evaluation episodes must be >= 1");
    require(subsample_factor >= 1, "subsample factor must be >= 1");
    require(trpo.delta_kl > 0.0, "delta_kl must be positive");
    require(ua.delta_ua > 0.0, "delta_ua must be positive");
    require(ua.c >= 0.0, "c must be >= 0");
    require(ua.alpha > 0.0 && ua.alpha < 1.0, "alpha must be in (0, 1)");
    require(ua.beta >= 0.0 && ua.beta < 1.0, "beta must be in [0, 1)");
    require(ua.m >= 1, "m must be >= 1");
    make_env(env, env_options);
  }
};

/// One metrics CSV row.
struct IterationRow {
  std::uint64_t seed = 0;
  std::size_t iter = 0;
  std::size_t env_steps = 0;
  double mean_return = 0.0;
  double cvar_eval_return = 0.0;
  double eta = 0.0;
  double est_kl = 0.0;
  double actual_kl = 0.0;  // KL of the proposed step, before any line search
  double kl_ratio = 0.0;
  double surrogate_improvement = 0.0;
  bool accepted = false;
  int ls_steps = 0;
  double rn2 = 0.0;
  std::size_t ell = 0;
};

inline constexpr const char* kCsvHeader =
    "seed,iter,env_steps,mean_return,cvar_eval_return,eta,est_kl,actual_kl,kl_ratio,surrogate_improvement,accepted,"
    "ls_steps,rn2,ell";

struct RunRecord {
  std::string label;
  std::uint64_t seed = 0;
  double initial_return = 0.0;
  std::vector<IterationRow> rows;
  std::vector<double> wall_clock;  // seconds since run start, per iteration
  bool failed = false;
  std::string failure;

  // Last recorded evaluation return; failed runs carry it forward.
  double final_return() const { return rows.empty() ? initial_return : rows.back().mean_return; }
};

/// Mean of the lowest ceil(kappa * N) values.
inline double cvar(std::span<const double> values, double kappa) {
  require(!values.empty(), "cvar: empty input");
  require(kappa > 0.0 && kappa <= 1.0, "cvar: kappa must be in (0, 1]");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  // the 1e-9 slack keeps e.g. 0.1 * 30 from rounding up to 4
  auto count = static_cast<std::size_t>(std::ceil(kappa * n - 1e-9));
  count = std::clamp<std::size_t>(count, 1, sorted.size());
  return std::accumulate(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(count), 0.0) /
         static_cast<double>(count);
}

/// Moves every coordinate of g_hat one standard error toward zero (and past
/// it when the standard error is larger); sign(0) = 0.
inline Vector adversarial_noise(const GradientEstimate& g) {
  require(g.g_hat.size() == g.per_dim_stderr.size(), "adversarial_noise: length mismatch");
  Vector out(g.g_hat.size());
  for (std::size_t j = 0; j < out.size(); ++j) {
    const double x = g.g_hat[j];
    const double sign = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
    out[j] = x - sign * g.per_dim_stderr[j];
  }
  return out;
}

struct KlHistogram {
  static constexpr std::array<double, 7> kEdges{0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0};  // last bin is [3, inf)
  std::array<std::size_t, 7> counts{};
  std::size_t total = 0;

  static std::size_t bin_of(double ratio) {
    std::size_t b = 0;
    while (b + 1 < kEdges.size() && ratio >= kEdges[b + 1]) ++b;
    return b;
  }

  void add(double ratio) {
    ++counts[bin_of(ratio)];
    ++total;
  }

  double fraction_at_least(double threshold) const {
    if (total == 0) return 0.0;
    std::size_t n = 0;
    for (std::size_t b = 0; b < kEdges.size(); ++b)
      if (kEdges[b] >= threshold) n += counts[b];
    return static_cast<double>(n) / static_cast<double>(total);
  }
};

inline constexpr double kEstimatedKlFloor = 1e-12;

inline double kl_ratio(double actual, double estimated) { return actual / std::max(estimated, kEstimatedKlFloor); }

/// Pools actual/estimated KL of every proposed update (rows with a positive
/// estimated KL) across the given runs.
inline KlHistogram kl_ratio_histogram(std::span<const RunRecord> records) {
  KlHistogram h;
  for (const auto& rec : records)
    for (const auto& row : rec.rows)
      if (row.est_kl > 0.0) h.add(kl_ratio(row.actual_kl, row.est_kl));
  return h;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string to_csv(const IterationRow& r) {
  std::ostringstream os;
  os << r.seed << ',' << r.iter << ',' << r.env_steps << ',' << format_double(r.mean_return) << ','
     << format_double(r.cvar_eval_return) << ',' << format_double(r.eta) << ',' << format_double(r.est_kl) << ','
     << format_double(r.actual_kl) << ',' << format_double(r.kl_ratio) << ','
     << format_double(r.surrogate_improvement) << ',' << (r.accepted ? 1 : 0) << ',' << r.ls_steps << ','
     << format_double(r.rn2) << ',' << r.ell;
  return os.str();
}

namespace detail {

inline bool parse_double_field(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

template <typename Int>
bool parse_int_field(const std::string& s, Int& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size() || s.front() == '-') return false;
  out = static_cast<Int>(v);
  return true;
}

}  // namespace detail

inline std::optional<IterationRow> parse_csv_row(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) f.push_back(item);
  if (!line.empty() && line.back() == ',') f.emplace_back();
  if (f.size() != 14) return std::nullopt;
  IterationRow r;
  int accepted = 0;
  const bool ok = detail::parse_int_field(f[0], r.seed) && detail::parse_int_field(f[1], r.iter) &&
                  detail::parse_int_field(f[2], r.env_steps) && detail::parse_double_field(f[3], r.mean_return) &&
                  detail::parse_double_field(f[4], r.cvar_eval_return) && detail::parse_double_field(f[5], r.eta) &&
                  detail::parse_double_field(f[6], r.est_kl) && detail::parse_double_field(f[7], r.actual_kl) &&
                  detail::parse_double_field(f[8], r.kl_ratio) &&
                  detail::parse_double_field(f[9], r.surrogate_improvement) &&
                  detail::parse_int_field(f[10], accepted) && detail::parse_int_field(f[11], r.ls_steps) &&
                  detail::parse_double_field(f[12], r.rn2) && detail::parse_int_field(f[13], r.ell);
  if (!ok || (accepted != 0 && accepted != 1)) return std::nullopt;
  r.accepted = accepted == 1;
  return r;
}

struct CsvReadResult {
  std::vector<IterationRow> rows;
  std::size_t skipped = 0;
};

inline CsvReadResult read_metrics_csv(std::istream& is) {
  CsvReadResult out;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first) {
      first = false;
      if (line == kCsvHeader) continue;
    }
    if (line.empty()) continue;
    if (auto row = parse_csv_row(line)) {
      out.rows.push_back(*row);
    } else {
      ++out.skipped;
    }
  }
  return out;
}

/// Trains one seed. Every row is also streamed to `csv` when given.
inline RunRecord run_seed(const ExperimentConfig& cfg, std::uint64_t seed, std::ostream* csv = nullptr) {
  cfg.validate();
  const auto env = make_env(cfg.env, cfg.env_options);
  const SeededRng root(seed);
  SeededRng rollout_rng = root.split(Stream::Rollout);
  SeededRng eval_rng = root.split(Stream::Evaluation);
  SeededRng policy_rng = root.split(Stream::PolicyInit);
  SeededRng value_rng = root.split(Stream::ValueInit);
  SeededRng omega_rng = root.split(Stream::Projection);
  SeededRng subsample_rng = root.split(Stream::Subsample);

  PolicyArch arch{env->state_dim(), env->action_dim(), cfg.hidden};
  PolicyParams params = init_policy(arch, policy_rng);
  ValueFunction vf(env->state_dim(), cfg.hidden, value_rng);
  ObsNormalizer normalizer(env->state_dim());
  std::optional<UaTrpoState> ua_state;
  if (cfg.algo == Algorithm::UaTrpo) ua_state = UaTrpoState::create(params.dim(), cfg.ua, omega_rng);

  RunRecord rec;
  rec.label = to_string(cfg.algo);
  rec.seed = seed;
  if (csv) *csv << kCsvHeader << '\n';
  const auto start = std::chrono::steady_clock::now();

  try {
    const auto initial = evaluate(params, *env, normalizer, cfg.eval_episodes, eval_rng);
    rec.initial_return = std::accumulate(initial.begin(), initial.end(), 0.0) / static_cast<double>(initial.size());

    const double gamma = cfg.env_options.gamma;
    for (std::size_t it = 1; it <= cfg.iterations(); ++it) {
      const RolloutBatch batch = collect(params, *env, normalizer, cfg.batch_steps, rollout_rng);
      const AdvantageResult adv = gae(batch, vf, gamma, cfg.lambda);
      const std::vector<Vector> states = batch.states();
      fit_value(vf, states, adv.value_targets, cfg.vf_step_size, cfg.vf_iters);
      const Vector std_adv = standardize_advantages(adv.advantages);

      IterationEstimates est = make_estimates(batch, params, std_adv, cfg.subsample_factor, subsample_rng);
      if (cfg.adversarial_noise) est.gradient.g_hat = adversarial_noise(est.gradient);

      UpdateResult upd = cfg.algo == Algorithm::Trpo ? trpo_step(params, est, cfg.trpo)
                                                     : ua_trpo_step(params, est, *ua_state, cfg.ua);
      params = std::move(upd.params);
      const StepReport& rep = upd.report;

      const auto returns = evaluate(params, *env, normalizer, cfg.eval_episodes, eval_rng);
      IterationRow row;
      row.seed = seed;
      row.iter = it;
      row.env_steps = it * cfg.batch_steps;
      row.mean_return = std::accumulate(returns.begin(), returns.end(), 0.0) / static_cast<double>(returns.size());
      row.cvar_eval_return = cvar(returns, 0.2);
      row.eta = rep.eta;
      row.est_kl = rep.estimated_kl;
      row.actual_kl = rep.proposed_kl;
      row.kl_ratio = rep.estimated_kl > 0.0 ? kl_ratio(rep.proposed_kl, rep.estimated_kl) : 0.0;
      row.surrogate_improvement = rep.surrogate_improvement;
      row.accepted = rep.accepted;
      row.ls_steps = rep.line_search_steps;
      row.rn2 = rep.rn2;
      row.ell = rep.ell;
      rec.rows.push_back(row);
      rec.wall_clock.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
      if (csv) *csv << to_csv(row) << '\n' << std::flush;
    }
  } catch (const Error& e) {
    rec.failed = true;
    rec.failure = e.what();
  }
  return rec;
}

inline std::string seed_csv_name(std::uint64_t seed) { return "seed_" + std::to_string(seed) + ".csv"; }

/// All seeds of one configuration, up to `jobs` at a time. Records come back
/// in seed-list order regardless of scheduling; with an output directory each
/// seed streams its own seed_<k>.csv.
inline std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg,
                                             const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                                             std::size_t jobs = 1) {
  cfg.validate();
  if (out_dir) std::filesystem::create_directories(*out_dir);
  std::vector<RunRecord> records(cfg.seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cfg.seeds.size(); i = next++) {
      const std::uint64_t seed = cfg.seeds[i];
      if (out_dir) {
        std::ofstream csv(*out_dir / seed_csv_name(seed));
        records[i] = run_seed(cfg, seed, &csv);
      } else {
        records[i] = run_seed(cfg, seed);
      }
    }
  };
  jobs = std::clamp<std::size_t>(jobs, 1, cfg.seeds.size());
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  return records;
}

/// Final returns across seeds (failed runs contribute their last return).
inline std::vector<double> final_returns(std::span<const RunRecord> records) {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.final_return());
  return out;
}

/// kappa values of the summary table: 0.05, 0.10, ..., 1.00.
inline std::vector<double> summary_kappas() {
  std::vector<double> k;
  for (int i = 1; i <= 20; ++i) k.push_back(0.05 * i);
  return k;
}

// Long-format summary: label,metric,key,value with one final_return row per
// seed and one cvar row per kappa.
inline void write_summary_csv(std::ostream& os, const std::string& label, std::span<const RunRecord> records,
                              bool header = true) {
  if (header) os << "label,metric,key,value\n";
  for (const auto& r : records)
    os << label << ",final_return,seed_" << r.seed << ',' << format_double(r.final_return()) << '\n';
  const auto finals = final_returns(records);
  char key[16];
  for (double k : summary_kappas()) {
    std::snprintf(key, sizeof key, "%.2f", k);
    os << label << ",cvar," << key << ',' << format_double(cvar(finals, k)) << '\n';
  }
}

}  // namespace uatrpo
