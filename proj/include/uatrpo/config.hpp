#pragma once

// Flat `key = value` configuration: parsing, applying onto an
// ExperimentConfig, and the echo written next to every run. Blank lines and
// lines starting with '#' are ignored; unknown keys are rejected.

#include <charconv>
#include <cstdint>
#include <istream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "uatrpo/error.hpp"
#include "uatrpo/harness.hpp"

namespace uatrpo {

struct ConfigKey {
  const char* name;
  const char* help;
};

// Every overridable setting. CLI flags are the same names with '-' for '_'.
inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys{
      {"env", "environment: lqr, pointmass or pendulum"},
      {"algo", "optimizer: trpo or ua_trpo"},
      {"steps", "total environment steps per seed"},
      {"batch", "environment steps per policy update"},
      {"seed_list", "comma-separated seeds"},
      {"eval_episodes", "evaluation episodes per checkpoint"},
      {"adversarial_noise", "push each gradient coordinate one standard error toward zero"},
      {"horizon", "maximum episode length"},
      {"gamma", "discount factor"},
      {"env_noise", "standard deviation of the process noise"},
      {"reward_scale", "multiplier applied to every reward"},
      {"lambda", "GAE parameter"},
      {"vf_step_size", "value-function Adam step size"},
      {"vf_iters", "value-function Adam iterations per update"},
      {"hidden", "comma-separated hidden layer widths"},
      {"subsample_factor", "keep one in this many steps for trust-region estimates"},
      {"delta_kl", "TRPO KL radius"},
      {"cg_iters", "TRPO conjugate-gradient iterations"},
      {"cg_damping", "TRPO conjugate-gradient damping"},
      {"backtrack_ratio", "TRPO line-search shrink factor"},
      {"max_backtracks", "TRPO line-search attempts"},
      {"delta_ua", "UA-TRPO trust-region radius"},
      {"c", "UA-TRPO uncertainty trade-off"},
      {"alpha", "UA-TRPO confidence level of the uncertainty set"},
      {"m", "UA-TRPO requested random projections"},
      {"beta", "UA-TRPO EMA weight"},
      {"use_ema", "UA-TRPO uses EMA sketches (true/false)"},
  };
  return keys;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double to_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  if (!parse_double_field(v, out) || !std::isfinite(out))
    throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  return out;
}

template <typename Int>
Int to_count(const std::string& key, const std::string& v) {
  Int out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("'" + key + "' expects true or false, got '" + v + "'");
}

template <typename Int>
std::vector<Int> to_list(const std::string& key, const std::string& v) {
  std::vector<Int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_count<Int>(key, trim(item)));
  if (out.empty()) throw ConfigError("'" + key + "' expects a comma-separated list");
  return out;
}

template <typename Int>
std::string join(const std::vector<Int>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
  return s;
}

}  // namespace detail

inline bool is_config_key(const std::string& key) {
  for (const auto& k : config_keys())
    if (key == k.name) return true;
  return false;
}

inline void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& raw) {
  using namespace detail;
  const std::string v = trim(raw);
  if (key == "env") {
    if (v != "lqr" && v != "pointmass" && v != "pendulum") throw ConfigError("unknown env '" + v + "'");
    cfg.env = v;
  } else if (key == "algo") {
    if (v != "trpo" && v != "ua_trpo") throw ConfigError("unknown algo '" + v + "'");
    cfg.algo = parse_algorithm(v);
  } else if (key == "steps") {
    cfg.total_steps = to_count<std::size_t>(key, v);
  } else if (key == "batch") {
    cfg.batch_steps = to_count<std::size_t>(key, v);
  } else if (key == "seed_list") {
    cfg.seeds = to_list<std::uint64_t>(key, v);
  } else if (key == "eval_episodes") {
    cfg.eval_episodes = to_count<std::size_t>(key, v);
  } else if (key == "adversarial_noise") {
    cfg.adversarial_noise = to_bool(key, v);
  } else if (key == "horizon") {
    cfg.env_options.horizon = to_count<std::size_t>(key, v);
  } else if (key == "gamma") {
    cfg.env_options.gamma = to_real(key, v);
  } else if (key == "env_noise") {
    cfg.env_options.noise = to_real(key, v);
  } else if (key == "reward_scale") {
    cfg.env_options.reward_scale = to_real(key, v);
  } else if (key == "lambda") {
    cfg.lambda = to_real(key, v);
  } else if (key == "vf_step_size") {
    cfg.vf_step_size = to_real(key, v);
  } else if (key == "vf_iters") {
    cfg.vf_iters = to_count<int>(key, v);
  } else if (key == "hidden") {
    cfg.hidden = to_list<std::size_t>(key, v);
  } else if (key == "subsample_factor") {
    cfg.subsample_factor = to_count<std::size_t>(key, v);
  } else if (key == "delta_kl") {
    cfg.trpo.delta_kl = to_real(key, v);
  } else if (key == "cg_iters") {
    cfg.trpo.cg_iters = to_count<int>(key, v);
  } else if (key == "cg_damping") {
    cfg.trpo.cg_damping = to_real(key, v);
  } else if (key == "backtrack_ratio") {
    cfg.trpo.backtrack_ratio = to_real(key, v);
  } else if (key == "max_backtracks") {
    cfg.trpo.max_backtracks = to_count<int>(key, v);
  } else if (key == "delta_ua") {
    cfg.ua.delta_ua = to_real(key, v);
  } else if (key == "c") {
    cfg.ua.c = to_real(key, v);
  } else if (key == "alpha") {
    cfg.ua.alpha = to_real(key, v);
  } else if (key == "m") {
    cfg.ua.m = to_count<std::size_t>(key, v);
  } else if (key == "beta") {
    cfg.ua.beta = to_real(key, v);
  } else if (key == "use_ema") {
    cfg.ua.use_ema = to_bool(key, v);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

/// Parses `key = value` lines. Returns pairs in file order.
inline std::vector<std::pair<std::string, std::string>> parse_config(std::istream& is) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  for (int lineno = 1; std::getline(is, line); ++lineno) {
    const std::string t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    std::string key = detail::trim(t.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": missing key");
    out.emplace_back(std::move(key), detail::trim(t.substr(eq + 1)));
  }
  return out;
}

inline void apply_config(ExperimentConfig& cfg, std::istream& is) {
  for (const auto& [k, v] : parse_config(is)) apply_setting(cfg, k, v);
}

/// Every setting, in config_keys() order, reals at full precision so that
/// feeding the echo back reproduces the run exactly.
inline std::string echo_config(const ExperimentConfig& cfg) {
  using detail::join;
  const auto real = [](double x) { return format_double(x); };
  std::ostringstream os;
  os << "env = " << cfg.env << '\n'
     << "algo = " << to_string(cfg.algo) << '\n'
     << "steps = " << cfg.total_steps << '\n'
     << "batch = " << cfg.batch_steps << '\n'
     << "seed_list = " << join(cfg.seeds) << '\n'
     << "eval_episodes = " << cfg.eval_episodes << '\n'
     << "adversarial_noise = " << (cfg.adversarial_noise ? "true" : "false") << '\n'
     << "horizon = " << cfg.env_options.horizon << '\n'
     << "gamma = " << real(cfg.env_options.gamma) << '\n'
     << "env_noise = " << real(cfg.env_options.noise) << '\n'
     << "reward_scale = " << real(cfg.env_options.reward_scale) << '\n'
     << "lambda = " << real(cfg.lambda) << '\n'
     << "vf_step_size = " << real(cfg.vf_step_size) << '\n'
     << "vf_iters = " << cfg.vf_iters << '\n'
     << "hidden = " << join(cfg.hidden) << '\n'
     << "subsample_factor = " << cfg.subsample_factor << '\n'
     << "delta_kl = " << real(cfg.trpo.delta_kl) << '\n'
     << "cg_iters = " << cfg.trpo.cg_iters << '\n'
     << "cg_damping = " << real(cfg.trpo.cg_damping) << '\n'
     << "backtrack_ratio = " << real(cfg.trpo.backtrack_ratio) << '\n'
     << "max_backtracks = " << cfg.trpo.max_backtracks << '\n'
     << "delta_ua = " << real(cfg.ua.delta_ua) << '\n'
     << "c = " << real(cfg.ua.c) << '\n'
     << "alpha = " << real(cfg.ua.alpha) << '\n'
     << "m = " << cfg.ua.m << '\n'
     << "beta = " << real(cfg.ua.beta) << '\n'
     << "use_ema = " << (cfg.ua.use_ema ? "true" : "false") << '\n';
  return os.str();
}

}  // namespace uatrpo
