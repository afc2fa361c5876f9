#pragma once

// Diagonal-Gaussian policy: an MLP maps the (normalized) observation to the
// action mean; a state-independent log standard deviation sets the spread.
//
// Flat parameter layout, which fixes the coordinate system of every gradient
// and trust region in the library:
//   [ mean net layer 0: W (out x in, row-major), b ] ... [ last layer W, b ] [ log_std ]

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <istream>
#include <numbers>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "uatrpo/error.hpp"
#include "uatrpo/linalg.hpp"
#include "uatrpo/mlp.hpp"
#include "uatrpo/rng.hpp"

namespace uatrpo {

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;

struct PolicyArch {
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::vector<std::size_t> hidden{8, 8};

  std::vector<std::size_t> layer_sizes() const {
    std::vector<std::size_t> sizes{state_dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(action_dim);
    return sizes;
  }
  bool operator==(const PolicyArch&) const = default;
};

class PolicyParams {
 public:
  PolicyParams() = default;
  explicit PolicyParams(PolicyArch arch) : arch_(std::move(arch)), net_(arch_.layer_sizes()) {
    flat_.assign(net_.num_params() + arch_.action_dim, 0.0);
  }

  static PolicyParams unflatten(const PolicyArch& arch, std::span<const double> flat) {
    PolicyParams p(arch);
    require(flat.size() == p.dim(), "PolicyParams::unflatten: length does not match architecture");
    std::copy(flat.begin(), flat.end(), p.flat_.begin());
    return p;
  }

  const Vector& flatten() const { return flat_; }
  std::size_t dim() const { return flat_.size(); }
  const PolicyArch& arch() const { return arch_; }
  const Mlp& mean_net() const { return net_; }

  std::span<const double> mean_params() const { return {flat_.data(), net_.num_params()}; }
  std::span<double> mean_params() { return {flat_.data(), net_.num_params()}; }
  std::span<const double> log_std() const { return {flat_.data() + net_.num_params(), arch_.action_dim}; }
  std::span<double> log_std() { return {flat_.data() + net_.num_params(), arch_.action_dim}; }

  // theta += step, then keep log_std inside [kLogStdMin, kLogStdMax].
  void apply_step(std::span<const double> step) {
    axpy(1.0, step, flat_);
    for (double& ls : log_std()) ls = std::clamp(ls, kLogStdMin, kLogStdMax);
  }

 private:
  PolicyArch arch_;
  Mlp net_;
  Vector flat_;
};

/// Frozen copy of the parameters an iteration started from.
class PolicySnapshot {
 public:
  explicit PolicySnapshot(PolicyParams params) : params_(std::move(params)) {}
  const PolicyParams& params() const { return params_; }

 private:
  PolicyParams params_;
};

inline PolicyParams init_policy(const PolicyArch& arch, SeededRng& rng) {
  PolicyParams p(arch);
  const Vector net = p.mean_net().init_params(rng, 0.01);
  std::copy(net.begin(), net.end(), p.mean_params().begin());
  return p;
}

inline Vector policy_mean(const PolicyParams& params, std::span<const double> state) {
  return params.mean_net().forward(params.mean_params(), state);
}

inline double gaussian_log_prob(std::span<const double> mean, std::span<const double> log_std,
                                std::span<const double> action) {
  constexpr double half_log_2pi = 0.91893853320467274178;
  double lp = 0.0;
  for (std::size_t j = 0; j < mean.size(); ++j) {
    const double z = (action[j] - mean[j]) * std::exp(-log_std[j]);
    lp += -0.5 * z * z - log_std[j] - half_log_2pi;
  }
  return lp;
}

inline double log_prob(const PolicyParams& params, std::span<const double> state, std::span<const double> action) {
  require(action.size() == params.arch().action_dim, "log_prob: action dimension mismatch");
  const Vector mu = policy_mean(params, state);
  return gaussian_log_prob(mu, params.log_std(), action);
}

struct ActionSample {
  Vector action;
  double log_prob = 0.0;
};

inline ActionSample sample_action(const PolicyParams& params, std::span<const double> state, SeededRng& rng) {
  require(state.size() == params.arch().state_dim, "sample_action: state dimension mismatch");
  const Vector mu = policy_mean(params, state);
  if (!all_finite(mu) || !all_finite(params.log_std()))
    throw DivergedPolicy("policy produced a non-finite action mean");
  ActionSample out;
  out.action.resize(mu.size());
  for (std::size_t j = 0; j < mu.size(); ++j) out.action[j] = mu[j] + std::exp(params.log_std()[j]) * rng.normal();
  out.log_prob = gaussian_log_prob(mu, params.log_std(), out.action);
  return out;
}

/// Gradient of log pi(action | state) with respect to the flat parameters.
inline Vector score(const PolicyParams& params, std::span<const double> state, std::span<const double> action) {
  require(state.size() == params.arch().state_dim, "score: state dimension mismatch");
  require(action.size() == params.arch().action_dim, "score: action dimension mismatch");
  const Mlp& net = params.mean_net();
  Mlp::Cache cache;
  const Vector mu = net.forward(params.mean_params(), state, &cache);
  const auto log_std = params.log_std();

  Vector grad(params.dim(), 0.0);
  Vector dmu(mu.size());
  for (std::size_t j = 0; j < mu.size(); ++j) {
    const double inv_var = std::exp(-2.0 * log_std[j]);
    const double diff = action[j] - mu[j];
    dmu[j] = diff * inv_var;
    grad[net.num_params() + j] = diff * diff * inv_var - 1.0;
  }
  net.backward(params.mean_params(), cache, dmu, std::span<double>(grad.data(), net.num_params()));
  return grad;
}

/// Mean over states of KL(old(.|s) || new(.|s)) for diagonal Gaussians.
inline double kl_between(const PolicySnapshot& old, const PolicyParams& next, std::span<const Vector> states) {
  require(!states.empty(), "kl_between: empty state list");
  require(old.params().arch() == next.arch(), "kl_between: architecture mismatch");
  const auto ls_old = old.params().log_std();
  const auto ls_new = next.log_std();
  double total = 0.0;
  for (const Vector& s : states) {
    const Vector mu_old = policy_mean(old.params(), s);
    const Vector mu_new = policy_mean(next, s);
    for (std::size_t j = 0; j < mu_old.size(); ++j) {
      const double var_old = std::exp(2.0 * ls_old[j]);
      const double var_new = std::exp(2.0 * ls_new[j]);
      const double dm = mu_old[j] - mu_new[j];
      total += (ls_new[j] - ls_old[j]) + (var_old + dm * dm) / (2.0 * var_new) - 0.5;
    }
  }
  return total / static_cast<double>(states.size());
}

// Checkpoint layout (plain text, one item per line):
//   uatrpo-policy 1
//   <state_dim> <action_dim> <num_hidden> <h_1> ... <h_k>
//   <d>
//   d lines, one parameter each, printed with 17 significant digits
inline void write_checkpoint(std::ostream& os, const PolicyParams& params) {
  const auto& a = params.arch();
  os << "uatrpo-policy 1\n" << a.state_dim << ' ' << a.action_dim << ' ' << a.hidden.size();
  for (std::size_t h : a.hidden) os << ' ' << h;
  os << '\n' << params.dim() << '\n';
  char buf[40];
  for (double v : params.flatten()) {
    std::snprintf(buf, sizeof buf, "%.17g\n", v);
    os << buf;
  }
}

inline PolicyParams read_checkpoint(std::istream& is) {
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != "uatrpo-policy" || version != 1)
    throw Error("read_checkpoint: not a policy checkpoint");
  PolicyArch arch;
  std::size_t n_hidden = 0;
  if (!(is >> arch.state_dim >> arch.action_dim >> n_hidden)) throw Error("read_checkpoint: bad header");
  arch.hidden.resize(n_hidden);
  for (auto& h : arch.hidden)
    if (!(is >> h)) throw Error("read_checkpoint: bad hidden sizes");
  std::size_t d = 0;
  if (!(is >> d)) throw Error("read_checkpoint: missing dimension");
  Vector flat(d);
  for (double& v : flat)
    if (!(is >> v)) throw Error("read_checkpoint: truncated parameter array");
  return PolicyParams::unflatten(arch, flat);
}

}  // namespace uatrpo
