#pragma once

// Sample-based estimates for one iteration: advantages (GAE), the value
// baseline, the per-sample policy-gradient vectors xi_i = A_i * grad log pi,
// their average g_hat, and matrix-free products with the Fisher matrix F,
// the gradient covariance Sigma and their combination M = F + c R_n^2 Sigma.
//
// The 1/(1-gamma) factor of the policy gradient is dropped throughout; it is
// absorbed into the trade-off coefficient.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "uatrpo/envs.hpp"
#include "uatrpo/error.hpp"
#include "uatrpo/linalg.hpp"
#include "uatrpo/mlp.hpp"
#include "uatrpo/policy.hpp"
#include "uatrpo/rng.hpp"

namespace uatrpo {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// State-value baseline with its own Adam moments.
class ValueFunction {
 public:
  ValueFunction() = default;
  ValueFunction(std::size_t state_dim, std::vector<std::size_t> hidden, SeededRng& rng) {
    std::vector<std::size_t> sizes{state_dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(1);
    net_ = Mlp(sizes);
    params_ = net_.init_params(rng, 1.0);
    first_moment_.assign(params_.size(), 0.0);
    second_moment_.assign(params_.size(), 0.0);
  }
  ValueFunction(Mlp net, Vector params) : net_(std::move(net)), params_(std::move(params)) {
    require(params_.size() == net_.num_params(), "ValueFunction: parameter length mismatch");
    require(net_.output_dim() == 1, "ValueFunction: network must have a scalar output");
    first_moment_.assign(params_.size(), 0.0);
    second_moment_.assign(params_.size(), 0.0);
  }

  double predict(std::span<const double> state) const { return net_.forward(params_, state)[0]; }

  const Mlp& net() const { return net_; }
  const Vector& params() const { return params_; }
  std::size_t steps() const { return steps_; }

  /// One Adam step with bias-corrected moments, moving against `grad`.
  void adam_step(std::span<const double> grad, double step_size, const AdamConfig& cfg = {}) {
    require(grad.size() == params_.size(), "ValueFunction::adam_step: gradient length mismatch");
    ++steps_;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      first_moment_[i] = cfg.beta1 * first_moment_[i] + (1.0 - cfg.beta1) * grad[i];
      second_moment_[i] = cfg.beta2 * second_moment_[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
      const double m_hat = first_moment_[i] / c1;
      const double v_hat = second_moment_[i] / c2;
      params_[i] -= step_size * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }

 private:
  Mlp net_;
  Vector params_;
  Vector first_moment_;
  Vector second_moment_;
  std::size_t steps_ = 0;
};

/// Full-batch Adam on the mean-squared error. Returns the loss seen before
/// each step.
inline std::vector<double> fit_value(ValueFunction& vf, std::span<const Vector> states, std::span<const double> targets,
                                     double step_size, int iters) {
  require(!states.empty(), "fit_value: empty batch");
  require(states.size() == targets.size(), "fit_value: states/targets length mismatch");
  require(iters >= 0, "fit_value: iters must be >= 0");
  const Mlp& net = vf.net();
  const double inv_n = 1.0 / static_cast<double>(states.size());
  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(iters));
  Mlp::Cache cache;
  for (int it = 0; it < iters; ++it) {
    Vector grad(vf.params().size(), 0.0);
    double loss = 0.0;
    for (std::size_t i = 0; i < states.size(); ++i) {
      const double err = net.forward(vf.params(), states[i], &cache)[0] - targets[i];
      loss += err * err * inv_n;
      const double g_out = 2.0 * err * inv_n;
      net.backward(vf.params(), cache, std::span<const double>(&g_out, 1), grad);
    }
    if (!std::isfinite(loss)) throw Error("fit_value: non-finite loss");
    losses.push_back(loss);
    vf.adam_step(grad, step_size);
  }
  return losses;
}

struct AdvantageResult {
  Vector advantages;
  Vector value_targets;
};

/// Backward GAE recursion over one trajectory:
///   delta_t = r_t + gamma V(s_{t+1}) (1 - done_t) - V(s_t)
///   A_t     = delta_t + gamma lambda (1 - done_t) A_{t+1}
/// A trajectory cut by the batch boundary (last done_t false) bootstraps from
/// next_values.back().
inline AdvantageResult gae_trajectory(std::span<const double> rewards, std::span<const double> values,
                                      std::span<const double> next_values, const std::vector<bool>& dones, double gamma,
                                      double lambda) {
  require(lambda >= 0.0 && lambda <= 1.0, "gae: lambda must be in [0, 1]");
  const std::size_t n = rewards.size();
  require(values.size() == n && next_values.size() == n && dones.size() == n, "gae: length mismatch");
  AdvantageResult out{Vector(n), Vector(n)};
  double running = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const double live = dones[t] ? 0.0 : 1.0;
    const double delta = rewards[t] + gamma * next_values[t] * live - values[t];
    running = delta + gamma * lambda * live * running;
    out.advantages[t] = running;
    out.value_targets[t] = running + values[t];
  }
  return out;
}

/// GAE over a whole batch, concatenated in batch order.
inline AdvantageResult gae(const RolloutBatch& batch, const ValueFunction& vf, double gamma, double lambda) {
  AdvantageResult out;
  out.advantages.reserve(batch.n_steps);
  out.value_targets.reserve(batch.n_steps);
  for (const auto& traj : batch.trajectories) {
    const std::size_t n = traj.steps.size();
    Vector rewards(n), values(n), next_values(n);
    std::vector<bool> dones(n);
    for (std::size_t t = 0; t < n; ++t) {
      const Transition& tr = traj.steps[t];
      rewards[t] = tr.reward;
      values[t] = vf.predict(tr.state);
      next_values[t] = tr.done ? 0.0 : vf.predict(tr.next_state);
      dones[t] = tr.done;
    }
    const auto part = gae_trajectory(rewards, values, next_values, dones, gamma, lambda);
    out.advantages.insert(out.advantages.end(), part.advantages.begin(), part.advantages.end());
    out.value_targets.insert(out.value_targets.end(), part.value_targets.begin(), part.value_targets.end());
  }
  return out;
}

/// Zero mean, unit population standard deviation (floored at 1e-8, so a
/// constant input maps to zeros).
inline Vector standardize_advantages(std::span<const double> adv) {
  require(adv.size() >= 2, "standardize_advantages: need at least two values");
  const double n = static_cast<double>(adv.size());
  const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double sd = std::max(std::sqrt(var / n), 1e-8);
  Vector out(adv.size());
  for (std::size_t i = 0; i < adv.size(); ++i) out[i] = (adv[i] - mean) / sd;
  return out;
}

struct ScoreSample {
  Vector xi;         // advantage * raw_score
  Vector raw_score;  // grad log pi(a | s)
  double advantage = 0.0;
};

struct GradientEstimate {
  Vector g_hat;
  std::size_t n = 0;
  Vector per_dim_stderr;  // sample std (N-1 denominator) / sqrt(N)
};

inline GradientEstimate gradient_from_samples(std::span<const ScoreSample> samples) {
  require(!samples.empty(), "gradient_from_samples: no samples");
  const std::size_t d = samples.front().xi.size();
  const double n = static_cast<double>(samples.size());
  GradientEstimate est{Vector(d, 0.0), samples.size(), Vector(d, 0.0)};
  for (const auto& s : samples) axpy(1.0 / n, s.xi, est.g_hat);
  if (samples.size() >= 2) {
    for (const auto& s : samples)
      for (std::size_t j = 0; j < d; ++j) {
        const double e = s.xi[j] - est.g_hat[j];
        est.per_dim_stderr[j] += e * e;
      }
    for (double& v : est.per_dim_stderr) v = std::sqrt(v / (n - 1.0)) / std::sqrt(n);
  }
  return est;
}

struct PolicyGradientResult {
  GradientEstimate estimate;
  std::vector<ScoreSample> samples;
};

inline PolicyGradientResult policy_gradient(const RolloutBatch& batch, const PolicySnapshot& snapshot,
                                            std::span<const double> advantages) {
  require(advantages.size() == batch.n_steps, "policy_gradient: one advantage per batch step required");
  PolicyGradientResult out;
  out.samples.reserve(batch.n_steps);
  std::size_t i = 0;
  batch.for_each_step([&](const Transition& tr) {
    ScoreSample s;
    s.raw_score = score(snapshot.params(), tr.state, tr.action);
    s.advantage = advantages[i++];
    s.xi = scaled(s.raw_score, s.advantage);
    out.samples.push_back(std::move(s));
  });
  out.estimate = gradient_from_samples(out.samples);
  return out;
}

/// ceil(N / factor) samples drawn uniformly without replacement, returned in
/// their original order.
inline std::vector<ScoreSample> subsample(std::span<const ScoreSample> samples, std::size_t factor, SeededRng& rng) {
  require(factor >= 1, "subsample: factor must be >= 1");
  const std::size_t n = samples.size();
  if (factor == 1) return {samples.begin(), samples.end()};
  const std::size_t count = (n + factor - 1) / factor;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < count; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  std::vector<ScoreSample> out;
  out.reserve(count);
  for (std::size_t i : idx) out.push_back(samples[i]);
  return out;
}

struct OperatorProducts {
  Vector fv;
  Vector sigv;
  Vector mv;
};

/// Matrix-free F_hat, Sigma_hat and M_hat = F_hat + coefficient * Sigma_hat
/// built from a (sub)sample of score vectors:
///   F_hat v     = 1/N_s       sum_i s_i (s_i' v)
///   Sigma_hat v = 1/(N_s - 1) sum_i (xi_i - xi_bar)((xi_i - xi_bar)' v)
/// with xi_bar the mean over the same samples.
class TrustRegionOperator {
 public:
  TrustRegionOperator(std::span<const ScoreSample> samples, double coefficient) : coefficient_(coefficient) {
    require(!samples.empty(), "TrustRegionOperator: no samples");
    require(coefficient >= 0.0, "TrustRegionOperator: coefficient must be >= 0");
    const std::size_t d = samples.front().raw_score.size();
    const std::size_t n = samples.size();
    scores_ = DenseMatrix(n, d);
    centered_ = DenseMatrix(n, d);
    Vector mean(d, 0.0);
    for (const auto& s : samples) axpy(1.0 / static_cast<double>(n), s.xi, mean);
    for (std::size_t i = 0; i < n; ++i) {
      require(samples[i].raw_score.size() == d && samples[i].xi.size() == d,
              "TrustRegionOperator: inconsistent sample dimensions");
      for (std::size_t j = 0; j < d; ++j) {
        scores_(i, j) = samples[i].raw_score[j];
        centered_(i, j) = samples[i].xi[j] - mean[j];
      }
    }
  }

  std::size_t dim() const { return scores_.cols(); }
  std::size_t num_samples() const { return scores_.rows(); }
  double coefficient() const { return coefficient_; }
  void set_coefficient(double c) {
    require(c >= 0.0, "TrustRegionOperator: coefficient must be >= 0");
    coefficient_ = c;
  }

  Vector fisher(std::span<const double> v) const {
    return scaled(transpose_times(scores_, scores_ * v), 1.0 / static_cast<double>(num_samples()));
  }

  Vector covariance(std::span<const double> v) const {
    if (num_samples() < 2) throw InvalidArgument("TrustRegionOperator: covariance needs at least two samples");
    return scaled(transpose_times(centered_, centered_ * v), 1.0 / static_cast<double>(num_samples() - 1));
  }

  Vector combined(std::span<const double> v) const {
    Vector out = fisher(v);
    if (coefficient_ != 0.0) axpy(coefficient_, covariance(v), out);
    return out;
  }

  OperatorProducts products(std::span<const double> v) const {
    OperatorProducts p;
    p.fv = fisher(v);
    p.sigv = covariance(v);
    p.mv = p.fv;
    axpy(coefficient_, p.sigv, p.mv);
    return p;
  }

 private:
  DenseMatrix scores_;
  DenseMatrix centered_;
  double coefficient_ = 0.0;
};

}  // namespace uatrpo
