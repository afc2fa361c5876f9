#pragma once

// Analytic continuous-control environments and rollout collection.
//
// Environments are stateless: the caller owns the state vector, so one
// instance can serve any number of concurrent rollouts.
//
//   lqr        4-d linear system, spectral radius 1.05 (unstable without control)
//                s' = A s + B a + w,  r = -(s'Q s + a'R a),  Q = I, R = 0.1 I
//                A = [[1.05,0.10,0,0],[0,1.00,0.10,0],[0,0,0.95,0.10],[0,0,0,0.90]]
//                B = [[0.10,0],[0.10,0],[0,0.10],[0,0.10]]
//                s0 ~ U[-1,1]^4
//   pointmass  2-d damped double integrator (stable), dt = 0.1, damping 0.5
//                v' = v + dt (a - 0.5 v),  p' = p + dt v',  r = -(|p|^2 + 0.01 |a|^2)
//                s = (px, py, vx, vy), s0 ~ U[-1,1]^4
//   pendulum   inverted pendulum around upright (unstable), dt = 0.05, g/l = 10,
//                torque clipped to [-2, 2], angle wrapped to (-pi, pi]
//                w' = w + dt (10 sin(th) + u),  th' = th + dt w'
//                r = -(th^2 + 0.1 w^2 + 0.001 u^2),  s = (th, w), s0 ~ U[-0.1,0.1]^2
//
// All three add process noise w ~ N(0, noise^2 I) and terminate when the state
// norm exceeds 1e6. Rewards are multiplied by reward_scale (1 by default).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "uatrpo/error.hpp"
#include "uatrpo/linalg.hpp"
#include "uatrpo/policy.hpp"
#include "uatrpo/rng.hpp"

namespace uatrpo {

struct EnvSpec {
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::size_t horizon = 50;
  double gamma = 0.995;
};

struct EnvOptions {
  std::size_t horizon = 50;
  double gamma = 0.995;
  double noise = 0.01;
  double reward_scale = 1.0;
};

struct StepResult {
  Vector next_state;
  double reward = 0.0;
  bool terminal = false;
};

inline constexpr double kDivergenceNorm = 1e6;

class Environment {
 public:
  explicit Environment(EnvOptions options) : options_(options) {
    require(options_.horizon >= 1, "Environment: horizon must be >= 1");
    require(options_.gamma >= 0.0 && options_.gamma < 1.0, "Environment: gamma must be in [0, 1)");
    require(options_.noise >= 0.0, "Environment: noise must be >= 0");
  }
  virtual ~Environment() = default;

  virtual std::string name() const = 0;
  virtual std::size_t state_dim() const = 0;
  virtual std::size_t action_dim() const = 0;
  virtual Vector reset(SeededRng& rng) const = 0;
  virtual StepResult step(std::span<const double> state, std::span<const double> action, SeededRng& rng) const = 0;

  EnvSpec spec() const { return {state_dim(), action_dim(), options_.horizon, options_.gamma}; }
  const EnvOptions& options() const { return options_; }

 protected:
  void check_dims(std::span<const double> state, std::span<const double> action) const {
    require(state.size() == state_dim(), name() + ": state dimension mismatch");
    require(action.size() == action_dim(), name() + ": action dimension mismatch");
  }

  StepResult finish(Vector next, double reward, SeededRng& rng) const {
    if (options_.noise > 0.0)
      for (double& x : next) x += options_.noise * rng.normal();
    StepResult out;
    out.reward = options_.reward_scale * reward;
    out.terminal = !all_finite(next) || norm(next) > kDivergenceNorm || !std::isfinite(out.reward);
    out.next_state = std::move(next);
    return out;
  }

  EnvOptions options_;
};

class LqrEnv final : public Environment {
 public:
  static constexpr std::array<std::array<double, 4>, 4> kA{{{1.05, 0.10, 0.0, 0.0},
                                                            {0.0, 1.00, 0.10, 0.0},
                                                            {0.0, 0.0, 0.95, 0.10},
                                                            {0.0, 0.0, 0.0, 0.90}}};
  static constexpr std::array<std::array<double, 2>, 4> kB{{{0.10, 0.0}, {0.10, 0.0}, {0.0, 0.10}, {0.0, 0.10}}};
  static constexpr double kStateCost = 1.0;
  static constexpr double kActionCost = 0.1;

  explicit LqrEnv(EnvOptions options = {}) : Environment(options) {}

  std::string name() const override { return "lqr"; }
  std::size_t state_dim() const override { return 4; }
  std::size_t action_dim() const override { return 2; }

  Vector reset(SeededRng& rng) const override {
    Vector s(4);
    for (double& x : s) x = rng.uniform(-1.0, 1.0);
    return s;
  }

  StepResult step(std::span<const double> s, std::span<const double> a, SeededRng& rng) const override {
    check_dims(s, a);
    Vector next(4, 0.0);
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 4; ++j) next[i] += kA[i][j] * s[j];
      for (std::size_t j = 0; j < 2; ++j) next[i] += kB[i][j] * a[j];
    }
    const double cost = kStateCost * dot(s, s) + kActionCost * dot(a, a);
    return finish(std::move(next), -cost, rng);
  }
};

class PointMassEnv final : public Environment {
 public:
  static constexpr double kDt = 0.1;
  static constexpr double kDamping = 0.5;

  explicit PointMassEnv(EnvOptions options = {}) : Environment(options) {}

  std::string name() const override { return "pointmass"; }
  std::size_t state_dim() const override { return 4; }
  std::size_t action_dim() const override { return 2; }

  Vector reset(SeededRng& rng) const override {
    Vector s(4);
    for (double& x : s) x = rng.uniform(-1.0, 1.0);
    return s;
  }

  StepResult step(std::span<const double> s, std::span<const double> a, SeededRng& rng) const override {
    check_dims(s, a);
    Vector next(4);
    for (std::size_t k = 0; k < 2; ++k) {
      const double v = s[2 + k] + kDt * (a[k] - kDamping * s[2 + k]);
      next[2 + k] = v;
      next[k] = s[k] + kDt * v;
    }
    const double cost = s[0] * s[0] + s[1] * s[1] + 0.01 * dot(a, a);
    return finish(std::move(next), -cost, rng);
  }
};

class PendulumEnv final : public Environment {
 public:
  static constexpr double kDt = 0.05;
  static constexpr double kGravityOverLength = 10.0;
  static constexpr double kMaxTorque = 2.0;

  explicit PendulumEnv(EnvOptions options = {}) : Environment(options) {}

  std::string name() const override { return "pendulum"; }
  std::size_t state_dim() const override { return 2; }
  std::size_t action_dim() const override { return 1; }

  Vector reset(SeededRng& rng) const override { return {rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)}; }

  StepResult step(std::span<const double> s, std::span<const double> a, SeededRng& rng) const override {
    check_dims(s, a);
    const double u = std::clamp(a[0], -kMaxTorque, kMaxTorque);
    const double w = s[1] + kDt * (kGravityOverLength * std::sin(s[0]) + u);
    const double th = wrap_angle(s[0] + kDt * w);
    const double cost = s[0] * s[0] + 0.1 * s[1] * s[1] + 0.001 * u * u;
    StepResult out = finish({th, w}, -cost, rng);
    out.next_state[0] = wrap_angle(out.next_state[0]);
    return out;
  }

  static double wrap_angle(double th) {
    if (!std::isfinite(th)) return th;
    constexpr double two_pi = 2.0 * std::numbers::pi;
    th = std::fmod(th + std::numbers::pi, two_pi);
    if (th <= 0.0) th += two_pi;
    return th - std::numbers::pi;
  }
};

inline std::unique_ptr<Environment> make_env(const std::string& name, EnvOptions options = {}) {
  if (name == "lqr") return std::make_unique<LqrEnv>(options);
  if (name == "pointmass") return std::make_unique<PointMassEnv>(options);
  if (name == "pendulum") return std::make_unique<PendulumEnv>(options);
  throw InvalidArgument("unknown environment '" + name + "' (expected lqr, pointmass or pendulum)");
}

/// Running mean/variance (Welford) with a parallel merge. Normalized
/// observations are clipped to +-kClip.
class ObsNormalizer {
 public:
  static constexpr double kStdFloor = 1e-8;
  static constexpr double kClip = 10.0;

  ObsNormalizer() = default;
  explicit ObsNormalizer(std::size_t dim) : mean_(dim, 0.0), m2_(dim, 0.0) {}

  std::size_t dim() const { return mean_.size(); }
  double count() const { return count_; }
  const Vector& mean() const { return mean_; }

  Vector variance() const {
    Vector var(dim(), 0.0);
    if (count_ > 0.0)
      for (std::size_t i = 0; i < dim(); ++i) var[i] = std::max(0.0, m2_[i] / count_);
    return var;
  }

  void push(std::span<const double> x) {
    require(x.size() == dim(), "ObsNormalizer::push: dimension mismatch");
    count_ += 1.0;
    for (std::size_t i = 0; i < dim(); ++i) {
      const double delta = x[i] - mean_[i];
      mean_[i] += delta / count_;
      m2_[i] += delta * (x[i] - mean_[i]);
    }
  }

  void merge(const ObsNormalizer& other) {
    require(other.dim() == dim(), "ObsNormalizer::merge: dimension mismatch");
    if (other.count_ == 0.0) return;
    if (count_ == 0.0) {
      *this = other;
      return;
    }
    const double total = count_ + other.count_;
    for (std::size_t i = 0; i < dim(); ++i) {
      const double delta = other.mean_[i] - mean_[i];
      mean_[i] += delta * other.count_ / total;
      m2_[i] += other.m2_[i] + delta * delta * count_ * other.count_ / total;
    }
    count_ = total;
  }

  // Identity (up to clipping) until at least one observation has been seen.
  Vector normalize(std::span<const double> x) const {
    require(x.size() == dim(), "ObsNormalizer::normalize: dimension mismatch");
    Vector out(x.begin(), x.end());
    if (count_ > 0.0) {
      const Vector var = variance();
      for (std::size_t i = 0; i < dim(); ++i) out[i] = (x[i] - mean_[i]) / std::max(std::sqrt(var[i]), kStdFloor);
    }
    for (double& v : out) v = std::clamp(v, -kClip, kClip);
    return out;
  }

 private:
  double count_ = 0.0;
  Vector mean_;
  Vector m2_;
};

// `state` and `next_state` are the normalized observations the policy saw.
struct Transition {
  Vector state;
  Vector action;
  double reward = 0.0;
  Vector next_state;
  bool done = false;
  double log_prob = 0.0;
};

struct Trajectory {
  std::vector<Transition> steps;
  // true when the last step ended the episode (terminal or horizon); false
  // when the batch ran out mid-episode and the tail must be bootstrapped.
  bool ended() const { return !steps.empty() && steps.back().done; }
};

struct RolloutBatch {
  std::vector<Trajectory> trajectories;
  std::size_t n_steps = 0;
  // Undiscounted returns of episodes that finished inside this batch.
  std::vector<double> episode_returns;

  template <typename Fn>
  void for_each_step(Fn&& fn) const {
    for (const auto& traj : trajectories)
      for (const auto& t : traj.steps) fn(t);
  }

  std::vector<Vector> states() const {
    std::vector<Vector> out;
    out.reserve(n_steps);
    for_each_step([&](const Transition& t) { out.push_back(t.state); });
    return out;
  }
};

inline double discounted_return(const Trajectory& traj, double gamma) {
  double g = 0.0;
  for (std::size_t t = traj.steps.size(); t-- > 0;) g = traj.steps[t].reward + gamma * g;
  return g;
}

/// Runs the policy for exactly n_steps environment steps, starting a fresh
/// episode at the beginning and after every episode end. The normalizer is
/// frozen while the batch is collected and updated with the batch's raw
/// observations once collection finishes.
inline RolloutBatch collect(const PolicyParams& params, const Environment& env, ObsNormalizer& normalizer,
                            std::size_t n_steps, SeededRng& rng) {
  require(n_steps >= 1, "collect: n_steps must be >= 1");
  require(normalizer.dim() == env.state_dim(), "collect: normalizer dimension mismatch");
  const std::size_t horizon = env.options().horizon;
  const ObsNormalizer frozen = normalizer;
  ObsNormalizer fresh(env.state_dim());

  RolloutBatch batch;
  Vector raw;
  Vector obs;
  std::size_t t_in_episode = 0;
  double episode_return = 0.0;
  while (batch.n_steps < n_steps) {
    if (t_in_episode == 0) {
      batch.trajectories.emplace_back();
      raw = env.reset(rng);
      fresh.push(raw);
      obs = frozen.normalize(raw);
      episode_return = 0.0;
    }
    ActionSample act = sample_action(params, obs, rng);
    StepResult res = env.step(raw, act.action, rng);
    ++t_in_episode;
    ++batch.n_steps;
    episode_return += res.reward;

    Transition tr;
    tr.state = obs;
    tr.action = std::move(act.action);
    tr.reward = res.reward;
    tr.log_prob = act.log_prob;
    tr.done = res.terminal || t_in_episode >= horizon;
    raw = std::move(res.next_state);
    if (all_finite(raw)) fresh.push(raw);
    obs = all_finite(raw) ? frozen.normalize(raw) : Vector(raw.size(), 0.0);
    tr.next_state = obs;
    const bool done = tr.done;
    batch.trajectories.back().steps.push_back(std::move(tr));
    if (done) {
      batch.episode_returns.push_back(episode_return);
      t_in_episode = 0;
    }
  }
  normalizer.merge(fresh);
  return batch;
}

/// Undiscounted returns of `episodes` full episodes with the stochastic policy.
inline std::vector<double> evaluate(const PolicyParams& params, const Environment& env,
                                    const ObsNormalizer& normalizer, std::size_t episodes, SeededRng& rng) {
  std::vector<double> returns;
  returns.reserve(episodes);
  for (std::size_t e = 0; e < episodes; ++e) {
    Vector raw = env.reset(rng);
    double total = 0.0;
    for (std::size_t t = 0; t < env.options().horizon; ++t) {
      const ActionSample act = sample_action(params, normalizer.normalize(raw), rng);
      StepResult res = env.step(raw, act.action, rng);
      total += res.reward;
      raw = std::move(res.next_state);
      if (res.terminal) break;
    }
    returns.push_back(total);
  }
  return returns;
}

}  // namespace uatrpo
