#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "uatrpo/envs.hpp"

using namespace uatrpo;
using namespace testutil;

namespace {

EnvOptions noiseless(std::size_t horizon = 50) {
  EnvOptions o;
  o.noise = 0.0;
  o.horizon = horizon;
  return o;
}

// Zero mean network with a vanishing spread: acts as the deterministic zero policy.
PolicyParams still_policy(std::size_t state_dim, std::size_t action_dim) {
  PolicyParams p({state_dim, action_dim, {4}});
  for (double& ls : p.log_std()) ls = kLogStdMin;
  return p;
}

}  // namespace

TEST(Lqr, OriginIsAFixedPoint) {
  const LqrEnv env(noiseless());
  SeededRng rng(1, Stream::Test);
  const StepResult r = env.step(Vector(4, 0.0), Vector(2, 0.0), rng);
  EXPECT_EQ(r.next_state, Vector(4, 0.0));
  EXPECT_EQ(r.reward, 0.0);
  EXPECT_FALSE(r.terminal);
}

TEST(Lqr, QuadraticStateCost) {
  const LqrEnv env(noiseless());
  SeededRng rng(1, Stream::Test);
  EXPECT_DOUBLE_EQ(env.step(Vector{1, 0, 0, 0}, Vector{0, 0}, rng).reward, -1.0);
  EXPECT_DOUBLE_EQ(env.step(Vector{0, 0, 0, 0}, Vector{1, 2}, rng).reward, -0.5);
}

TEST(Lqr, ZeroActionFollowsMatrixPowers) {
  const LqrEnv env(noiseless());
  SeededRng rng(2, Stream::Test);
  Eigen::Matrix4d a;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) a(i, j) = LqrEnv::kA[i][j];
  const Vector s0 = env.reset(rng);
  Vector s = s0;
  Eigen::Matrix4d power = Eigen::Matrix4d::Identity();
  for (int t = 1; t <= 30; ++t) {
    s = env.step(s, Vector(2, 0.0), rng).next_state;
    power = a * power;
    const Eigen::Vector4d expected = power * to_eigen(s0);
    EXPECT_LE((to_eigen(s) - expected).norm(), 1e-12 * std::max(1.0, expected.norm())) << "t = " << t;
  }
}

TEST(PointMass, OriginIsAFixedPoint) {
  const PointMassEnv env(noiseless());
  SeededRng rng(1, Stream::Test);
  const StepResult r = env.step(Vector(4, 0.0), Vector(2, 0.0), rng);
  EXPECT_EQ(r.next_state, Vector(4, 0.0));
  EXPECT_EQ(r.reward, 0.0);
}

TEST(PointMass, OneStepByHand) {
  const PointMassEnv env(noiseless());
  SeededRng rng(1, Stream::Test);
  // v' = 0 + 0.1 (1 - 0.5 * 0) = 0.1, x' = 1 + 0.1 * 0.1; cost = 1 + 0.01 * 1
  const StepResult r = env.step(Vector{1, 0, 0, 0}, Vector{1, 0}, rng);
  EXPECT_NEAR(r.next_state[0], 1.01, 1e-15);
  EXPECT_NEAR(r.next_state[2], 0.1, 1e-15);
  EXPECT_EQ(r.next_state[1], 0.0);
  EXPECT_EQ(r.next_state[3], 0.0);
  EXPECT_NEAR(r.reward, -1.01, 1e-15);
}

TEST(Pendulum, UprightIsAFixedPoint) {
  const PendulumEnv env(noiseless());
  SeededRng rng(1, Stream::Test);
  const StepResult r = env.step(Vector{0, 0}, Vector{0}, rng);
  EXPECT_EQ(r.next_state, (Vector{0, 0}));
  EXPECT_EQ(r.reward, 0.0);
}

TEST(Pendulum, OneStepByHand) {
  const PendulumEnv env(noiseless());
  SeededRng rng(1, Stream::Test);
  // w' = 0.05 (10 sin 0.1 + 1) = 0.0999167083; th' = 0.1 + 0.05 w'; cost = 0.01 + 0.001
  const StepResult r = env.step(Vector{0.1, 0.0}, Vector{1.0}, rng);
  EXPECT_NEAR(r.next_state[1], 0.0999167083, 1e-10);
  EXPECT_NEAR(r.next_state[0], 0.1049958354, 1e-10);
  EXPECT_NEAR(r.reward, -0.011, 1e-15);
}

TEST(Pendulum, TorqueIsClippedAndAngleWrapped) {
  const PendulumEnv env(noiseless());
  SeededRng rng(1, Stream::Test);
  const StepResult big = env.step(Vector{0, 0}, Vector{100.0}, rng);
  const StepResult cap = env.step(Vector{0, 0}, Vector{2.0}, rng);
  EXPECT_EQ(big.next_state, cap.next_state);
  const StepResult r = env.step(Vector{3.1, 10.0}, Vector{0}, rng);
  EXPECT_GT(r.next_state[0], -std::numbers::pi);
  EXPECT_LE(r.next_state[0], std::numbers::pi);
}

TEST(Envs, StepsAreDeterministicUnderSeed) {
  for (const char* name : {"lqr", "pointmass", "pendulum"}) {
    const auto env = make_env(name);
    SeededRng a(3, Stream::Rollout), b(3, Stream::Rollout);
    Vector sa = env->reset(a), sb = env->reset(b);
    const Vector act(env->action_dim(), 0.3);
    for (int t = 0; t < 10; ++t) {
      const StepResult ra = env->step(sa, act, a), rb = env->step(sb, act, b);
      EXPECT_EQ(ra.next_state, rb.next_state) << name;
      EXPECT_EQ(ra.reward, rb.reward) << name;
      sa = ra.next_state;
      sb = rb.next_state;
    }
  }
}

TEST(Envs, UnknownNameAndBadOptionsRejected) {
  EXPECT_THROW(make_env("cartpole"), InvalidArgument);
  EnvOptions o;
  o.gamma = 1.0;
  EXPECT_THROW(LqrEnv{o}, InvalidArgument);
  o = {};
  o.horizon = 0;
  EXPECT_THROW(LqrEnv{o}, InvalidArgument);
}

TEST(Envs, RewardScaleMultipliesRewards) {
  EnvOptions o = noiseless();
  o.reward_scale = 0.0;
  const LqrEnv env(o);
  SeededRng rng(1, Stream::Test);
  EXPECT_EQ(env.step(Vector{1, 1, 1, 1}, Vector{1, 1}, rng).reward, 0.0);
}

TEST(Normalizer, MatchesOfflineMoments) {
  SeededRng rng(4, Stream::Test);
  ObsNormalizer norm3(3);
  std::vector<Vector> xs;
  for (int i = 0; i < 500; ++i) {
    Vector x{rng.normal() * 3 + 1, rng.uniform(-5, 5), 100.0 + rng.normal()};
    norm3.push(x);
    xs.push_back(x);
  }
  for (std::size_t j = 0; j < 3; ++j) {
    double mean = 0.0, var = 0.0;
    for (const auto& x : xs) mean += x[j] / xs.size();
    for (const auto& x : xs) var += (x[j] - mean) * (x[j] - mean) / xs.size();
    EXPECT_NEAR(norm3.mean()[j], mean, 1e-10 * std::max(1.0, std::abs(mean)));
    EXPECT_NEAR(norm3.variance()[j], var, 1e-10 * std::max(1.0, var));
    EXPECT_GE(norm3.variance()[j], 0.0);
  }
}

TEST(Normalizer, MergeEqualsSequentialPush) {
  SeededRng rng(5, Stream::Test);
  ObsNormalizer all(2), left(2), right(2);
  for (int i = 0; i < 300; ++i) {
    const Vector x = gaussian_vector(rng, 2);
    all.push(x);
    (i < 120 ? left : right).push(x);
  }
  left.merge(right);
  EXPECT_EQ(left.count(), all.count());
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_NEAR(left.mean()[j], all.mean()[j], 1e-12);
    EXPECT_NEAR(left.variance()[j], all.variance()[j], 1e-12);
  }
}

TEST(Normalizer, IdentityBeforeDataAndFloorForConstants) {
  ObsNormalizer n(2);
  EXPECT_EQ(n.normalize(Vector{0.5, -3.0}), (Vector{0.5, -3.0}));
  EXPECT_EQ(n.normalize(Vector{50.0, -50.0}), (Vector{ObsNormalizer::kClip, -ObsNormalizer::kClip}));
  n.push(Vector{2.0, 2.0});
  n.push(Vector{2.0, 2.0});
  EXPECT_EQ(n.normalize(Vector{2.0, 2.0}), (Vector{0.0, 0.0}));
}

TEST(Collect, HorizonSizedBatchIsOneEpisode) {
  const LqrEnv env(noiseless(50));
  ObsNormalizer n(4);
  SeededRng rng(6, Stream::Rollout);
  const RolloutBatch b = collect(still_policy(4, 2), env, n, 50, rng);
  EXPECT_EQ(b.n_steps, 50u);
  ASSERT_EQ(b.trajectories.size(), 1u);
  EXPECT_TRUE(b.trajectories[0].ended());
  EXPECT_EQ(b.episode_returns.size(), 1u);
}

TEST(Collect, CountsAndHorizon) {
  const PointMassEnv env(noiseless(30));
  ObsNormalizer n(4);
  SeededRng rng(7, Stream::Rollout);
  const RolloutBatch b = collect(still_policy(4, 2), env, n, 100, rng);
  EXPECT_EQ(b.n_steps, 100u);
  ASSERT_EQ(b.trajectories.size(), 4u);
  std::size_t total = 0;
  for (const auto& t : b.trajectories) {
    EXPECT_LE(t.steps.size(), 30u);
    total += t.steps.size();
  }
  EXPECT_EQ(total, b.n_steps);
  EXPECT_FALSE(b.trajectories.back().ended());
  EXPECT_EQ(b.episode_returns.size(), 3u);
  EXPECT_EQ(n.count(), 100.0 + 4.0);  // one reset per trajectory plus every successor
}

TEST(Collect, DeterministicUnderSeed) {
  const auto env = make_env("pendulum");
  SeededRng init(1, Stream::PolicyInit);
  const PolicyParams p = init_policy({2, 1, {8, 8}}, init);
  ObsNormalizer na(2), nb(2);
  SeededRng a(8, Stream::Rollout), b(8, Stream::Rollout);
  const RolloutBatch ba = collect(p, *env, na, 120, a), bb = collect(p, *env, nb, 120, b);
  ASSERT_EQ(ba.trajectories.size(), bb.trajectories.size());
  for (std::size_t i = 0; i < ba.trajectories.size(); ++i)
    for (std::size_t t = 0; t < ba.trajectories[i].steps.size(); ++t) {
      const auto &x = ba.trajectories[i].steps[t], &y = bb.trajectories[i].steps[t];
      EXPECT_EQ(x.state, y.state);
      EXPECT_EQ(x.action, y.action);
      EXPECT_EQ(x.reward, y.reward);
      EXPECT_EQ(x.log_prob, y.log_prob);
    }
  EXPECT_EQ(na.mean(), nb.mean());
}

TEST(Collect, RewardsMatchIndependentSimulation) {
  const LqrEnv env(noiseless(25));
  ObsNormalizer n(4);
  SeededRng rng(9, Stream::Rollout);
  const RolloutBatch b = collect(still_policy(4, 2), env, n, 25, rng);
  ASSERT_EQ(b.trajectories.size(), 1u);

  // Replay the reset draw; then iterate s <- A s with zero action by hand.
  SeededRng replay(9, Stream::Rollout);
  Vector s = env.reset(replay);
  for (std::size_t t = 0; t < 25; ++t) {
    EXPECT_NEAR(b.trajectories[0].steps[t].reward, -dot(s, s), 1e-9 * std::max(1.0, dot(s, s)));
    Vector next(4, 0.0);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) next[i] += LqrEnv::kA[i][j] * s[j];
    s = next;
  }
}

TEST(Collect, DiscountedReturnMatchesForwardSum) {
  const auto env = make_env("lqr");
  SeededRng init(2, Stream::PolicyInit);
  const PolicyParams p = init_policy({4, 2, {8}}, init);
  ObsNormalizer n(4);
  SeededRng rng(10, Stream::Rollout);
  const RolloutBatch b = collect(p, *env, n, 140, rng);
  for (const auto& traj : b.trajectories) {
    double expected = 0.0, discount = 1.0;
    for (const auto& tr : traj.steps) {
      expected += discount * tr.reward;
      discount *= 0.9;
    }
    EXPECT_NEAR(discounted_return(traj, 0.9), expected, 1e-10 * std::max(1.0, std::abs(expected)));
  }
}

TEST(Collect, RejectsBadArguments) {
  const auto env = make_env("lqr");
  ObsNormalizer good(4), bad(3);
  SeededRng rng(1, Stream::Rollout);
  EXPECT_THROW(collect(still_policy(4, 2), *env, good, 0, rng), InvalidArgument);
  EXPECT_THROW(collect(still_policy(4, 2), *env, bad, 10, rng), InvalidArgument);
}

TEST(Evaluate, EpisodeCountAndDeterminism) {
  const auto env = make_env("pointmass");
  const ObsNormalizer n(4);
  SeededRng a(11, Stream::Evaluation), b(11, Stream::Evaluation);
  const auto ra = evaluate(still_policy(4, 2), *env, n, 5, a), rb = evaluate(still_policy(4, 2), *env, n, 5, b);
  EXPECT_EQ(ra.size(), 5u);
  EXPECT_EQ(ra, rb);
  for (double r : ra) EXPECT_LE(r, 0.0);
}
