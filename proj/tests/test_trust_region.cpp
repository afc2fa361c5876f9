#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "test_util.hpp"
#include "uatrpo/trust_region.hpp"

using namespace uatrpo;
using namespace testutil;

namespace {

auto dense_op(const DenseMatrix& m) {
  return [&m](std::span<const double> x) { return m * x; };
}

// 2d samples +-a e_j with a = sqrt((N-1)/2): zero mean, covariance exactly I.
std::vector<ScoreSample> identity_covariance_samples(std::size_t d) {
  const double a = std::sqrt((2.0 * d - 1.0) / 2.0);
  std::vector<ScoreSample> out;
  for (std::size_t j = 0; j < d; ++j)
    for (double sign : {1.0, -1.0}) {
      ScoreSample s;
      s.raw_score.assign(d, 0.0);
      s.raw_score[j] = sign * a;
      s.advantage = 1.0;
      s.xi = s.raw_score;
      out.push_back(s);
    }
  return out;
}

Eigen::MatrixXd dense_covariance(const TrustRegionOperator& op) {
  const std::size_t d = op.dim();
  Eigen::MatrixXd out(d, d);
  for (std::size_t j = 0; j < d; ++j) {
    Vector e(d, 0.0);
    e[j] = 1.0;
    out.col(j) = to_eigen(op.covariance(e));
  }
  return out;
}

}  // namespace

TEST(Radius, Values) {
  EXPECT_NEAR(radius_sq({0.05, 100, 5}), 0.18732, 1e-4);
  EXPECT_NEAR(radius_sq({0.05, 1000, 4800}), 5.0458, 1e-3);
  for (std::size_t d : {1u, 10u, 100u, 1000u}) EXPECT_LE(radius_sq({0.05, 1000000000, d}), 1e-5);
  EXPECT_THROW(radius_sq({0.0, 10, 2}), InvalidArgument);
  EXPECT_THROW(radius_sq({1.0, 10, 2}), InvalidArgument);
  EXPECT_THROW(radius_sq({0.05, 0, 2}), InvalidArgument);
}

TEST(Radius, Monotone) {
  for (double alpha : {0.01, 0.05, 0.2, 0.5})
    for (std::size_t n : {1u, 10u, 100u})
      for (std::size_t d : {1u, 5u, 50u}) {
        const double r = radius_sq({alpha, n, d});
        EXPECT_LT(radius_sq({alpha, n + 1, d}), r);
        EXPECT_GT(radius_sq({alpha, n, d + 1}), r);
        EXPECT_GT(radius_sq({alpha * 0.9, n, d}), r);
      }
}

TEST(Penalty, ZeroDirection) {
  SeededRng rng(1, Stream::Test);
  const TrustRegionOperator op(identity_covariance_samples(3), 0.0);
  EXPECT_EQ(robust_lower_bound_penalty(Vector(3, 0.0), op, 1.7), 0.0);
}

TEST(Penalty, UnitCase) {
  const TrustRegionOperator op(identity_covariance_samples(4), 0.0);
  const Eigen::MatrixXd sig = dense_covariance(op);
  EXPECT_LE((sig - Eigen::MatrixXd::Identity(4, 4)).norm(), 1e-14);
  EXPECT_NEAR(robust_lower_bound_penalty(Vector{1, 0, 0, 0}, op, 1.0), 1.0, 1e-14);
}

TEST(Penalty, ClosedFormMatchesEllipsoidWorstCase) {
  SeededRng rng(2, Stream::Test);
  for (int trial = 0; trial < 6; ++trial) {
    const std::size_t d = 2 + trial % 3, n = 4 * d;
    std::vector<ScoreSample> samples(n);
    for (auto& s : samples) {
      s.raw_score = gaussian_vector(rng, d);
      s.advantage = rng.normal();
      s.xi = scaled(s.raw_score, s.advantage);
    }
    const TrustRegionOperator op(samples, 0.0);
    const Vector g = gaussian_vector(rng, d), delta = gaussian_vector(rng, d);
    const double sigma_rn = rng.uniform(0.2, 2.0);
    const double closed = robust_linear_bound(g, delta, op, sigma_rn);

    // Lagrangian minimizer lies on the boundary and attains the closed form.
    const Vector u = worst_case_gradient(g, delta, op, sigma_rn);
    const Eigen::MatrixXd sig = dense_covariance(op);
    const Eigen::VectorXd du = to_eigen(u) - to_eigen(g);
    EXPECT_NEAR(du.dot(sig.ldlt().solve(du)), sigma_rn * sigma_rn, 1e-8);
    EXPECT_NEAR(dot(u, delta), closed, 1e-10 * std::max(1.0, std::abs(closed)));

    // Search over boundary points g + sigma_rn Sigma^{1/2} z, |z| = 1: 5e4
    // uniform draws, then 5e4 shrinking perturbations of the best one.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sig);
    const Eigen::MatrixXd root = es.operatorSqrt();
    const auto value = [&](const Eigen::VectorXd& z) {
      return (to_eigen(g) + sigma_rn * root * z).dot(to_eigen(delta));
    };
    Eigen::VectorXd best_z = Eigen::VectorXd::Unit(d, 0);
    double best = value(best_z);
    for (int p = 0; p < 50000; ++p) {
      const Eigen::VectorXd z = to_eigen(gaussian_vector(rng, d)).normalized();
      if (const double val = value(z); val < best) best = val, best_z = z;
    }
    double radius = 0.1;
    for (int p = 0; p < 50000; ++p) {
      const Eigen::VectorXd z = (best_z + radius * to_eigen(gaussian_vector(rng, d))).normalized();
      if (const double val = value(z); val < best) best = val, best_z = z;
      if (p % 500 == 499) radius *= 0.7;
    }
    const double penalty = dot(g, delta) - closed;
    EXPECT_GE(best, closed - 1e-12);
    EXPECT_LE(std::abs((dot(g, delta) - best) - penalty), 1e-3 * penalty);
  }
}

TEST(ProjectionCount, ScalesWithDimension) {
  EXPECT_EQ(projection_count(132), 33u);
  EXPECT_EQ(projection_count(4800), 200u);
  EXPECT_EQ(projection_count(3), 1u);
  EXPECT_EQ(projection_count(100, 10), 10u);
  EXPECT_THROW(projection_count(10, 0), InvalidArgument);
}

TEST(Sketch, ZeroIdentityAndDense) {
  SeededRng rng(3, Stream::Test);
  const DenseMatrix omega = gaussian_matrix(rng, 12, 5);
  const DenseMatrix zero(12, 12), eye = DenseMatrix::identity(12);
  EXPECT_EQ(sketch(dense_op(zero), omega).data(), DenseMatrix(12, 5).data());
  EXPECT_EQ(sketch(dense_op(eye), omega).data(), omega.data());
  const DenseMatrix m = from_eigen(random_psd(rng, 12, 12));
  const Eigen::MatrixXd y = to_eigen(sketch(dense_op(m), omega));
  EXPECT_LE((y - to_eigen(m) * to_eigen(omega)).norm(), 1e-10 * y.norm());
}

TEST(UpdateDirection, DiagonalPseudoinverse) {
  const DenseMatrix m = DenseMatrix::diagonal(Vector{2, 0});
  const DenseMatrix omega = DenseMatrix::from_rows({{1.0}, {0.5}});
  const Vector v = update_direction(sketch(dense_op(m), omega), dense_op(m), Vector{4, 3});
  EXPECT_NEAR(v[0], 2.0, 1e-12);
  EXPECT_NEAR(v[1], 0.0, 1e-12);
}

TEST(UpdateDirection, IdentityReturnsGradient) {
  SeededRng rng(4, Stream::Test);
  const DenseMatrix eye = DenseMatrix::identity(10);
  const Vector g = gaussian_vector(rng, 10);
  const DenseMatrix omega = gaussian_matrix(rng, 10, 12);
  const Vector v = update_direction(sketch(dense_op(eye), omega), dense_op(eye), g);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(v[i], g[i], 1e-8);
  const Vector w = update_direction_from_sketch(sketch(dense_op(eye), omega), omega, g);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(w[i], g[i], 1e-8);
}

TEST(UpdateDirection, RankFiveMatchesDensePseudoinverse) {
  SeededRng rng(5, Stream::Test);
  const Eigen::MatrixXd me = random_psd(rng, 40, 5);
  const DenseMatrix m = from_eigen(me);
  const Vector g = gaussian_vector(rng, 40);
  const Eigen::VectorXd ref = pinv_solve(me, to_eigen(g));
  for (std::size_t cols : {20u, 40u, 45u}) {
    const DenseMatrix omega = gaussian_matrix(rng, 40, cols);
    const DenseMatrix y = sketch(dense_op(m), omega);
    const SubspaceModel model = subspace_from_operator(y, dense_op(m));
    EXPECT_EQ(model.ell(), 5u);
    EXPECT_LE(rel_err(to_eigen(solve_direction(model, g)), ref), 1e-6) << "m = " << cols;
    EXPECT_LE(rel_err(to_eigen(update_direction_from_sketch(y, omega, g)), ref), 1e-6) << "m = " << cols;
  }
}

TEST(UpdateDirection, RangeRestriction) {
  SeededRng rng(6, Stream::Test);
  for (int t = 0; t < 10; ++t) {
    const DenseMatrix m = from_eigen(random_psd(rng, 30, 30));
    const DenseMatrix omega = gaussian_matrix(rng, 30, 8);
    const SubspaceModel model = subspace_from_operator(sketch(dense_op(m), omega), dense_op(m));
    const Vector v = solve_direction(model, gaussian_vector(rng, 30));
    const Vector back = model.q * transpose_times(model.q, v);
    EXPECT_LE(norm(subtract(v, back)), 1e-9 * norm(v));
    const Eigen::MatrixXd qtq = to_eigen(transpose_times(model.q, model.q));
    EXPECT_LE((qtq - Eigen::MatrixXd::Identity(8, 8)).norm(), 1e-12);
    for (double lam : model.eigvals) EXPECT_GE(lam, model.eig_floor);
  }
}

TEST(UpdateDirection, FullSamplingSolvesTheSystem) {
  SeededRng rng(7, Stream::Test);
  for (int t = 0; t < 10; ++t) {
    const std::size_t d = 15;
    const DenseMatrix m = from_eigen(random_psd(rng, d, d) + Eigen::MatrixXd::Identity(d, d));
    const Vector g = gaussian_vector(rng, d);
    const DenseMatrix omega = gaussian_matrix(rng, d, d);
    const Vector v = update_direction(sketch(dense_op(m), omega), dense_op(m), g);
    EXPECT_LE(norm(subtract(m * v, g)), 1e-6 * norm(g));
  }
}

TEST(UpdateDirection, NoSubspace) {
  SeededRng rng(8, Stream::Test);
  const DenseMatrix omega = gaussian_matrix(rng, 6, 3);
  const DenseMatrix zero(6, 6);
  EXPECT_THROW(update_direction(sketch(dense_op(zero), omega), dense_op(zero), Vector(6, 1.0)), NoSubspace);
  DenseMatrix tiny = DenseMatrix::identity(6);
  for (double& x : tiny.data()) x *= 1e-12;
  EXPECT_THROW(update_direction(sketch(dense_op(tiny), omega), dense_op(tiny), Vector(6, 1.0)), NoSubspace);
}

TEST(Ema, FirstStepBiasCorrection) {
  SeededRng rng(9, Stream::Test);
  EmaSketch ema(5, 3, 0.9);
  EXPECT_EQ(ema.k(), 0u);
  EXPECT_EQ(ema.y_fisher().data(), DenseMatrix(5, 3).data());
  const DenseMatrix y0 = gaussian_matrix(rng, 5, 3), s0 = gaussian_matrix(rng, 5, 3);
  const DenseMatrix out = ema.update(y0, s0, 0.0);
  EXPECT_EQ(ema.k(), 1u);
  EXPECT_EQ(out.data(), y0.data());
  const DenseMatrix with_sigma = EmaSketch(5, 3, 0.9).update(y0, s0, 0.25);
  for (std::size_t i = 0; i < y0.data().size(); ++i) EXPECT_EQ(with_sigma.data()[i], y0.data()[i] + 0.25 * s0.data()[i]);
}

TEST(Ema, NoMemoryEqualsCurrentSketch) {
  SeededRng rng(10, Stream::Test);
  EmaSketch ema(6, 4, 0.0);
  for (int k = 0; k < 3; ++k) {
    const DenseMatrix f = gaussian_matrix(rng, 6, 4), s = gaussian_matrix(rng, 6, 4);
    const DenseMatrix out = ema.update(f, s, 0.3);
    for (std::size_t i = 0; i < f.data().size(); ++i) EXPECT_EQ(out.data()[i], f.data()[i] + 0.3 * s.data()[i]);
  }
}

TEST(Ema, ConstantInputsConverge) {
  SeededRng rng(11, Stream::Test);
  EmaSketch ema(4, 2, 0.9);
  const DenseMatrix f = gaussian_matrix(rng, 4, 2), s = gaussian_matrix(rng, 4, 2);
  const Eigen::MatrixXd target = to_eigen(f) + 0.5 * to_eigen(s);
  DenseMatrix out;
  for (int k = 1; k <= 50; ++k) out = ema.update(f, s, 0.5);
  EXPECT_LE((to_eigen(out) - target).norm(), 1e-8 * target.norm());
  EXPECT_EQ(ema.k(), 50u);
}

TEST(Ema, RecursionMatchesExplicitWeights) {
  SeededRng rng(12, Stream::Test);
  const double beta = 0.8;
  EmaSketch ema(3, 2, beta);
  std::vector<Eigen::MatrixXd> fs, ss;
  for (int k = 1; k <= 6; ++k) {
    fs.push_back(to_eigen(gaussian_matrix(rng, 3, 2)));
    ss.push_back(to_eigen(gaussian_matrix(rng, 3, 2)));
    const DenseMatrix out = ema.update(from_eigen(fs.back()), from_eigen(ss.back()), 0.2);
    Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(3, 2);
    for (int j = 0; j < k; ++j) expected += (1 - beta) * std::pow(beta, k - 1 - j) * (fs[j] + 0.2 * ss[j]);
    expected /= 1 - std::pow(beta, k);
    EXPECT_LE((to_eigen(out) - expected).norm(), 1e-13 * expected.norm());
  }
}

TEST(Ema, OperatorOverloadUsesFisherAndCovariance) {
  SeededRng rng(13, Stream::Test);
  std::vector<ScoreSample> samples(10);
  for (auto& s : samples) {
    s.raw_score = gaussian_vector(rng, 5);
    s.advantage = rng.normal();
    s.xi = scaled(s.raw_score, s.advantage);
  }
  const TrustRegionOperator op(samples, 0.4);
  const DenseMatrix omega = gaussian_matrix(rng, 5, 3);
  EmaSketch ema(5, 3, 0.9);
  const DenseMatrix y = ema_update(ema, op, omega, 0.4);
  const Eigen::MatrixXd expected = to_eigen(sketch([&](std::span<const double> x) { return op.combined(x); }, omega));
  EXPECT_LE((to_eigen(y) - expected).norm(), 1e-12 * expected.norm());
}

TEST(Ema, SerializationRoundTrip) {
  SeededRng rng(14, Stream::Test);
  EmaSketch ema(4, 3, 0.9);
  ema.update(gaussian_matrix(rng, 4, 3), gaussian_matrix(rng, 4, 3), 0.1);
  ema.update(gaussian_matrix(rng, 4, 3), gaussian_matrix(rng, 4, 3), 0.1);
  std::stringstream ss;
  ema.write(ss);
  const EmaSketch back = EmaSketch::read(ss);
  EXPECT_EQ(back.k(), 2u);
  EXPECT_EQ(back.beta(), 0.9);
  EXPECT_EQ(back.y_fisher().data(), ema.y_fisher().data());
  EXPECT_EQ(back.y_sigma().data(), ema.y_sigma().data());
  std::stringstream bad("uatrpo-ema 1\n2 2 1 0.9\n1\n");
  EXPECT_THROW(EmaSketch::read(bad), Error);
  EXPECT_THROW(EmaSketch(2, 2, 1.0), InvalidArgument);
}
