#include <gtest/gtest.h>

#include "test_util.hpp"
#include "uatrpo/linalg.hpp"

using namespace uatrpo;
using namespace testutil;

TEST(VectorOps, DotNormAxpy) {
  const Vector a{1, 2, 2}, b{3, 0, -1};
  EXPECT_DOUBLE_EQ(dot(a, b), 1.0);
  EXPECT_DOUBLE_EQ(norm(a), 3.0);
  Vector y{1, 1, 1};
  axpy(2.0, a, y);
  EXPECT_EQ(y, (Vector{3, 5, 5}));
  EXPECT_EQ(subtract(a, b), (Vector{-2, 2, 3}));
  EXPECT_FALSE(all_finite(Vector{1.0, std::nan("")}));
}

TEST(DenseMatrix, ProductsMatchEigen) {
  SeededRng rng(1, Stream::Test);
  const auto a = gaussian_matrix(rng, 7, 4), b = gaussian_matrix(rng, 4, 5), c = gaussian_matrix(rng, 7, 3);
  const Vector x = gaussian_vector(rng, 4), z = gaussian_vector(rng, 7);
  EXPECT_LE((to_eigen(a * b) - to_eigen(a) * to_eigen(b)).norm(), 1e-12);
  EXPECT_LE((to_eigen(transpose_times(a, c)) - to_eigen(a).transpose() * to_eigen(c)).norm(), 1e-12);
  EXPECT_LE((to_eigen(a * x) - to_eigen(a) * to_eigen(x)).norm(), 1e-12);
  EXPECT_LE((to_eigen(transpose_times(a, z)) - to_eigen(a).transpose() * to_eigen(z)).norm(), 1e-12);
  EXPECT_EQ(to_eigen(a.transpose()), to_eigen(a).transpose());
}

TEST(DenseMatrix, ShapeErrors) {
  EXPECT_THROW(DenseMatrix(2, 2) * DenseMatrix(3, 2), InvalidArgument);
  EXPECT_THROW(DenseMatrix(2, 2, Vector{1, 2, 3}), InvalidArgument);
  EXPECT_THROW((DenseMatrix::from_rows({{1, 2}, {3}})), InvalidArgument);
}

TEST(Orthonormalize, FullRankSpansInput) {
  SeededRng rng(2, Stream::Test);
  const auto y = gaussian_matrix(rng, 30, 8);
  const auto basis = orthonormalize(y);
  ASSERT_EQ(basis.rank, 8u);
  const Eigen::MatrixXd q = to_eigen(basis.q), ye = to_eigen(y);
  EXPECT_LE((q.transpose() * q - Eigen::MatrixXd::Identity(8, 8)).norm(), 1e-12);
  EXPECT_LE((q * (q.transpose() * ye) - ye).norm(), 1e-10 * ye.norm());
}

TEST(Orthonormalize, RankDeficientDropsNullDirections) {
  SeededRng rng(3, Stream::Test);
  const Eigen::MatrixXd y = gaussian(rng, 20, 3) * gaussian(rng, 3, 9);
  const auto basis = orthonormalize(from_eigen(y));
  EXPECT_EQ(basis.rank, 3u);
  const Eigen::MatrixXd q = to_eigen(basis.q);
  EXPECT_LE((q * (q.transpose() * y) - y).norm(), 1e-10 * y.norm());
}

TEST(Orthonormalize, ZeroInputHasRankZero) {
  const auto basis = orthonormalize(DenseMatrix(5, 3));
  EXPECT_EQ(basis.rank, 0u);
  EXPECT_EQ(basis.q.cols(), 0u);
}

TEST(Orthonormalize, SingularValuesMatchEigen) {
  SeededRng rng(4, Stream::Test);
  const auto a = gaussian_matrix(rng, 12, 6);
  const auto svd = detail::thin_svd(a);
  Eigen::JacobiSVD<Eigen::MatrixXd> ref(to_eigen(a));
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(svd.sigma[i], ref.singularValues()(i), 1e-12);
}

TEST(SymmetricEig, MatchesEigenAndReconstructs) {
  SeededRng rng(5, Stream::Test);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 2 + rng.below(20);
    const auto a = gaussian_matrix(rng, n, n).symmetrized();
    const auto e = symmetric_eig(a);
    ASSERT_TRUE(e.converged);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ref(to_eigen(a));
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(e.values[i], ref.eigenvalues()(n - 1 - i), 1e-10);
    for (std::size_t i = 0; i + 1 < n; ++i) EXPECT_GE(e.values[i], e.values[i + 1]);
    const Eigen::MatrixXd v = to_eigen(e.vectors);
    const Eigen::MatrixXd lam = to_eigen(e.values).asDiagonal();
    EXPECT_LE((v * lam * v.transpose() - to_eigen(a)).norm(), 1e-10 * to_eigen(a).norm());
    EXPECT_LE((v.transpose() * v - Eigen::MatrixXd::Identity(n, n)).norm(), 1e-10);
  }
}

TEST(SymmetricEig, DiagonalAndZero) {
  const auto e = symmetric_eig(DenseMatrix::diagonal(Vector{1, 3, 2}));
  EXPECT_EQ(e.values, (Vector{3, 2, 1}));
  const auto z = symmetric_eig(DenseMatrix(3, 3));
  EXPECT_TRUE(z.converged);
  EXPECT_EQ(z.values, (Vector{0, 0, 0}));
}

TEST(ConjugateGradient, MatchesDenseDampedSolve) {
  SeededRng rng(6, Stream::Test);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index d = 2 + rng.below(19);
    const Eigen::MatrixXd m = random_psd(rng, d, d);
    const Vector b = gaussian_vector(rng, d);
    const DenseMatrix md = from_eigen(m);
    const Vector x = conjugate_gradient([&](std::span<const double> v) { return md * v; }, b, 10 * d, 0.1);
    const Eigen::VectorXd ref = (m + 0.1 * Eigen::MatrixXd::Identity(d, d)).ldlt().solve(to_eigen(b));
    EXPECT_LE(rel_err(to_eigen(x), ref), 1e-6);
  }
}

TEST(ConjugateGradient, ResidualNeverGrowsWithIterations) {
  SeededRng rng(7, Stream::Test);
  const Eigen::MatrixXd m = random_psd(rng, 30, 30);
  const DenseMatrix md = from_eigen(m);
  const Vector b = gaussian_vector(rng, 30);
  auto op = [&](std::span<const double> v) { return md * v; };
  double prev = std::numeric_limits<double>::infinity();
  for (int iters = 1; iters <= 40; ++iters) {
    const Vector x = conjugate_gradient(op, b, iters, 0.0);
    const double res = (m * to_eigen(x) - to_eigen(b)).norm();
    EXPECT_LE(res, prev * (1 + 1e-12));
    prev = res;
  }
}

TEST(ConjugateGradient, ZeroRightHandSideGivesZero) {
  const Vector x = conjugate_gradient([](std::span<const double> v) { return Vector(v.begin(), v.end()); },
                                      Vector(4, 0.0), 5, 0.1);
  EXPECT_EQ(x, Vector(4, 0.0));
}

TEST(ConjugateGradient, IdentityOneStep) {
  const Vector b{1, -2, 3};
  const Vector x = conjugate_gradient([](std::span<const double> v) { return Vector(v.begin(), v.end()); }, b, 1);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(x[i], b[i], 1e-15);
}

TEST(LeastSquares, OverdeterminedMatchesEigen) {
  SeededRng rng(8, Stream::Test);
  const auto a = gaussian_matrix(rng, 12, 5), b = gaussian_matrix(rng, 12, 3);
  const Eigen::MatrixXd ref = to_eigen(a).colPivHouseholderQr().solve(to_eigen(b));
  EXPECT_LE((to_eigen(least_squares(a, b)) - ref).norm(), 1e-10);
  EXPECT_THROW(least_squares(gaussian_matrix(rng, 2, 3), gaussian_matrix(rng, 2, 1)), InvalidArgument);
}

TEST(LeastSquares, RankDeficientGivesMinimumNorm) {
  SeededRng rng(9, Stream::Test);
  const Eigen::MatrixXd a = gaussian(rng, 10, 2) * gaussian(rng, 2, 4);
  const Eigen::MatrixXd b = gaussian(rng, 10, 2);
  const Eigen::MatrixXd ref = a.completeOrthogonalDecomposition().solve(b);
  EXPECT_LE((to_eigen(least_squares(from_eigen(a), from_eigen(b))) - ref).norm(), 1e-8 * ref.norm());
}

TEST(GaussianMatrix, DeterministicAndValidated) {
  SeededRng r1(10, Stream::Projection), r2(10, Stream::Projection);
  EXPECT_EQ(gaussian_matrix(r1, 4, 3).data(), gaussian_matrix(r2, 4, 3).data());
  EXPECT_THROW(gaussian_matrix(r1, 0, 3), InvalidArgument);
}

TEST(Rng, StreamsAreIndependentAndReproducible) {
  SeededRng a(1, Stream::Rollout), b(1, Stream::Rollout), c(1, Stream::Evaluation), d(2, Stream::Rollout);
  const auto x = a.next_u64();
  EXPECT_EQ(x, b.next_u64());
  EXPECT_NE(x, c.next_u64());
  EXPECT_NE(x, d.next_u64());
  SeededRng u(3);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    ASSERT_GT(v, 0.0);
    ASSERT_LT(v, 1.0);
    ASSERT_LT(u.below(7), 7u);
  }
}

TEST(Rng, NormalMoments) {
  SeededRng r(4);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.01);
}
