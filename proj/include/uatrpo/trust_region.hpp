#pragma once

// Uncertainty-aware trust region.
//
// The true policy gradient g lies, with probability at least 1 - alpha, in the
// ellipsoid U_n = { u : (u - g_hat)' Sigma^{-1} (u - g_hat) <= sigma^2 R_n^2 }.
// Taking the worst case over U_n adds the penalty sigma R_n sqrt(delta' Sigma delta)
// to the usual linear model, which motivates the trust-region matrix
// M = F + c R_n^2 Sigma.
//
// The update direction is the pseudoinverse solution M^+ g_hat restricted to a
// randomized low-rank range of M: sketch Y = M Omega, orthonormalize, project,
// eigendecompose and solve in the subspace. The EMA variant keeps running
// averages of F Omega and Sigma Omega and recovers the projected matrix by
// least squares from the sketch alone.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <istream>
#include <ostream>
#include <span>
#include <string>

#include "uatrpo/error.hpp"
#include "uatrpo/estimation.hpp"
#include "uatrpo/linalg.hpp"

namespace uatrpo {

struct RadiusParams {
  double alpha = 0.05;
  std::size_t n = 1;
  std::size_t d = 1;
};

/// R_n^2 = (d + 2 sqrt(d log(1/alpha)) + 2 log(1/alpha)) / n
inline double radius_sq(const RadiusParams& p) {
  require(p.alpha > 0.0 && p.alpha < 1.0, "radius_sq: alpha must be in (0, 1)");
  require(p.n >= 1 && p.d >= 1, "radius_sq: n and d must be >= 1");
  const double d = static_cast<double>(p.d);
  const double log_inv_alpha = std::log(1.0 / p.alpha);
  return (d + 2.0 * std::sqrt(d * log_inv_alpha) + 2.0 * log_inv_alpha) / static_cast<double>(p.n);
}

/// sigma R_n sqrt(delta' Sigma_hat delta); a round-off negative radicand counts as 0.
inline double robust_lower_bound_penalty(std::span<const double> delta, const TrustRegionOperator& op,
                                         double sigma_rn) {
  require(delta.size() == op.dim(), "robust_lower_bound_penalty: length mismatch");
  const double quad = dot(delta, op.covariance(delta));
  return sigma_rn * std::sqrt(std::max(0.0, quad));
}

/// g_hat' delta minus the worst-case penalty: the minimum of u' delta over U_n.
inline double robust_linear_bound(std::span<const double> g_hat, std::span<const double> delta,
                                  const TrustRegionOperator& op, double sigma_rn) {
  return dot(g_hat, delta) - robust_lower_bound_penalty(delta, op, sigma_rn);
}

/// Minimizer of u' delta over U_n: u* = g_hat - sigma R_n Sigma delta / sqrt(delta' Sigma delta).
/// Returns g_hat when delta' Sigma delta vanishes.
inline Vector worst_case_gradient(std::span<const double> g_hat, std::span<const double> delta,
                                  const TrustRegionOperator& op, double sigma_rn) {
  const Vector sig_delta = op.covariance(delta);
  const double quad = dot(delta, sig_delta);
  Vector u(g_hat.begin(), g_hat.end());
  if (quad > 0.0) axpy(-sigma_rn / std::sqrt(quad), sig_delta, u);
  return u;
}

/// Number of random projections: the requested count, capped at ceil(d/4) and d.
inline std::size_t projection_count(std::size_t d, std::size_t requested = 200) {
  require(d >= 1 && requested >= 1, "projection_count: d and requested must be >= 1");
  return std::min({requested, (d + 3) / 4, d});
}

/// Column j of the result is op(column j of omega).
template <typename ApplyOp>
DenseMatrix sketch(ApplyOp&& op, const DenseMatrix& omega) {
  require(omega.cols() >= 1, "sketch: omega needs at least one column");
  DenseMatrix y(omega.rows(), omega.cols());
  for (std::size_t j = 0; j < omega.cols(); ++j) {
    const Vector col = omega.col(j);
    const Vector out = op(std::span<const double>(col));
    require(out.size() == omega.rows(), "sketch: operator returned wrong length");
    y.set_col(j, out);
  }
  return y;
}

/// Everything needed to solve for the update direction inside span(Q).
struct SubspaceModel {
  DenseMatrix q;        // d x ell, orthonormal
  DenseMatrix m_tilde;  // ell x ell, symmetric projection of M
  DenseMatrix eigvecs;  // ell x r, eigenpairs kept after flooring
  Vector eigvals;       // r, descending, all >= eig_floor
  double eig_floor = 0.0;

  std::size_t ell() const { return q.cols(); }
};

inline constexpr double kDefaultRankTol = 1e-10;
inline constexpr double kRelativeEigFloor = 1e-8;

namespace detail {

// Eigendecompose m_tilde and keep the eigenpairs at or above
// kRelativeEigFloor * max(lambda_max, 1); the rest are treated as null
// directions, in the spirit of the pseudoinverse.
inline SubspaceModel finish_model(DenseMatrix q, DenseMatrix m_tilde) {
  SubspaceModel model;
  model.q = std::move(q);
  model.m_tilde = m_tilde.symmetrized();
  const EigResult eig = symmetric_eig(model.m_tilde);
  if (!eig.converged) throw Error("update_direction: eigensolver did not converge");
  const double top = eig.values.empty() ? 0.0 : eig.values.front();
  model.eig_floor = kRelativeEigFloor * std::max(top, 1.0);
  std::size_t keep = 0;
  while (keep < eig.values.size() && eig.values[keep] >= model.eig_floor) ++keep;
  if (keep == 0) throw NoSubspace("update_direction: all projected eigenvalues are below the floor");
  model.eigvals.assign(eig.values.begin(), eig.values.begin() + static_cast<std::ptrdiff_t>(keep));
  model.eigvecs = DenseMatrix(eig.vectors.rows(), keep);
  for (std::size_t r = 0; r < eig.vectors.rows(); ++r)
    for (std::size_t c = 0; c < keep; ++c) model.eigvecs(r, c) = eig.vectors(r, c);
  return model;
}

inline OrthoBasis basis_or_throw(const DenseMatrix& y, double rank_tol) {
  OrthoBasis basis = orthonormalize(y, rank_tol);
  if (basis.rank == 0) throw NoSubspace("update_direction: sketch is identically zero");
  return basis;
}

}  // namespace detail

/// Subspace model with M_tilde = Q' (M Q), using ell operator products.
template <typename ApplyOp>
SubspaceModel subspace_from_operator(const DenseMatrix& y, ApplyOp&& op, double rank_tol = kDefaultRankTol) {
  OrthoBasis basis = detail::basis_or_throw(y, rank_tol);
  const DenseMatrix mq = sketch(op, basis.q);
  DenseMatrix m_tilde = transpose_times(basis.q, mq);
  return detail::finish_model(std::move(basis.q), std::move(m_tilde));
}

/// Subspace model from a sketch Y ~ M Omega alone: M_tilde solves
/// M_tilde (Q' Omega) = Q' Y in the least-squares sense, then is symmetrized.
inline SubspaceModel subspace_from_sketch(const DenseMatrix& y, const DenseMatrix& omega,
                                          double rank_tol = kDefaultRankTol) {
  require(y.rows() == omega.rows() && y.cols() == omega.cols(), "subspace_from_sketch: Y and Omega shapes differ");
  OrthoBasis basis = detail::basis_or_throw(y, rank_tol);
  // Transposed system: (Omega' Q) M_tilde' = Y' Q, an m x ell problem with m >= ell.
  const DenseMatrix omega_q = transpose_times(omega, basis.q);
  const DenseMatrix y_q = transpose_times(y, basis.q);
  DenseMatrix m_tilde = least_squares(omega_q, y_q).transpose();
  return detail::finish_model(std::move(basis.q), std::move(m_tilde));
}

/// v = Q V Lambda^{-1} V' Q' g_hat over the kept eigenpairs.
inline Vector solve_direction(const SubspaceModel& model, std::span<const double> g_hat) {
  require(g_hat.size() == model.q.rows(), "solve_direction: gradient length mismatch");
  const Vector g_tilde = transpose_times(model.q, g_hat);
  Vector coeffs = transpose_times(model.eigvecs, g_tilde);
  for (std::size_t i = 0; i < coeffs.size(); ++i) coeffs[i] /= model.eigvals[i];
  const Vector y = model.eigvecs * coeffs;
  return model.q * y;
}

/// Uncertainty-aware direction from a fresh sketch of the operator.
template <typename ApplyOp>
Vector update_direction(const DenseMatrix& y, ApplyOp&& op, std::span<const double> g_hat,
                        double rank_tol = kDefaultRankTol) {
  return solve_direction(subspace_from_operator(y, op, rank_tol), g_hat);
}

/// Uncertainty-aware direction from an EMA-combined sketch.
inline Vector update_direction_from_sketch(const DenseMatrix& y, const DenseMatrix& omega,
                                           std::span<const double> g_hat, double rank_tol = kDefaultRankTol) {
  return solve_direction(subspace_from_sketch(y, omega, rank_tol), g_hat);
}

/// Bias-corrected exponential moving averages of F Omega and Sigma Omega.
/// Stored already corrected: with w_k = (1 - beta) / (1 - beta^k),
/// Y_k = (1 - w_k) Y_{k-1} + w_k S_k, which equals the zero-started EMA
/// divided by 1 - beta^k. w_1 = 1, so the first step returns S_1 exactly.
class EmaSketch {
 public:
  EmaSketch() = default;
  EmaSketch(std::size_t d, std::size_t m, double beta) : y_f_(d, m), y_sigma_(d, m), beta_(beta) {
    require(beta >= 0.0 && beta < 1.0, "EmaSketch: beta must be in [0, 1)");
  }

  const DenseMatrix& y_fisher() const { return y_f_; }
  const DenseMatrix& y_sigma() const { return y_sigma_; }
  std::size_t k() const { return k_; }
  double beta() const { return beta_; }

  /// Folds in this iteration's sketches and returns Y_F + c_rn2 Y_Sigma.
  DenseMatrix update(const DenseMatrix& f_omega, const DenseMatrix& sigma_omega, double c_rn2) {
    require(f_omega.rows() == y_f_.rows() && f_omega.cols() == y_f_.cols(), "EmaSketch::update: shape mismatch");
    require(sigma_omega.rows() == y_f_.rows() && sigma_omega.cols() == y_f_.cols(),
            "EmaSketch::update: shape mismatch");
    ++k_;
    const double w = (1.0 - beta_) / (1.0 - std::pow(beta_, static_cast<double>(k_)));
    auto& yf = y_f_.data();
    auto& ys = y_sigma_.data();
    for (std::size_t i = 0; i < yf.size(); ++i) {
      yf[i] = (1.0 - w) * yf[i] + w * f_omega.data()[i];
      ys[i] = (1.0 - w) * ys[i] + w * sigma_omega.data()[i];
    }
    return combined(c_rn2);
  }

  DenseMatrix combined(double c_rn2) const {
    DenseMatrix y = y_f_;
    if (c_rn2 != 0.0)
      for (std::size_t i = 0; i < y.data().size(); ++i) y.data()[i] += c_rn2 * y_sigma_.data()[i];
    return y;
  }

  // Text layout: "uatrpo-ema 1", then "d m k beta", then Y_F and Y_Sigma
  // entries row-major, one per line with 17 significant digits.
  void write(std::ostream& os) const {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.17g", beta_);
    os << "uatrpo-ema 1\n" << y_f_.rows() << ' ' << y_f_.cols() << ' ' << k_ << ' ' << buf << '\n';
    for (const DenseMatrix* mtx : {&y_f_, &y_sigma_})
      for (double v : mtx->data()) {
        std::snprintf(buf, sizeof buf, "%.17g\n", v);
        os << buf;
      }
  }

  static EmaSketch read(std::istream& is) {
    std::string magic;
    int version = 0;
    if (!(is >> magic >> version) || magic != "uatrpo-ema" || version != 1)
      throw Error("EmaSketch::read: not an EMA sketch");
    std::size_t d = 0, m = 0, k = 0;
    double beta = 0.0;
    if (!(is >> d >> m >> k >> beta)) throw Error("EmaSketch::read: bad header");
    EmaSketch e(d, m, beta);
    e.k_ = k;
    for (DenseMatrix* mtx : {&e.y_f_, &e.y_sigma_})
      for (double& v : mtx->data())
        if (!(is >> v)) throw Error("EmaSketch::read: truncated data");
    return e;
  }

 private:
  DenseMatrix y_f_;
  DenseMatrix y_sigma_;
  double beta_ = 0.9;
  std::size_t k_ = 0;
};

/// One EMA step: sketch F and Sigma with the fixed Omega and fold them in.
template <typename ApplyF, typename ApplySigma>
DenseMatrix ema_update(EmaSketch& ema, ApplyF&& apply_f, ApplySigma&& apply_sigma, const DenseMatrix& omega,
                       double c_rn2) {
  return ema.update(sketch(apply_f, omega), sketch(apply_sigma, omega), c_rn2);
}

inline DenseMatrix ema_update(EmaSketch& ema, const TrustRegionOperator& op, const DenseMatrix& omega, double c_rn2) {
  return ema_update(
      ema, [&](std::span<const double> v) { return op.fisher(v); },
      [&](std::span<const double> v) { return op.covariance(v); }, omega, c_rn2);
}

}  // namespace uatrpo
