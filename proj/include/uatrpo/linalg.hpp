#pragma once

// Dense linear algebra for the small-to-moderate dimensions this library works
// in: parameter vectors up to ~1e4 entries and subspaces up to ~1e3 columns.
// Nothing here forms a d x d matrix.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "uatrpo/error.hpp"
#include "uatrpo/rng.hpp"

namespace uatrpo {

using Vector = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  require(x.size() == y.size(), "axpy: length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline Vector scaled(std::span<const double> x, double alpha) {
  Vector out(x.begin(), x.end());
  for (double& v : out) v *= alpha;
  return out;
}

inline Vector add(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "add: length mismatch");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

inline Vector subtract(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "subtract: length mismatch");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

inline bool all_finite(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

/// Row-major dense matrix.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  DenseMatrix(std::size_t rows, std::size_t cols, Vector data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows_ * cols_, "DenseMatrix: data size does not match shape");
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static DenseMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    DenseMatrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
      require(row.size() == c, "DenseMatrix::from_rows: ragged rows");
      std::size_t j = 0;
      for (double v : row) m(i, j++) = v;
      ++i;
    }
    return m;
  }

  static DenseMatrix diagonal(std::span<const double> diag) {
    DenseMatrix m(diag.size(), diag.size());
    for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  Vector col(std::size_t j) const {
    Vector out(rows_);
    for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
    return out;
  }
  void set_col(std::size_t j, std::span<const double> values) {
    require(values.size() == rows_, "DenseMatrix::set_col: length mismatch");
    for (std::size_t i = 0; i < rows_; ++i) (*this)(i, j) = values[i];
  }

  const Vector& data() const { return data_; }
  Vector& data() { return data_; }

  DenseMatrix transpose() const {
    DenseMatrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  double frobenius() const { return norm(data_); }

  // (A + A') / 2
  DenseMatrix symmetrized() const {
    require(rows_ == cols_, "symmetrized: matrix must be square");
    DenseMatrix s(rows_, cols_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) s(i, j) = 0.5 * ((*this)(i, j) + (*this)(j, i));
    return s;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector data_;
};

inline DenseMatrix operator*(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  DenseMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ci = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto bk = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

inline DenseMatrix operator-(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "matrix subtract: shape mismatch");
  return DenseMatrix(a.rows(), a.cols(), subtract(a.data(), b.data()));
}

inline DenseMatrix operator+(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "matrix add: shape mismatch");
  return DenseMatrix(a.rows(), a.cols(), add(a.data(), b.data()));
}

// A' B without forming A'.
inline DenseMatrix transpose_times(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.rows() == b.rows(), "transpose_times: row mismatch");
  DenseMatrix c(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto ak = a.row(k);
    auto bk = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = ak[i];
      if (aki == 0.0) continue;
      auto ci = c.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aki * bk[j];
    }
  }
  return c;
}

inline Vector operator*(const DenseMatrix& a, std::span<const double> x) {
  require(a.cols() == x.size(), "matvec: length mismatch");
  Vector y(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
  return y;
}

inline Vector transpose_times(const DenseMatrix& a, std::span<const double> x) {
  require(a.rows() == x.size(), "transpose matvec: length mismatch");
  Vector y(a.cols(), 0.0);
  for (std::size_t k = 0; k < a.rows(); ++k) axpy(x[k], a.row(k), y);
  return y;
}

namespace detail {

struct QrFactors {
  DenseMatrix q;  // p x k, orthonormal columns
  DenseMatrix r;  // k x q, upper trapezoidal
};

// Householder thin QR of a p x q matrix, k = min(p, q).
inline QrFactors householder_qr(const DenseMatrix& a) {
  const std::size_t p = a.rows();
  const std::size_t q = a.cols();
  const std::size_t k = std::min(p, q);
  DenseMatrix work = a;
  std::vector<Vector> reflectors;
  reflectors.reserve(k);

  for (std::size_t j = 0; j < k; ++j) {
    Vector v(p - j);
    for (std::size_t i = j; i < p; ++i) v[i - j] = work(i, j);
    const double alpha = norm(v);
    if (alpha == 0.0) {
      reflectors.emplace_back();
      continue;
    }
    v[0] += v[0] >= 0.0 ? alpha : -alpha;
    const double vnorm = norm(v);
    for (double& x : v) x /= vnorm;
    for (std::size_t c = j; c < q; ++c) {
      double s = 0.0;
      for (std::size_t i = j; i < p; ++i) s += v[i - j] * work(i, c);
      for (std::size_t i = j; i < p; ++i) work(i, c) -= 2.0 * s * v[i - j];
    }
    reflectors.push_back(std::move(v));
  }

  QrFactors out{DenseMatrix(p, k), DenseMatrix(k, q)};
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t c = i; c < q; ++c) out.r(i, c) = work(i, c);

  // Accumulate Q = H_0 H_1 ... H_{k-1} applied to the first k unit vectors.
  for (std::size_t c = 0; c < k; ++c) out.q(c, c) = 1.0;
  for (std::size_t jj = k; jj-- > 0;) {
    const Vector& v = reflectors[jj];
    if (v.empty()) continue;
    for (std::size_t c = 0; c < k; ++c) {
      double s = 0.0;
      for (std::size_t i = jj; i < p; ++i) s += v[i - jj] * out.q(i, c);
      for (std::size_t i = jj; i < p; ++i) out.q(i, c) -= 2.0 * s * v[i - jj];
    }
  }
  return out;
}

struct ThinSvd {
  DenseMatrix u;   // p x k, columns for the nonzero singular values are orthonormal
  Vector sigma;    // k, descending
  DenseMatrix v;   // q x k
};

// One-sided (Hestenes) Jacobi on the columns of x. Returns x*W with mutually
// orthogonal columns and the accumulated rotation W.
inline std::pair<DenseMatrix, DenseMatrix> orthogonalize_columns(DenseMatrix x) {
  const std::size_t n = x.cols();
  const std::size_t rows = x.rows();
  DenseMatrix w = DenseMatrix::identity(n);
  constexpr double eps = std::numeric_limits<double>::epsilon();
  for (int sweep = 0; sweep < 80; ++sweep) {
    bool rotated = false;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
          alpha += x(r, i) * x(r, i);
          beta += x(r, j) * x(r, j);
          gamma += x(r, i) * x(r, j);
        }
        if (gamma == 0.0 || std::abs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t r = 0; r < rows; ++r) {
          const double xi = x(r, i);
          const double xj = x(r, j);
          x(r, i) = c * xi - s * xj;
          x(r, j) = s * xi + c * xj;
        }
        for (std::size_t r = 0; r < n; ++r) {
          const double wi = w(r, i);
          const double wj = w(r, j);
          w(r, i) = c * wi - s * wj;
          w(r, j) = s * wi + c * wj;
        }
      }
    }
    if (!rotated) break;
  }
  return {std::move(x), std::move(w)};
}

// Thin SVD through QR followed by one-sided Jacobi on the small R factor.
inline ThinSvd thin_svd(const DenseMatrix& a) {
  const auto qr = householder_qr(a);
  auto [xr, w] = orthogonalize_columns(qr.r);
  const std::size_t k = qr.r.rows();
  const std::size_t n = xr.cols();

  std::vector<std::pair<double, std::size_t>> order(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t r = 0; r < k; ++r) s += xr(r, j) * xr(r, j);
    order[j] = {std::sqrt(s), j};
  }
  std::stable_sort(order.begin(), order.end(),
                   [](const auto& lhs, const auto& rhs) { return lhs.first > rhs.first; });

  const std::size_t keep = std::min(k, n);
  ThinSvd out{DenseMatrix(a.rows(), keep), Vector(keep), DenseMatrix(a.cols(), keep)};
  DenseMatrix ur(k, keep);
  for (std::size_t c = 0; c < keep; ++c) {
    const auto [sigma, j] = order[c];
    out.sigma[c] = sigma;
    for (std::size_t r = 0; r < n; ++r) out.v(r, c) = w(r, j);
    if (sigma > 0.0)
      for (std::size_t r = 0; r < k; ++r) ur(r, c) = xr(r, j) / sigma;
  }
  out.u = qr.q * ur;
  return out;
}

}  // namespace detail

struct OrthoBasis {
  DenseMatrix q;      // d x rank
  std::size_t rank = 0;
};

/// Orthonormal basis for the dominant column space of y: left singular
/// vectors whose singular value exceeds rank_tol * sigma_max, ordered by
/// decreasing singular value. An all-zero y yields rank 0 and an empty basis.
inline OrthoBasis orthonormalize(const DenseMatrix& y, double rank_tol = 1e-10) {
  require(y.rows() >= 1 && y.cols() >= 1, "orthonormalize: empty input");
  require(rank_tol > 0.0, "orthonormalize: rank_tol must be positive");
  const auto svd = detail::thin_svd(y);
  if (svd.sigma.empty() || svd.sigma.front() == 0.0) return {DenseMatrix(y.rows(), 0), 0};
  const double cutoff = rank_tol * svd.sigma.front();
  std::size_t rank = 0;
  while (rank < svd.sigma.size() && svd.sigma[rank] > cutoff) ++rank;
  DenseMatrix q(y.rows(), rank);
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t c = 0; c < rank; ++c) q(i, c) = svd.u(i, c);
  return {std::move(q), rank};
}

struct EigResult {
  DenseMatrix vectors;  // columns are eigenvectors
  Vector values;        // descending
  bool converged = true;
  std::size_t sweeps = 0;
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. The input is
/// symmetrized first. Non-convergence within 100*n^2 sweeps is reported
/// through EigResult::converged rather than thrown.
inline EigResult symmetric_eig(const DenseMatrix& input) {
  require(input.rows() == input.cols(), "symmetric_eig: matrix must be square");
  const std::size_t n = input.rows();
  DenseMatrix a = input.symmetrized();
  DenseMatrix v = DenseMatrix::identity(n);
  EigResult result;

  const double scale = a.frobenius();
  const std::size_t max_sweeps = std::max<std::size_t>(1, 100 * n * n);
  bool converged = scale == 0.0 || n < 2;
  std::size_t sweep = 0;
  while (!converged && sweep < max_sweeps) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (std::sqrt(off) <= 1e-15 * scale) {
      converged = true;
      break;
    }
    ++sweep;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });
  result.values.resize(n);
  result.vectors = DenseMatrix(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    result.values[c] = a(order[c], order[c]);
    for (std::size_t r = 0; r < n; ++r) result.vectors(r, c) = v(r, order[c]);
  }
  result.converged = converged;
  result.sweeps = sweep;
  return result;
}

/// Conjugate gradient on (A + damping*I) x = b for symmetric PSD A given as a
/// matrix-free product. Returns the lowest-residual iterate seen, so the
/// residual of the result never grows with `iters`.
template <typename ApplyA>
Vector conjugate_gradient(ApplyA&& apply_a, std::span<const double> b, int iters, double damping = 0.0) {
  require(iters >= 1, "conjugate_gradient: iters must be >= 1");
  require(damping >= 0.0, "conjugate_gradient: damping must be >= 0");
  const std::size_t n = b.size();
  Vector x(n, 0.0);
  Vector r(b.begin(), b.end());
  Vector p = r;
  double rr = dot(r, r);
  if (rr == 0.0) return x;

  const double stop = 1e-30 * rr;
  Vector best = x;
  double best_rr = rr;
  for (int it = 0; it < iters; ++it) {
    Vector ap = apply_a(std::span<const double>(p));
    axpy(damping, p, ap);
    const double pap = dot(p, ap);
    if (!(pap > 0.0)) break;
    const double step = rr / pap;
    axpy(step, p, x);
    axpy(-step, ap, r);
    const double rr_next = dot(r, r);
    if (rr_next < best_rr) {
      best = x;
      best_rr = rr_next;
    }
    if (rr_next <= stop) break;
    const double beta = rr_next / rr;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    rr = rr_next;
  }
  return best;
}

/// Minimizer of ||A X - B||_F; the minimum-norm one when A is rank deficient.
inline DenseMatrix least_squares(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.rows() == b.rows(), "least_squares: row mismatch");
  if (a.rows() < a.cols()) throw InvalidArgument("least_squares: underdetermined system (rows < cols)");
  const auto svd = detail::thin_svd(a);
  DenseMatrix x(a.cols(), b.cols());
  if (svd.sigma.empty() || svd.sigma.front() == 0.0) return x;
  const double cutoff = static_cast<double>(std::max(a.rows(), a.cols())) *
                        std::numeric_limits<double>::epsilon() * svd.sigma.front();
  DenseMatrix utb = transpose_times(svd.u, b);  // k x r
  for (std::size_t c = 0; c < svd.sigma.size(); ++c) {
    const double s = svd.sigma[c];
    auto row = utb.row(c);
    for (double& v : row) v = s > cutoff ? v / s : 0.0;
  }
  return svd.v * utb;
}

/// d x m matrix of i.i.d. standard normal draws.
inline DenseMatrix gaussian_matrix(SeededRng& rng, std::size_t d, std::size_t m) {
  require(d >= 1 && m >= 1, "gaussian_matrix: dimensions must be >= 1");
  DenseMatrix out(d, m);
  for (double& v : out.data()) v = rng.normal();
  return out;
}

}  // namespace uatrpo
