#pragma once

// Fast numerical self-checks runnable from the command line: eigensolver
// reconstruction, subspace direction against a dense pseudoinverse, CG against
// a dense solve, the radius formula, worst-case duality and a reduced
// Monte Carlo coverage run.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "uatrpo/linalg.hpp"
#include "uatrpo/rng.hpp"
#include "uatrpo/trust_region.hpp"

namespace uatrpo {

struct SelftestOptions {
  bool quick = false;               // halves every Monte Carlo trial count
  bool inject_eigen_fault = false;  // perturbs the eigensolver output before it is checked
  std::uint64_t seed = 7;
};

struct CheckResult {
  std::string name;
  bool passed = false;
  std::size_t trials = 0;
  std::string detail;
};

namespace oracle {

/// B B' with B d x rank Gaussian; rank-deficient whenever rank < d.
inline DenseMatrix random_psd(SeededRng& rng, std::size_t d, std::size_t rank) {
  const DenseMatrix b = gaussian_matrix(rng, d, rank);
  return b * b.transpose();
}

/// M^+ g from a full eigendecomposition, dropping eigenvalues below tol * max.
inline Vector dense_pinv_solve(const DenseMatrix& m, std::span<const double> g, double tol = 1e-10) {
  const EigResult e = symmetric_eig(m);
  const double top = e.values.empty() ? 0.0 : std::max(e.values.front(), 0.0);
  Vector out(g.size(), 0.0);
  for (std::size_t c = 0; c < e.values.size(); ++c) {
    if (!(e.values[c] > tol * top)) continue;
    const Vector u = e.vectors.col(c);
    axpy(dot(u, g) / e.values[c], u, out);
  }
  return out;
}

/// Symmetric square root of a PSD matrix.
inline DenseMatrix psd_sqrt(const DenseMatrix& m) {
  const EigResult e = symmetric_eig(m);
  const std::size_t n = m.rows();
  DenseMatrix out(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    const double s = std::sqrt(std::max(e.values[c], 0.0));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) out(i, j) += s * e.vectors(i, c) * e.vectors(j, c);
  }
  return out;
}

inline Vector unit_gaussian(SeededRng& rng, std::size_t d) {
  Vector z(d);
  double n2 = 0.0;
  while (n2 == 0.0) {
    for (double& x : z) x = rng.normal();
    n2 = dot(z, z);
  }
  for (double& x : z) x /= std::sqrt(n2);
  return z;
}

/// Minimum of z' w over the unit sphere by random search followed by
/// shrinking local perturbations; `points` evaluations in total.
inline double sphere_search_min(std::span<const double> w, SeededRng& rng, std::size_t points) {
  const std::size_t d = w.size();
  const std::size_t global = points / 2;
  Vector best = unit_gaussian(rng, d);
  double best_val = dot(best, w);
  for (std::size_t i = 1; i < global; ++i) {
    Vector z = unit_gaussian(rng, d);
    const double val = dot(z, w);
    if (val < best_val) best_val = val, best = std::move(z);
  }
  double radius = 0.5;
  const std::size_t local = points - global;
  for (std::size_t i = 0; i < local; ++i) {
    Vector z = best;
    for (double& x : z) x += radius * rng.normal();
    const double nz = norm(z);
    if (nz == 0.0) continue;
    for (double& x : z) x /= nz;
    const double val = dot(z, w);
    if (val < best_val) {
      best_val = val;
      best = std::move(z);
    } else if (i % 50 == 49) {
      radius *= 0.7;
    }
  }
  return best_val;
}

}  // namespace oracle

namespace selftest_detail {

inline std::string fmt(const char* f, double a) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

inline CheckResult eigen_reconstruction(const SelftestOptions& opt, SeededRng rng) {
  CheckResult r{"eigensolver reconstruction", true, 10, {}};
  double worst = 0.0;
  for (std::size_t t = 0; t < r.trials; ++t) {
    const std::size_t n = 12;
    const DenseMatrix a = gaussian_matrix(rng, n, n).symmetrized();
    EigResult e = symmetric_eig(a);
    if (opt.inject_eigen_fault) e.values[0] *= 1.0 + 1e-3;
    DenseMatrix rec(n, n);
    for (std::size_t c = 0; c < n; ++c)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) rec(i, j) += e.values[c] * e.vectors(i, c) * e.vectors(j, c);
    worst = std::max(worst, (rec - a).frobenius() / a.frobenius());
  }
  r.passed = worst <= 1e-10;
  r.detail = fmt("max relative error %.3g", worst);
  return r;
}

inline CheckResult dense_equivalence(SeededRng rng) {
  CheckResult r{"subspace direction vs dense pseudoinverse", true, 20, {}};
  double worst = 0.0;
  for (std::size_t t = 0; t < r.trials; ++t) {
    const std::size_t d = 20, rank = 1 + rng.below(d);
    const DenseMatrix m = oracle::random_psd(rng, d, rank);
    Vector g(d);
    for (double& x : g) x = rng.normal();
    const DenseMatrix omega = gaussian_matrix(rng, d, rank + rng.below(d - rank + 1));
    auto op = [&](std::span<const double> x) { return m * x; };
    const Vector v = update_direction(sketch(op, omega), op, g);
    const Vector ref = oracle::dense_pinv_solve(m, g);
    worst = std::max(worst, norm(subtract(v, ref)) / std::max(norm(ref), 1e-300));
  }
  r.passed = worst <= 1e-6;
  r.detail = fmt("max relative error %.3g", worst);
  return r;
}

inline CheckResult cg_vs_dense(SeededRng rng) {
  CheckResult r{"conjugate gradient vs dense solve", true, 10, {}};
  double worst = 0.0;
  for (std::size_t t = 0; t < r.trials; ++t) {
    const std::size_t d = 15;
    DenseMatrix m = oracle::random_psd(rng, d, d);
    Vector b(d);
    for (double& x : b) x = rng.normal();
    const Vector x = conjugate_gradient([&](std::span<const double> v) { return m * v; }, b, 200, 0.1);
    for (std::size_t i = 0; i < d; ++i) m(i, i) += 0.1;
    const Vector ref = oracle::dense_pinv_solve(m, b);
    worst = std::max(worst, norm(subtract(x, ref)) / norm(ref));
  }
  r.passed = worst <= 1e-6;
  r.detail = fmt("max relative error %.3g", worst);
  return r;
}

inline CheckResult radius_value() {
  const double v = radius_sq({0.05, 100, 5});
  return {"radius formula", std::abs(v - 0.18732) <= 1e-4, 1, fmt("R^2(n=100, d=5, alpha=0.05) = %.6f", v)};
}

inline CheckResult duality(const SelftestOptions& opt, SeededRng rng) {
  CheckResult r{"worst-case duality", true, 20, {}};
  const std::size_t points = opt.quick ? 50000 : 100000;
  double worst = 0.0;
  for (std::size_t t = 0; t < r.trials; ++t) {
    const std::size_t d = 2 + rng.below(9), n = 3 * d;
    std::vector<ScoreSample> samples(n);
    for (auto& s : samples) {
      s.raw_score.resize(d);
      for (double& x : s.raw_score) x = rng.normal();
      s.advantage = rng.normal();
      s.xi = scaled(s.raw_score, s.advantage);
    }
    const TrustRegionOperator op(samples, 0.0);
    Vector delta(d);
    for (double& x : delta) x = rng.normal();
    const double sigma_rn = rng.uniform(0.1, 2.0);
    const double closed = robust_lower_bound_penalty(delta, op, sigma_rn);
    // boundary points g_hat + sigma_rn Sigma^{1/2} z give u'delta - g_hat'delta = sigma_rn z'(Sigma^{1/2} delta)
    DenseMatrix sigma(d, d);
    for (std::size_t j = 0; j < d; ++j) {
      Vector e(d, 0.0);
      e[j] = 1.0;
      sigma.set_col(j, op.covariance(e));
    }
    const Vector w = oracle::psd_sqrt(sigma) * delta;
    const double searched = -sigma_rn * oracle::sphere_search_min(w, rng, points);
    worst = std::max(worst, std::abs(searched - closed) / closed);
  }
  r.trials *= points;
  r.passed = worst <= 1e-3;
  r.detail = fmt("max relative gap %.3g", worst);
  return r;
}

inline CheckResult coverage(const SelftestOptions& opt, SeededRng rng) {
  const std::size_t d = 5, n = 100, trials = opt.quick ? 1000 : 2000;
  const double alpha = 0.05, r2 = radius_sq({alpha, n, d});
  const DenseMatrix sigma = oracle::random_psd(rng, d, d);
  const DenseMatrix root = oracle::psd_sqrt(sigma);
  Vector g(d);
  for (double& x : g) x = rng.normal();
  std::size_t covered = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    Vector mean = g;
    for (std::size_t i = 0; i < n; ++i) {
      Vector z(d);
      for (double& x : z) x = rng.normal();
      axpy(1.0 / static_cast<double>(n), root * z, mean);
    }
    const Vector err = subtract(mean, g);
    if (dot(err, oracle::dense_pinv_solve(sigma, err)) <= r2) ++covered;
  }
  const double rate = static_cast<double>(covered) / static_cast<double>(trials);
  return {"uncertainty-set coverage", rate >= 1.0 - alpha, trials, fmt("coverage %.4f", rate)};
}

}  // namespace selftest_detail

inline std::vector<CheckResult> run_selftest(const SelftestOptions& opt = {}) {
  using namespace selftest_detail;
  const SeededRng root(opt.seed, Stream::Test);
  return {eigen_reconstruction(opt, root.split(1)), dense_equivalence(root.split(2)), cg_vs_dense(root.split(3)),
          radius_value(), duality(opt, root.split(4)), coverage(opt, root.split(5))};
}

inline bool print_selftest(std::ostream& os, const std::vector<CheckResult>& results) {
  bool all = true;
  for (const auto& r : results) {
    char line[256];
    std::snprintf(line, sizeof line, "%-4s %-42s %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    os << line;
    all = all && r.passed;
  }
  return all;
}

}  // namespace uatrpo
