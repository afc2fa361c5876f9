#pragma once

// One-iteration policy updates.
//
// TRPO: v from conjugate gradient on (F_hat + damping I) v = g_hat, step size
// eta = sqrt(2 delta_KL / v'F_hat v), then a backtracking line search that
// requires positive surrogate improvement and actual KL <= delta_KL.
//
// UA-TRPO: v from the randomized-subspace pseudoinverse of
// M_hat = F_hat + c R_n^2 Sigma_hat, eta = sqrt(2 delta_UA / v'M_hat v), and no
// line search.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uatrpo/envs.hpp"
#include "uatrpo/error.hpp"
#include "uatrpo/estimation.hpp"
#include "uatrpo/linalg.hpp"
#include "uatrpo/policy.hpp"
#include "uatrpo/trust_region.hpp"

namespace uatrpo {

struct TrpoConfig {
  double delta_kl = 0.01;
  int cg_iters = 20;
  double cg_damping = 0.1;
  double backtrack_ratio = 0.5;
  int max_backtracks = 10;
};

struct UaTrpoConfig {
  double delta_ua = 0.03;
  double c = 6e-4;
  double alpha = 0.05;
  std::size_t m = 200;  // requested projections; capped by projection_count()
  double beta = 0.9;
  bool use_ema = true;
};

struct StepReport {
  double direction_norm = 0.0;
  double eta = 0.0;
  double estimated_kl = 0.0;   // 1/2 eta^2 v'F_hat v of the proposed step
  double proposed_kl = 0.0;    // analytic KL of the proposed step, before any line search
  double actual_kl = 0.0;      // analytic KL of the step actually applied
  double surrogate_improvement = 0.0;
  bool accepted = false;
  int line_search_steps = 0;
  double rn2 = 0.0;
  std::size_t ell = 0;
  std::string note;
};

/// Everything an update needs from one batch, read-only during the step.
struct IterationEstimates {
  PolicySnapshot snapshot;
  std::vector<Vector> states;
  std::vector<Vector> actions;
  Vector old_log_probs;
  Vector advantages;  // standardized
  GradientEstimate gradient;
  std::vector<ScoreSample> subsample;
};

inline IterationEstimates make_estimates(const RolloutBatch& batch, const PolicyParams& params,
                                         std::span<const double> standardized_advantages, std::size_t subsample_factor,
                                         SeededRng& rng) {
  PolicySnapshot snapshot(params);
  auto pg = policy_gradient(batch, snapshot, standardized_advantages);
  IterationEstimates est{std::move(snapshot), {}, {}, {}, Vector(standardized_advantages.begin(), standardized_advantages.end()),
                         std::move(pg.estimate), subsample(pg.samples, subsample_factor, rng)};
  est.states.reserve(batch.n_steps);
  est.actions.reserve(batch.n_steps);
  est.old_log_probs.reserve(batch.n_steps);
  batch.for_each_step([&](const Transition& t) {
    est.states.push_back(t.state);
    est.actions.push_back(t.action);
    est.old_log_probs.push_back(t.log_prob);
  });
  return est;
}

/// (1/N) sum_i (pi_new / pi_old - 1) A_i, the change of the importance-sampled surrogate.
inline double surrogate_improvement(const IterationEstimates& est, const PolicyParams& candidate) {
  double total = 0.0;
  for (std::size_t i = 0; i < est.states.size(); ++i) {
    const double ratio = std::exp(log_prob(candidate, est.states[i], est.actions[i]) - est.old_log_probs[i]);
    total += (ratio - 1.0) * est.advantages[i];
  }
  return total / static_cast<double>(est.states.size());
}

struct UpdateResult {
  PolicyParams params;
  StepReport report;
};

inline UpdateResult trpo_step(const PolicyParams& params, const IterationEstimates& est, const TrpoConfig& cfg) {
  require(cfg.delta_kl > 0.0, "trpo_step: delta_kl must be positive");
  UpdateResult out{params, {}};
  StepReport& rep = out.report;
  const Vector& g = est.gradient.g_hat;
  if (norm(g) == 0.0) {
    rep.accepted = true;
    rep.note = "zero gradient";
    return out;
  }

  const TrustRegionOperator fisher(est.subsample, 0.0);
  const Vector v = conjugate_gradient([&](std::span<const double> x) { return fisher.fisher(x); }, g, cfg.cg_iters,
                                      cfg.cg_damping);
  const double vfv = dot(v, fisher.fisher(v));
  rep.direction_norm = norm(v);
  if (!(vfv > 0.0) || !std::isfinite(vfv)) {
    rep.note = "direction has no Fisher curvature";
    return out;
  }
  rep.eta = std::sqrt(2.0 * cfg.delta_kl / vfv);
  rep.estimated_kl = 0.5 * rep.eta * rep.eta * vfv;

  double fraction = 1.0;
  for (int i = 0; i < cfg.max_backtracks; ++i, fraction *= cfg.backtrack_ratio) {
    PolicyParams candidate = params;
    candidate.apply_step(scaled(v, fraction * rep.eta));
    const double kl = kl_between(est.snapshot, candidate, est.states);
    const double improvement = surrogate_improvement(est, candidate);
    if (i == 0) rep.proposed_kl = kl;
    if (std::isfinite(kl) && improvement > 0.0 && kl <= cfg.delta_kl) {
      out.params = std::move(candidate);
      rep.actual_kl = kl;
      rep.surrogate_improvement = improvement;
      rep.accepted = true;
      rep.line_search_steps = i;
      return out;
    }
  }
  rep.line_search_steps = cfg.max_backtracks;
  rep.note = "line search failed";
  return out;
}

/// Run-level state UA-TRPO carries across iterations: the fixed random
/// matrix and the EMA sketches.
struct UaTrpoState {
  DenseMatrix omega;
  EmaSketch ema;

  static UaTrpoState create(std::size_t d, const UaTrpoConfig& cfg, SeededRng& rng) {
    const std::size_t m = projection_count(d, cfg.m);
    return {gaussian_matrix(rng, d, m), EmaSketch(d, m, cfg.beta)};
  }
};

inline UpdateResult ua_trpo_step(const PolicyParams& params, const IterationEstimates& est, UaTrpoState& state,
                                 const UaTrpoConfig& cfg) {
  require(cfg.delta_ua > 0.0, "ua_trpo_step: delta_ua must be positive");
  require(cfg.c >= 0.0, "ua_trpo_step: c must be >= 0");
  require(cfg.alpha > 0.0 && cfg.alpha < 1.0, "ua_trpo_step: alpha must be in (0, 1)");
  UpdateResult out{params, {}};
  StepReport& rep = out.report;
  const Vector& g = est.gradient.g_hat;
  const std::size_t d = g.size();
  require(state.omega.rows() == d, "ua_trpo_step: Omega does not match the parameter dimension");

  rep.rn2 = radius_sq({cfg.alpha, est.subsample.size(), d});
  const TrustRegionOperator op(est.subsample, cfg.c * rep.rn2);
  auto apply_m = [&](std::span<const double> x) { return op.combined(x); };

  Vector v;
  try {
    if (cfg.use_ema) {
      const DenseMatrix y = ema_update(state.ema, op, state.omega, op.coefficient());
      const SubspaceModel model = subspace_from_sketch(y, state.omega);
      rep.ell = model.ell();
      v = solve_direction(model, g);
    } else {
      const SubspaceModel model = subspace_from_operator(sketch(apply_m, state.omega), apply_m);
      rep.ell = model.ell();
      v = solve_direction(model, g);
    }
  } catch (const NoSubspace& e) {
    rep.note = e.what();
    return out;
  }

  rep.direction_norm = norm(v);
  const double vmv = dot(v, op.combined(v));
  if (!(vmv > 0.0) || !std::isfinite(vmv)) {
    rep.note = "direction has no trust-region curvature";
    return out;
  }
  rep.eta = std::sqrt(2.0 * cfg.delta_ua / vmv);
  rep.estimated_kl = 0.5 * rep.eta * rep.eta * dot(v, op.fisher(v));

  out.params.apply_step(scaled(v, rep.eta));
  rep.proposed_kl = kl_between(est.snapshot, out.params, est.states);
  rep.actual_kl = rep.proposed_kl;
  rep.surrogate_improvement = surrogate_improvement(est, out.params);
  rep.accepted = true;
  return out;
}

}  // namespace uatrpo
