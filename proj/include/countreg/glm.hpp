#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "countreg/penalty.hpp"

namespace countreg {

// Shared iteration controls for the penalized fitters.
struct FitControls {
  int max_iter = 500;
  double tol = 1e-6;  // relative objective change |f_t - f_{t-1}| / (1 + |f_{t-1}|)
  // 0 starts from b = 0; k > 0 runs k unpenalized update sweeps first.
  int warm_sweeps = 20;
  // Reported coefficients below this magnitude are zeroed (and excluded from
  // active sets / kappa) regardless of policy.
  double zero_report_threshold = 1e-6;
  // Optional explicit start (path warm starts). Under Drop policy, exactly
  // zero penalized cells in it are re-seeded at path_revive so previously
  // dropped cells may re-enter; without this a warm-started path could never
  // grow back from a sparse solution. The seed must sit well above the band
  // where a re-entering cell grows only multiplicatively per sweep while the
  // objective moves by less than tol (the fit would then stop mid-escape and
  // report convergence at what is still the null likelihood); 1e-2 clears
  // that band by ~2 orders of magnitude for unit-scale covariates, and
  // over-seeded noise cells are crushed from above within a few sweeps.
  bool has_initial = false;
  Eigen::MatrixXd initial_b;
  double path_revive = 1e-2;
};

// Exponential-family plumbing for the scalar-response fitter. Only the
// pieces IRLS needs: link, inverse link, variance function and d(eta)/d(mu).
struct GlmFamily {
  std::string name;
  std::function<double(double)> link;      // eta(mu)
  std::function<double(double)> inv_link;  // mu(eta)
  std::function<double(double)> variance;  // Var(y|mu) up to dispersion
  std::function<double(double)> deta_dmu;
  // log-likelihood contribution of one observation at linear predictor eta
  std::function<double(double, double)> loglik_term;  // (y, eta)
  static GlmFamily poisson_log();
  static GlmFamily binomial_logit();  // y in {0,1}
};

struct WorkingQuantities {
  Eigen::VectorXd gamma;  // IRLS weights 1/((deta/dmu)^2 Var)
  Eigen::VectorXd z;      // working response eta + (y - mu) * deta/dmu
  long clamp_events = 0;  // linear predictors clipped to [-30, 30]
};

struct GlmFitResult {
  Eigen::VectorXd beta;  // size p+1, intercept first; dropped cells exact 0
  std::vector<double> objective_trace;
  std::vector<int> active_set;  // covariate indices (1-based into beta) kept
  bool converged = false;
  int iterations = 0;
  long clamp_events = 0;
};

// Solves (X' diag(gamma) X + diag(penalty)) b = X' diag(gamma) z by Cholesky.
// penalty holds lambda*nu entries with 0 for the intercept. Throws if the
// system is not positive definite (message includes the smallest eigenvalue).
Eigen::VectorXd solve_weighted_ridge(const Eigen::MatrixXd& x,
                                     const Eigen::VectorXd& gamma,
                                     const Eigen::VectorXd& z,
                                     const Eigen::VectorXd& penalty);

WorkingQuantities glm_working(const GlmFamily& family, const Eigen::MatrixXd& x,
                              const Eigen::VectorXd& y,
                              const Eigen::VectorXd& beta_t);

// Sparse-group-penalized GLM via iteratively reweighted ridge: each step
// combines the IRLS quadratic expansion of -loglik with the quadratic
// majorizer of the penalty, so one linear solve handles both. Candidate
// steps are backtracked (halved toward the previous iterate) until the exact
// penalized-surrogate value does not increase, which makes the descent
// property hold deterministically rather than only asymptotically.
// config.structure must cover cells {0..p-1} == covariates 1..p of beta.
GlmFitResult fit_glm_sgl(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                         const GlmFamily& family, const PenaltyConfig& config,
                         const FitControls& controls);

}  // namespace countreg
