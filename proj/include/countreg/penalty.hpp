#pragma once

#include <Eigen/Dense>
#include <vector>

namespace countreg {

// Partition of the penalized coefficient cells {0..K-1} into disjoint
// groups. Intercepts are not cells: callers flatten only penalized entries.
struct GroupStructure {
  std::vector<std::vector<int>> groups;
  int n_cells() const {
    int k = 0;
    for (const auto& g : groups) k += static_cast<int>(g.size());
    return k;
  }
};

// What to do about the penalty's non-differentiability at zero.
//  Drop: cells/groups that reach (numerical) zero are frozen out of the fit;
//        the thresholds live here because they are part of the policy.
//  Perturb: epsilon is slipped inside every square root, so weights stay
//        finite and nothing is ever removed.
struct EpsilonPolicy {
  enum class Mode { Drop, Perturb };
  Mode mode = Mode::Drop;
  double epsilon = 1e-8;     // Perturb only
  double drop_tol = 1e-8;    // Drop: |beta| (cell) or group norm below this
  double weight_cap = 1e10;  // Drop: ridge weight above this saturates
};

struct PenaltyConfig {
  double lambda = 0.0;  // >= 0
  double alpha = 1.0;   // in [0,1]; 1 = lasso, 0 = group lasso
  GroupStructure structure;
  EpsilonPolicy policy;
};

// Per-cell ridge weights nu derived from the current iterate, plus
// saturation flags (Drop policy: exactly-zero cells / vanished groups give
// unbounded weights; these are reported, never a crash). Weights are clamped
// at a large finite value so downstream arithmetic stays finite.
struct RidgeWeights {
  Eigen::VectorXd nu;                // size K
  std::vector<char> cell_saturated;  // size K
  std::vector<char> group_saturated; // size m
};

// Sparse-group penalty
//   J(b) = alpha*lambda*sum_k |b_k|
//        + (1-alpha)*lambda*sum_j sqrt(D_j)*||b_(j)||_2
// over penalized cells only.
double eval_sgl_penalty(const Eigen::VectorXd& beta, const PenaltyConfig& config);

// Weights of the quadratic tangent majorizer of J at beta_t:
//   nu_k = alpha/(2|b_k|) + (1-alpha)*sqrt(D_j)/(2*||b_(j)||_2)
// (epsilon inside the roots under Perturb). Degenerate denominators under
// Drop are flagged as saturated.
RidgeWeights compute_ridge_weights(const Eigen::VectorXd& beta_t,
                                   const PenaltyConfig& config);

// Value of the majorizer at beta given the anchor beta_t:
//   Q(beta | beta_t) = lambda * sum_k nu_k beta_k^2 + J(beta_t)/2.
// The additive constant makes Q tangent: Q(beta_t|beta_t) = J(beta_t),
// because sqrt(u) <= sqrt(u_t)/2 + u/(2 sqrt(u_t)) with equality at u_t.
// Throws under Drop policy if beta_t has an exactly-zero cell (the weight
// would be infinite); use Perturb or drop the cell first.
double eval_surrogate(const Eigen::VectorXd& beta, const Eigen::VectorXd& beta_t,
                      const PenaltyConfig& config);

// The penalty the iteration actually descends: identical to
// eval_sgl_penalty under Drop; under Perturb every root carries the policy's
// epsilon, matching the weights above. Objective traces use this so the
// monotone-descent guarantee is exact rather than up to O(epsilon) noise.
double eval_sgl_penalty_smoothed(const Eigen::VectorXd& beta,
                                 const PenaltyConfig& config);

// All cells in one group per covariate row: group j covers cells
// {j*d_e .. j*d_e + d_e - 1} under the row-major (covariate, column)
// flattening used by the fitting engine.
GroupStructure row_groups(int p, int d_e);

}  // namespace countreg
