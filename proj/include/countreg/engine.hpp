#pragma once

#include <vector>

#include "countreg/glm.hpp"
#include "countreg/models.hpp"
#include "countreg/penalty.hpp"

namespace countreg {

struct DropEvent {
  int iteration = 0;
  bool is_group = false;
  int index = 0;  // covariate row (group) or flat cell id
};

struct FitResult {
  CoefficientMatrix b_hat;  // dropped / sub-threshold cells are exact 0
  std::vector<double> objective_trace;
  double loglik_final = 0.0;
  std::vector<int> active_groups;  // covariate rows (0-based) with any active cell
  std::vector<int> active_cells;   // flat (row-major) penalized cell ids
  int kappa = 0;                   // |active_cells|
  bool converged = false;
  int iterations = 0;
  long clamp_events = 0;
  std::vector<DropEvent> drop_events;
};

// Exact penalized objective: -loglik + sparse-group penalty over the
// flattened penalized cells.
double objective(const CoefficientMatrix& coef, const CountDataset& data,
                 const PenaltyConfig& config, SumMode mode = SumMode::Direct);

// Block-coordinate MM fit of the penalized count model. Every outer
// iteration sweeps the coefficient columns; each column solves one weighted
// Poisson ridge system whose weights majorize both the likelihood and the
// penalty at the sweep's anchor point, then backtracks until the column
// surrogate has really decreased. MN/DM/GDM columns update Jacobi-style from
// the sweep anchor; NM refreshes its overdispersion column first and lets
// the category columns see the new value. Under Drop policy, cells/groups
// hitting zero are frozen out (recorded in drop_events) and never re-enter
// within the fit. The trace records the exact objective each sweep; under
// Perturb an extra sweep-level backtrack keeps it non-increasing even though
// the iteration formally descends the epsilon-smoothed objective.
FitResult fit_count_sgl(ModelKind kind, const CountDataset& data,
                        const PenaltyConfig& config, const FitControls& controls);

struct ActiveSummary {
  std::vector<int> groups;
  std::vector<int> cells;
  Eigen::MatrixXi signs;  // p x d_e in {-1, 0, +1}
};

ActiveSummary extract_active(const CoefficientMatrix& coef, double threshold);

// Convenience: penalty config with the model's row groups.
PenaltyConfig make_penalty(ModelKind kind, int p, int D, double lambda,
                           double alpha, const EpsilonPolicy& policy = {});

}  // namespace countreg
