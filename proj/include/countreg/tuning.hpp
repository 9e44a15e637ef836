#pragma once

#include <cstdint>
#include <vector>

#include "countreg/engine.hpp"

namespace countreg {

struct SearchSpec {
  enum class Mode { Grid, Random };
  Mode mode = Mode::Grid;
  // Grid mode: full cross of alpha_grid with a per-alpha descending lambda
  // path of n_lambda log-spaced points from lambda_max down to
  // lambda_ratio * lambda_max.
  std::vector<double> alpha_grid = {0.1, 0.3, 0.5, 0.7, 0.9};
  int n_lambda = 100;
  double lambda_ratio = 1e-3;
  // Random mode: n_draws points, alpha uniform on [alpha_min, alpha_max],
  // lambda log-uniform between the same bounds as the grid; fits are
  // independent (cold starts), so evaluation order cannot matter.
  int n_draws = 100;
  double alpha_min = 0.1;
  double alpha_max = 0.9;
  std::uint64_t seed = 0;
  // Chain grid fits along the path (previous solution, with dropped cells
  // re-seeded, initializes the next fit). Off by default: a fit started
  // from the dense unpenalized state sheds cells roughly in magnitude
  // order and the no-re-entry drop rule makes each shed permanent, so it
  // settles sparse; a chained start instead re-admits every re-seeded cell
  // whose residual score clears the penalty threshold, which on flat
  // likelihoods parks many noise cells at small nonzero stationary values
  // and inflates kappa along the whole path.
  bool warm_path = false;
};

struct TuningPoint {
  double lambda = 0.0;
  double alpha = 0.0;
  double ebic = 0.0;
  double loglik = 0.0;
  int kappa = 0;
  bool converged = false;
};

struct TuningResult {
  double best_lambda = 0.0;
  double best_alpha = 0.0;
  double lambda_max = 0.0;  // for the selected alpha (Random: shared bound)
  FitResult best_fit;
  std::vector<TuningPoint> ebic_table;
  std::vector<std::pair<double, double>> lambda_max_per_alpha;
  int n_failures = 0;
};

// Extended BIC: -2*loglik + kappa*(log n + log K), K = total penalized cells.
// kappa counts nonzero penalized cells only; intercepts are free.
double ebic(double loglik_value, int kappa, int n, int K);

// Ascending probe of the null point of the path: fit standalone at each probe
// lambda and return the smallest one whose fit has no active penalized cell.
// If even the largest probe is not null the grid is extended geometrically
// (factor 2) up to a cap before giving up.
double find_lambda_max(ModelKind kind, const CountDataset& data, double alpha,
                       const std::vector<double>& probe_grid,
                       const FitControls& controls, const EpsilonPolicy& policy = {});

// Default probes: centered on the largest penalized-cell score of the
// intercept-only model (the lasso-side stationarity bound), spanning 2^-4 to
// 2^4 around it.
std::vector<double> lambda_probe_grid(ModelKind kind, const CountDataset& data,
                                      const FitControls& controls,
                                      const EpsilonPolicy& policy = {});

// Whole-path search returning the EBIC-best fit. Ties prefer the larger
// lambda, then the smaller alpha; non-converged fits never win. Throws if no
// point converged.
TuningResult tune(ModelKind kind, const CountDataset& data, const SearchSpec& spec,
                  const FitControls& controls, const EpsilonPolicy& policy = {});

}  // namespace countreg
