#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "countreg/tuning.hpp"

namespace countreg {

// Synthetic-benchmark scenario: n rows of AR(1)-correlated covariates, a
// fixed sparse truth with delta_p * p relevant covariates each touching
// delta_D * D taxa, and Dirichlet-multinomial counts at sequencing depth
// total_mean per row.
struct ScenarioConfig {
  int n = 100;
  int p = 25;
  int D = 7;
  double f = 0.8;        // effect-size level; magnitudes span [0.6f, 0.9f]
  double delta_p = 0.1;
  double delta_D = 0.25;
  double rho = 0.4;
  double total_mean = 5000.0;
  int replicates = 20;
  std::uint64_t seed = 1;
};

struct TruthMask {
  Eigen::MatrixXi nonzero;  // p x D
  Eigen::MatrixXi sign;     // p x D
  CoefficientMatrix beta;   // generating coefficients (DM), intercepts 0
};

// Selection-accuracy contingency at a magnitude threshold. Ratios with an
// empty denominator are NaN and reported as missing, never as 0 or 1.
struct SelectionMetrics {
  int tp_within = 0, fp_within = 0, fn_within = 0, tn_within = 0;
  int tp_group = 0, fp_group = 0, fn_group = 0, tn_group = 0;
  double group_precision = 0, group_recall = 0;
  double within_precision = 0, within_recall = 0;
  double direction_accuracy = 0;
};

// Rows drawn i.i.d. from N(0, Sigma), Sigma_jk = rho^|j-k|, realized by the
// AR(1) recursion (the Cholesky transport of independent normals). Row i
// owns stream (seed, row), so the matrix is identical however rows are
// scheduled.
Eigen::MatrixXd gen_covariates(int n, int p, double rho, std::uint64_t seed);

// Fixed truth for a scenario: the first round_half_even(delta_p * p)
// covariates are relevant; each touches round_half_even(delta_D * D) taxa
// drawn without replacement (seeded); magnitudes are evenly spaced over
// [0.6f, 0.9f] in row-major traversal order of the selected cells, with
// independent equiprobable signs.
TruthMask gen_truth(int p, int D, double f, double delta_p, double delta_D,
                    std::uint64_t seed);

long round_half_even(double x);

// Covariates + Dirichlet-multinomial counts for one replicate. Totals are
// Poisson(total_mean), redrawn while zero. The truth depends only on the
// scenario seed; the data streams extend it with the replicate index.
std::pair<CountDataset, TruthMask> gen_dataset(const ScenarioConfig& config,
                                               int replicate);

SelectionMetrics score_selection(const TruthMask& truth,
                                 const CoefficientMatrix& b_hat, double threshold);
SelectionMetrics score_selection(const TruthMask& truth, const FitResult& fit,
                                 double threshold);

struct ReplicateOutcome {
  int replicate = 0;
  bool ok = false;
  std::string error;
  SelectionMetrics metrics;
  double lambda = 0, alpha = 0, ebic_value = 0;
  int kappa = 0;
};

struct Aggregate {
  double mean = 0, sd = 0;  // NaN when undefined
  int n_defined = 0;
};

struct ScenarioReport {
  ScenarioConfig config;
  std::vector<ReplicateOutcome> replicates;
  Aggregate group_precision, group_recall, within_precision, within_recall,
      direction_accuracy;
  int failures = 0;
};

// Tune + score every replicate (threaded over replicates; results are
// byte-stable across thread counts because each replicate's randomness is
// keyed by its index) and aggregate mean/SD over the defined values.
ScenarioReport run_scenario(const ScenarioConfig& config, const SearchSpec& search,
                            const FitControls& controls, const EpsilonPolicy& policy,
                            int threads);

}  // namespace countreg
