#include "countreg/penalty.hpp"

#include <cmath>
#include <stdexcept>

namespace countreg {

namespace {

constexpr double huge_weight = 1e30;

void check_config(const Eigen::Index k, const PenaltyConfig& config) {
  if (config.lambda < 0) throw std::invalid_argument("lambda must be >= 0");
  if (config.alpha < 0 || config.alpha > 1)
    throw std::invalid_argument("alpha must be in [0,1]");
  if (config.structure.n_cells() != k)
    throw std::invalid_argument("group structure covers " +
                                std::to_string(config.structure.n_cells()) +
                                " cells but beta has " + std::to_string(k));
}

}  // namespace

double eval_sgl_penalty(const Eigen::VectorXd& beta, const PenaltyConfig& config) {
  check_config(beta.size(), config);
  const double a = config.alpha;
  double lasso = 0.0, group = 0.0;
  for (const auto& g : config.structure.groups) {
    double ss = 0.0;
    for (int k : g) {
      lasso += std::abs(beta(k));
      ss += beta(k) * beta(k);
    }
    group += std::sqrt(static_cast<double>(g.size())) * std::sqrt(ss);
  }
  return config.lambda * (a * lasso + (1.0 - a) * group);
}

RidgeWeights compute_ridge_weights(const Eigen::VectorXd& beta_t,
                                   const PenaltyConfig& config) {
  check_config(beta_t.size(), config);
  const double a = config.alpha;
  const auto& pol = config.policy;
  const bool perturb = pol.mode == EpsilonPolicy::Mode::Perturb;
  const double e2 = perturb ? pol.epsilon * pol.epsilon : 0.0;

  RidgeWeights w;
  w.nu = Eigen::VectorXd::Zero(beta_t.size());
  w.cell_saturated.assign(beta_t.size(), 0);
  w.group_saturated.assign(config.structure.groups.size(), 0);

  for (std::size_t j = 0; j < config.structure.groups.size(); ++j) {
    const auto& g = config.structure.groups[j];
    double ss = 0.0;
    for (int k : g) ss += beta_t(k) * beta_t(k);
    const double gnorm = std::sqrt(ss + e2);
    const double rootd = std::sqrt(static_cast<double>(g.size()));
    double gterm;
    if ((1.0 - a) == 0.0) {
      gterm = 0.0;
    } else if (gnorm * huge_weight <= (1.0 - a) * rootd) {
      gterm = huge_weight;
      w.group_saturated[j] = 1;
    } else {
      gterm = (1.0 - a) * rootd / (2.0 * gnorm);
      if (gterm > pol.weight_cap && !perturb) w.group_saturated[j] = 1;
    }
    for (int k : g) {
      const double cnorm = std::sqrt(beta_t(k) * beta_t(k) + e2);
      double cterm;
      if (a == 0.0) {
        cterm = 0.0;
      } else if (cnorm * huge_weight <= a) {
        cterm = huge_weight;
        w.cell_saturated[k] = 1;
      } else {
        cterm = a / (2.0 * cnorm);
        if (cterm > pol.weight_cap && !perturb) w.cell_saturated[k] = 1;
      }
      w.nu(k) = std::min(cterm + gterm, huge_weight);
    }
  }
  return w;
}

double eval_surrogate(const Eigen::VectorXd& beta, const Eigen::VectorXd& beta_t,
                      const PenaltyConfig& config) {
  if (beta.size() != beta_t.size())
    throw std::invalid_argument("beta and beta_t sizes differ");
  RidgeWeights w = compute_ridge_weights(beta_t, config);
  if (config.policy.mode == EpsilonPolicy::Mode::Drop) {
    for (Eigen::Index k = 0; k < beta_t.size(); ++k)
      if (beta_t(k) == 0.0 && config.alpha > 0.0)
        throw std::domain_error("surrogate undefined: cell " + std::to_string(k) +
                                " of beta_t is exactly zero under Drop policy");
    for (std::size_t j = 0; j < w.group_saturated.size(); ++j)
      if (w.group_saturated[j] && config.alpha < 1.0)
        throw std::domain_error("surrogate undefined: group " + std::to_string(j) +
                                " of beta_t has zero norm under Drop policy");
  }
  double quad = 0.0;
  for (Eigen::Index k = 0; k < beta.size(); ++k) quad += w.nu(k) * beta(k) * beta(k);
  return config.lambda * quad + 0.5 * eval_sgl_penalty(beta_t, config);
}

double eval_sgl_penalty_smoothed(const Eigen::VectorXd& beta,
                                 const PenaltyConfig& config) {
  if (config.policy.mode == EpsilonPolicy::Mode::Drop)
    return eval_sgl_penalty(beta, config);
  check_config(beta.size(), config);
  const double a = config.alpha;
  const double e2 = config.policy.epsilon * config.policy.epsilon;
  double lasso = 0.0, group = 0.0;
  for (const auto& g : config.structure.groups) {
    double ss = 0.0;
    for (int k : g) {
      lasso += std::sqrt(beta(k) * beta(k) + e2);
      ss += beta(k) * beta(k);
    }
    group += std::sqrt(static_cast<double>(g.size())) * std::sqrt(ss + e2);
  }
  return config.lambda * (a * lasso + (1.0 - a) * group);
}

GroupStructure row_groups(int p, int d_e) {
  GroupStructure s;
  s.groups.resize(p);
  for (int j = 0; j < p; ++j) {
    s.groups[j].resize(d_e);
    for (int d = 0; d < d_e; ++d) s.groups[j][d] = j * d_e + d;
  }
  return s;
}

}  // namespace countreg
