#include "countreg/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "countreg/rng.hpp"

namespace countreg {

namespace {

CountDataset intercept_only(const CountDataset& data) {
  CountDataset o;
  o.x.values = Eigen::MatrixXd::Ones(data.n(), 1);
  o.y = data.y;
  return o;
}

// MLE of the intercept-only model, embedded into a full-width coefficient
// block with zero covariate rows.
CoefficientMatrix null_model(ModelKind kind, const CountDataset& data,
                             const FitControls& controls, const EpsilonPolicy& policy) {
  CountDataset d0 = intercept_only(data);
  FitControls c = controls;
  c.tol = std::min(controls.tol, 1e-10);
  c.max_iter = std::max(controls.max_iter, 300);
  c.has_initial = false;
  PenaltyConfig cfg = make_penalty(kind, 0, data.D(), 0.0, 1.0, policy);
  FitResult r = fit_count_sgl(kind, d0, cfg, c);
  CoefficientMatrix full = make_coef(kind, data.D(), data.p());
  full.b.row(0) = r.b_hat.b.row(0);
  return full;
}

}  // namespace

double ebic(double loglik_value, int kappa, int n, int K) {
  if (K < 1 || n < 1) throw std::invalid_argument("ebic: need n >= 1 and K >= 1");
  if (kappa < 0) throw std::invalid_argument("ebic: kappa must be >= 0");
  return -2.0 * loglik_value + kappa * (std::log(static_cast<double>(n)) +
                                        std::log(static_cast<double>(K)));
}

std::vector<double> lambda_probe_grid(ModelKind kind, const CountDataset& data,
                                      const FitControls& controls,
                                      const EpsilonPolicy& policy) {
  CoefficientMatrix b0 = null_model(kind, data, controls, policy);
  const int p = data.p(), de = b0.d_e();
  // score of -loglik at the null model, cell by cell
  Eigen::MatrixXd grad(p, de);
  for (int d = 0; d < de; ++d) {
    ColumnWorking cw = irprr_working(b0, data, d, SumMode::GammaDiff);
    double eta0 = b0.b(0, d);  // constant linear predictor
    for (int j = 0; j < p; ++j) {
      double g = 0.0;
      for (int i = 0; i < data.n(); ++i) {
        double s = cw.w(i) * (cw.z(i) - eta0 + 1.0);
        g += (cw.w(i) - s) * data.x.values(i, j + 1);
      }
      grad(j, d) = g;
    }
  }
  double anchor = 0.0;
  for (int j = 0; j < p; ++j) {
    anchor = std::max(anchor, grad.row(j).cwiseAbs().maxCoeff());
    anchor = std::max(anchor, grad.row(j).norm() / std::sqrt(static_cast<double>(de)));
  }
  anchor = std::max(anchor, 1e-8);
  std::vector<double> grid;
  for (int k = -4; k <= 4; ++k) grid.push_back(anchor * std::ldexp(1.0, k));
  return grid;
}

double find_lambda_max(ModelKind kind, const CountDataset& data, double alpha,
                       const std::vector<double>& probe_grid,
                       const FitControls& controls, const EpsilonPolicy& policy) {
  if (probe_grid.empty()) throw std::invalid_argument("empty probe grid");
  std::vector<double> grid = probe_grid;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  if (grid.front() <= 0) throw std::invalid_argument("probe lambdas must be > 0");

  const double cap = grid.back() * 4096.0;
  // each probe is a standalone fit: lambda_max means "smallest probed lambda
  // where a fit from scratch lands on the null model", independent of any
  // path state the caller may have in flight
  FitControls c = controls;
  c.has_initial = false;
  double lam = grid.front();
  std::size_t g = 0;
  while (true) {
    PenaltyConfig cfg = make_penalty(kind, data.p(), data.D(), lam, alpha, policy);
    FitResult fit = fit_count_sgl(kind, data, cfg, c);
    if (fit.active_cells.empty()) return lam;
    ++g;
    if (g < grid.size()) {
      lam = grid[g];
    } else {
      lam *= 2.0;
      if (lam > cap)
        throw std::runtime_error(
            "no null fit up to lambda=" + std::to_string(lam / 2.0) + " (" +
            std::to_string(fit.active_cells.size()) + " cells still active)");
    }
  }
}

TuningResult tune(ModelKind kind, const CountDataset& data, const SearchSpec& spec,
                  const FitControls& controls, const EpsilonPolicy& policy) {
  const int n = data.n();
  const int K = data.p() * effective_columns(kind, data.D());
  if (K < 1) throw std::invalid_argument("tune: model has no penalized cells");

  TuningResult out;
  double best = std::numeric_limits<double>::infinity();
  bool have_best = false;

  auto consider = [&](double lam, double alpha, const FitResult& fit) {
    TuningPoint pt;
    pt.lambda = lam;
    pt.alpha = alpha;
    pt.kappa = fit.kappa;
    pt.converged = fit.converged;
    pt.loglik = fit.loglik_final;
    pt.ebic = ebic(fit.loglik_final, fit.kappa, n, K);
    out.ebic_table.push_back(pt);
    if (!fit.converged) return;
    bool better = pt.ebic < best;
    if (!better && pt.ebic == best && have_best) {
      if (lam > out.best_lambda) better = true;
      else if (lam == out.best_lambda && alpha < out.best_alpha) better = true;
    }
    if (better || !have_best) {
      best = pt.ebic;
      out.best_lambda = lam;
      out.best_alpha = alpha;
      out.best_fit = fit;
      have_best = true;
    }
  };

  auto fit_point = [&](double lam, double alpha, const FitResult* warm) -> bool {
    FitControls c = controls;
    if (warm != nullptr) {
      c.has_initial = true;
      c.initial_b = warm->b_hat.b;
    }
    PenaltyConfig cfg = make_penalty(kind, data.p(), data.D(), lam, alpha, policy);
    try {
      FitResult fit = fit_count_sgl(kind, data, cfg, c);
      consider(lam, alpha, fit);
      return fit.converged;
    } catch (const std::exception&) {
      ++out.n_failures;
      TuningPoint pt;
      pt.lambda = lam;
      pt.alpha = alpha;
      pt.ebic = std::numeric_limits<double>::quiet_NaN();
      pt.loglik = std::numeric_limits<double>::quiet_NaN();
      pt.converged = false;
      out.ebic_table.push_back(pt);
      return false;
    }
  };

  if (spec.mode == SearchSpec::Mode::Grid) {
    if (spec.n_lambda < 2) throw std::invalid_argument("need n_lambda >= 2");
    std::vector<double> probes = lambda_probe_grid(kind, data, controls, policy);
    for (double alpha : spec.alpha_grid) {
      double lam_max = find_lambda_max(kind, data, alpha, probes, controls, policy);
      out.lambda_max_per_alpha.emplace_back(alpha, lam_max);
      FitResult prev;
      bool have_prev = false;
      for (int g = 0; g < spec.n_lambda; ++g) {
        double lam = lam_max * std::pow(spec.lambda_ratio,
                                        static_cast<double>(g) / (spec.n_lambda - 1));
        const FitResult* warm =
            (spec.warm_path && have_prev) ? &prev : nullptr;
        FitControls c = controls;
        if (warm != nullptr) {
          c.has_initial = true;
          c.initial_b = warm->b_hat.b;
        }
        PenaltyConfig cfg = make_penalty(kind, data.p(), data.D(), lam, alpha, policy);
        try {
          FitResult fit = fit_count_sgl(kind, data, cfg, c);
          consider(lam, alpha, fit);
          prev = std::move(fit);
          have_prev = true;
        } catch (const std::exception&) {
          ++out.n_failures;
          TuningPoint pt;
          pt.lambda = lam;
          pt.alpha = alpha;
          pt.ebic = std::numeric_limits<double>::quiet_NaN();
          pt.loglik = std::numeric_limits<double>::quiet_NaN();
          pt.converged = false;
          out.ebic_table.push_back(pt);
        }
      }
    }
  } else {
    double lo = find_lambda_max(kind, data, spec.alpha_min,
                                lambda_probe_grid(kind, data, controls, policy),
                                controls, policy);
    double hi = find_lambda_max(kind, data, spec.alpha_max,
                                lambda_probe_grid(kind, data, controls, policy),
                                controls, policy);
    double lam_top = std::max(lo, hi);
    double lam_bot = spec.lambda_ratio * lam_top;
    out.lambda_max_per_alpha.emplace_back(spec.alpha_min, lo);
    out.lambda_max_per_alpha.emplace_back(spec.alpha_max, hi);
    auto eng = rng::stream(spec.seed, rng::tag_tuning);
    std::uniform_real_distribution<double> ua(spec.alpha_min, spec.alpha_max);
    std::uniform_real_distribution<double> ul(std::log(lam_bot), std::log(lam_top));
    for (int k = 0; k < spec.n_draws; ++k) {
      double alpha = ua(eng);
      double lam = std::exp(ul(eng));
      fit_point(lam, alpha, nullptr);
    }
  }

  if (!have_best)
    throw std::runtime_error("tuning failed: no converged fit among " +
                             std::to_string(out.ebic_table.size()) + " points (" +
                             std::to_string(out.n_failures) + " hard failures)");
  if (spec.mode == SearchSpec::Mode::Grid) {
    for (const auto& [a, lm] : out.lambda_max_per_alpha)
      if (a == out.best_alpha) out.lambda_max = lm;
  } else {
    out.lambda_max = std::max(out.lambda_max_per_alpha[0].second,
                              out.lambda_max_per_alpha[1].second);
  }
  return out;
}

}  // namespace countreg
