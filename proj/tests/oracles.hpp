// Independent reference implementations the fast paths are tested against.
// Everything here trades speed for obvious correctness.
#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "countreg/model_data.hpp"
#include "countreg/models.hpp"
#include "countreg/rng.hpp"

namespace oracles {

// central finite differences
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    double hk = h * (1.0 + std::abs(x(k)));
    Eigen::VectorXd xp = x, xm = x;
    xp(k) += hk;
    xm(k) -= hk;
    g(k) = (f(xp) - f(xm)) / (2.0 * hk);
  }
  return g;
}

// plain Nelder-Mead; good enough to pin a smooth low-dimensional optimum
inline Eigen::VectorXd nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                                   Eigen::VectorXd x0, int max_iter = 4000,
                                   double init_step = 0.25) {
  const int n = static_cast<int>(x0.size());
  std::vector<Eigen::VectorXd> v(n + 1, x0);
  std::vector<double> fv(n + 1);
  for (int i = 1; i <= n; ++i) v[i](i - 1) += init_step;
  for (int i = 0; i <= n; ++i) fv[i] = f(v[i]);

  auto order = [&]() {
    for (int i = 0; i <= n; ++i)
      for (int j = i + 1; j <= n; ++j)
        if (fv[j] < fv[i]) {
          std::swap(fv[i], fv[j]);
          std::swap(v[i], v[j]);
        }
  };

  for (int it = 0; it < max_iter; ++it) {
    order();
    if (std::abs(fv[n] - fv[0]) < 1e-13 * (1.0 + std::abs(fv[0]))) break;
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) centroid += v[i];
    centroid /= n;

    Eigen::VectorXd xr = centroid + (centroid - v[n]);
    double fr = f(xr);
    if (fr < fv[0]) {
      Eigen::VectorXd xe = centroid + 2.0 * (centroid - v[n]);
      double fe = f(xe);
      if (fe < fr) {
        v[n] = xe;
        fv[n] = fe;
      } else {
        v[n] = xr;
        fv[n] = fr;
      }
    } else if (fr < fv[n - 1]) {
      v[n] = xr;
      fv[n] = fr;
    } else {
      Eigen::VectorXd xc = centroid + 0.5 * (v[n] - centroid);
      double fc = f(xc);
      if (fc < fv[n]) {
        v[n] = xc;
        fv[n] = fc;
      } else {
        for (int i = 1; i <= n; ++i) {
          v[i] = v[0] + 0.5 * (v[i] - v[0]);
          fv[i] = f(v[i]);
        }
      }
    }
  }
  order();
  return v[0];
}

// multi-start wrapper: perturbs around the incumbent and keeps the best
inline Eigen::VectorXd nelder_mead_multistart(
    const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
    int restarts = 5, std::uint64_t seed = 7, int max_iter = 4000) {
  Eigen::VectorXd best = nelder_mead(f, x0, max_iter);
  double fbest = f(best);
  auto eng = countreg::rng::stream(seed, 0xBEEF);
  std::normal_distribution<double> jitter(0.0, 0.05);
  for (int r = 0; r < restarts; ++r) {
    Eigen::VectorXd start = best;
    for (Eigen::Index k = 0; k < start.size(); ++k) start(k) += jitter(eng);
    Eigen::VectorXd cand = nelder_mead(f, start, max_iter);
    double fc = f(cand);
    if (fc < fbest) {
      best = cand;
      fbest = fc;
    }
  }
  return best;
}

// Newton iteration for the Poisson-log MLE with analytic gradient/Hessian
inline Eigen::VectorXd poisson_newton_mle(const Eigen::MatrixXd& x,
                                          const Eigen::VectorXd& y,
                                          int max_iter = 200) {
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(x.cols());
  auto loglik = [&](const Eigen::VectorXd& b) {
    Eigen::VectorXd eta = x * b;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i)
      ll += y(i) * eta(i) - std::exp(eta(i));
    return ll;
  };
  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXd mu = (x * beta).array().exp();
    Eigen::VectorXd g = x.transpose() * (y - mu);
    if (g.lpNorm<Eigen::Infinity>() < 1e-12) break;
    Eigen::MatrixXd h = x.transpose() * mu.asDiagonal() * x;
    Eigen::VectorXd step = h.ldlt().solve(g);
    double ll0 = loglik(beta);
    Eigen::VectorXd cand = beta + step;
    for (int halve = 0; halve < 50 && loglik(cand) < ll0; ++halve)
      cand = 0.5 * (cand + beta);
    beta = cand;
  }
  return beta;
}

// Dirichlet-multinomial log-likelihood straight from the gamma-function form
// of the pmf (the fitting code computes it through count-indexed series).
inline double dm_loglik_lgamma(const countreg::CoefficientMatrix& coef,
                               const countreg::CountDataset& data) {
  const int n = data.n(), D = data.D();
  Eigen::MatrixXd eta = data.x.values * coef.b;
  double ll = 0.0;
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int d = 0; d < D; ++d) s += std::exp(std::clamp(eta(i, d), -30.0, 30.0));
    double tot = data.y.row_totals(i);
    double t = std::lgamma(s) - std::lgamma(s + tot) + std::lgamma(tot + 1.0);
    for (int d = 0; d < D; ++d) {
      double a = std::exp(std::clamp(eta(i, d), -30.0, 30.0));
      t += std::lgamma(a + data.y.values(i, d)) - std::lgamma(a) -
           std::lgamma(data.y.values(i, d) + 1.0);
    }
    ll += t;
  }
  return ll;
}

// a random dataset + a random evaluation point for derivative/descent tests
struct TestInstance {
  countreg::CountDataset data;
  countreg::CoefficientMatrix coef;  // evaluation point, not the truth
};

inline TestInstance random_instance(countreg::ModelKind kind, int n, int p, int D,
                                    std::uint64_t seed, double coef_scale = 0.4,
                                    double mean_total = 60.0) {
  using namespace countreg;
  auto eng = rng::stream(seed, 0xDA7A);
  std::normal_distribution<double> norm(0.0, 1.0);

  Eigen::MatrixXd covs(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) covs(i, j) = norm(eng);

  CoefficientMatrix truth = make_coef(kind, D, p);
  for (int j = 0; j <= p; ++j)
    for (int d = 0; d < truth.d_e(); ++d)
      truth.b(j, d) = 0.3 * norm(eng) * (j == 0 ? 1.0 : 1.0);

  Eigen::MatrixXd x_full(n, p + 1);
  x_full.col(0).setOnes();
  x_full.rightCols(p) = covs;

  Eigen::VectorXi totals(n);
  std::poisson_distribution<int> pois(mean_total);
  for (int i = 0; i < n; ++i) {
    int t = 0;
    while (t == 0) t = pois(eng);
    totals(i) = t;
  }

  Eigen::MatrixXi counts = sample_counts(truth, x_full, totals, rng::mix(seed));
  // NM ignores the passed totals; everything else preserves them

  TestInstance inst;
  inst.data = make_dataset(covs, counts, false);
  inst.coef = make_coef(kind, D, p);
  for (int j = 0; j <= p; ++j)
    for (int d = 0; d < inst.coef.d_e(); ++d)
      inst.coef.b(j, d) = coef_scale * norm(eng);
  return inst;
}

// analytic loglik gradient assembled from the per-column working sets; the
// derivative identity the working weights are supposed to satisfy
inline Eigen::MatrixXd working_gradient(const countreg::CoefficientMatrix& coef,
                                        const countreg::CountDataset& data,
                                        countreg::SumMode mode) {
  using namespace countreg;
  const int p = data.p();
  Eigen::MatrixXd grad(p + 1, coef.d_e());
  for (int d = 0; d < coef.d_e(); ++d) {
    ColumnWorking cw = irprr_working(coef, data, d, mode);
    Eigen::VectorXd eta = data.x.values * coef.b.col(d);
    Eigen::VectorXd smw(data.n());
    for (int i = 0; i < data.n(); ++i) {
      double e = std::clamp(eta(i), -30.0, 30.0);
      double s = cw.w(i) == 0.0 ? 0.0 : cw.w(i) * (cw.z(i) - e + 1.0);
      smw(i) = s - cw.w(i);
    }
    grad.col(d) = data.x.values.transpose() * smw;
  }
  return grad;
}

}  // namespace oracles
