#include <doctest.h>

#include <cmath>
#include <random>

#include "countreg/glm.hpp"
#include "countreg/rng.hpp"
#include "oracles.hpp"

using namespace countreg;

namespace {

struct GlmData {
  Eigen::MatrixXd x;  // n x (p+1), intercept first
  Eigen::VectorXd y;
};

GlmData poisson_data(int n, int p, std::uint64_t seed, double scale = 0.5) {
  auto eng = rng::stream(seed, 0x61);
  std::normal_distribution<double> norm(0.0, 1.0);
  GlmData d;
  d.x.resize(n, p + 1);
  d.x.col(0).setOnes();
  Eigen::VectorXd truth(p + 1);
  truth(0) = 1.0;
  for (int j = 1; j <= p; ++j) truth(j) = scale * norm(eng);
  for (int i = 0; i < n; ++i)
    for (int j = 1; j <= p; ++j) d.x(i, j) = norm(eng);
  d.y.resize(n);
  for (int i = 0; i < n; ++i) {
    std::poisson_distribution<int> pois(std::exp((d.x.row(i) * truth)(0)));
    d.y(i) = pois(eng);
  }
  return d;
}

PenaltyConfig glm_penalty(int p, double lambda, double alpha,
                          EpsilonPolicy::Mode mode,
                          std::vector<std::vector<int>> groups = {}) {
  PenaltyConfig c;
  c.lambda = lambda;
  c.alpha = alpha;
  if (groups.empty()) {
    for (int j = 0; j < p; ++j) c.structure.groups.push_back({j});
  } else {
    c.structure.groups = std::move(groups);
  }
  c.policy.mode = mode;
  return c;
}

}  // namespace

TEST_CASE("family plumbing") {
  GlmFamily pois = GlmFamily::poisson_log();
  GlmFamily binom = GlmFamily::binomial_logit();
  for (double mu : {0.05, 0.4, 0.9}) {
    CHECK(pois.inv_link(pois.link(mu)) == doctest::Approx(mu).epsilon(1e-12));
    CHECK(binom.inv_link(binom.link(mu)) == doctest::Approx(mu).epsilon(1e-12));
  }
  CHECK(pois.variance(3.0) == 3.0);
  CHECK(binom.variance(0.25) == doctest::Approx(0.1875).epsilon(1e-15));
  CHECK(pois.loglik_term(2.0, 0.0) ==
        doctest::Approx(-1.0 - std::log(2.0)).epsilon(1e-14));
  CHECK(binom.loglik_term(1.0, 0.0) ==
        doctest::Approx(-std::log(2.0)).epsilon(1e-14));
  // softplus stays finite far into both tails
  CHECK(std::isfinite(binom.loglik_term(0.0, 200.0)));
  CHECK(std::isfinite(binom.loglik_term(1.0, -200.0)));
}

TEST_CASE("poisson working quantities at beta = 0") {
  Eigen::MatrixXd x(3, 2);
  x << 1, 0.5, 1, -0.5, 1, 0.0;
  Eigen::VectorXd y(3);
  y << 4, 0, 1;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(2);
  // only the intercept column matters at beta = 0: eta = 0, mu = 1
  Eigen::MatrixXd x0 = x;
  x0.col(1).setZero();
  WorkingQuantities wq = glm_working(GlmFamily::poisson_log(), x0, y, beta);
  for (int i = 0; i < 3; ++i) {
    CHECK(wq.gamma(i) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(wq.z(i) == doctest::Approx(y(i) - 1.0).epsilon(1e-14));
  }
  CHECK(wq.clamp_events == 0);
}

TEST_CASE("weighted ridge solve") {
  Eigen::MatrixXd x(4, 2);
  x << 1, 0, 1, 0, 0, 1, 0, 1;
  Eigen::VectorXd gamma = Eigen::VectorXd::Ones(4);
  Eigen::VectorXd z(4);
  z << 2, 2, 1, 1;
  Eigen::VectorXd pen(2);
  pen << 0, 2;
  Eigen::VectorXd b = solve_weighted_ridge(x, gamma, z, pen);
  CHECK(b(0) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(b(1) == doctest::Approx(0.5).epsilon(1e-14));

  CHECK_THROWS_AS(solve_weighted_ridge(x, gamma, z, Eigen::VectorXd::Zero(3)),
                  std::invalid_argument);

  Eigen::MatrixXd sing(2, 2);
  sing << 1, 1, 1, 1;
  CHECK_THROWS_WITH_AS(
      solve_weighted_ridge(sing, Eigen::VectorXd::Ones(2), Eigen::VectorXd::Ones(2),
                           Eigen::VectorXd::Zero(2)),
      doctest::Contains("eigenvalue"), std::runtime_error);
}

TEST_CASE("one reweighted solve equals one newton step for poisson") {
  GlmData d = poisson_data(25, 3, 91);
  auto eng = rng::stream(91, 0x21);
  std::normal_distribution<double> norm(0.0, 0.3);
  Eigen::VectorXd beta(4);
  for (int j = 0; j < 4; ++j) beta(j) = norm(eng);

  WorkingQuantities wq = glm_working(GlmFamily::poisson_log(), d.x, d.y, beta);
  Eigen::VectorXd irls =
      solve_weighted_ridge(d.x, wq.gamma, wq.z, Eigen::VectorXd::Zero(4));

  Eigen::VectorXd mu = (d.x * beta).array().exp();
  Eigen::MatrixXd h = d.x.transpose() * mu.asDiagonal() * d.x;
  Eigen::VectorXd newton = beta + h.ldlt().solve(d.x.transpose() * (d.y - mu));
  for (int j = 0; j < 4; ++j)
    CHECK(irls(j) == doctest::Approx(newton(j)).epsilon(1e-10));
}

TEST_CASE("unpenalized fit reaches the newton mle") {
  GlmData d = poisson_data(60, 3, 17);
  Eigen::VectorXd mle = oracles::poisson_newton_mle(d.x, d.y);

  FitControls ctl;
  PenaltyConfig cfg = glm_penalty(3, 0.0, 1.0, EpsilonPolicy::Mode::Perturb);
  GlmFitResult res = fit_glm_sgl(d.x, d.y, GlmFamily::poisson_log(), cfg, ctl);
  CHECK(res.converged);
  for (int j = 0; j < 4; ++j) CHECK(std::abs(res.beta(j) - mle(j)) <= 1e-6);
}

TEST_CASE("penalized fit: strong lasso keeps only the intercept") {
  GlmData d = poisson_data(80, 4, 23);
  double ybar = d.y.mean();
  for (auto mode : {EpsilonPolicy::Mode::Drop, EpsilonPolicy::Mode::Perturb}) {
    FitControls ctl;
    PenaltyConfig cfg = glm_penalty(4, 1e5, 1.0, mode);
    GlmFitResult res = fit_glm_sgl(d.x, d.y, GlmFamily::poisson_log(), cfg, ctl);
    CHECK(res.active_set.empty());
    CHECK(res.beta.tail(4).isZero());
    CHECK(res.beta(0) == doctest::Approx(std::log(ybar)).epsilon(1e-5));
  }
}

TEST_CASE("objective trace is monotone under the smoothed policy") {
  for (std::uint64_t seed : {31u, 32u, 33u}) {
    GlmData d = poisson_data(50, 6, seed);
    FitControls ctl;
    PenaltyConfig cfg = glm_penalty(6, 2.0, 0.5, EpsilonPolicy::Mode::Perturb,
                                    {{0, 1, 2}, {3, 4, 5}});
    GlmFitResult res = fit_glm_sgl(d.x, d.y, GlmFamily::poisson_log(), cfg, ctl);
    REQUIRE(res.objective_trace.size() >= 2);
    for (std::size_t i = 1; i < res.objective_trace.size(); ++i)
      CHECK(res.objective_trace[i] <= res.objective_trace[i - 1] + 1e-8);
  }
}

TEST_CASE("binomial fit separates a noisy threshold rule") {
  auto eng = rng::stream(3, 0xB1);
  std::normal_distribution<double> norm(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  int n = 200;
  Eigen::MatrixXd x(n, 3);
  x.col(0).setOnes();
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    x(i, 1) = norm(eng);
    x(i, 2) = norm(eng);
    double pr = 1.0 / (1.0 + std::exp(-(2.0 * x(i, 1))));  // x2 is noise
    y(i) = unif(eng) < pr ? 1.0 : 0.0;
  }
  // somewhere on this grid the lasso keeps the real covariate and only it
  FitControls ctl;
  bool separated = false;
  for (double lambda : {8.0, 12.0, 16.0, 24.0, 32.0}) {
    PenaltyConfig cfg = glm_penalty(2, lambda, 1.0, EpsilonPolicy::Mode::Drop);
    GlmFitResult res = fit_glm_sgl(x, y, GlmFamily::binomial_logit(), cfg, ctl);
    CHECK(res.converged);
    if (res.active_set == std::vector<int>{1} && res.beta(1) > 0.0 &&
        res.beta(2) == 0.0) {
      separated = true;
      break;
    }
  }
  CHECK(separated);
}

TEST_CASE("warm starts revive dropped cells") {
  GlmData d = poisson_data(70, 3, 47, 0.8);
  FitControls ctl;
  PenaltyConfig strong = glm_penalty(3, 1e5, 1.0, EpsilonPolicy::Mode::Drop);
  GlmFitResult null_fit =
      fit_glm_sgl(d.x, d.y, GlmFamily::poisson_log(), strong, ctl);
  REQUIRE(null_fit.active_set.empty());

  FitControls warm = ctl;
  warm.has_initial = true;
  warm.initial_b = null_fit.beta;
  PenaltyConfig weak = glm_penalty(3, 0.01, 1.0, EpsilonPolicy::Mode::Drop);
  GlmFitResult res = fit_glm_sgl(d.x, d.y, GlmFamily::poisson_log(), weak, warm);
  CHECK(!res.active_set.empty());  // zeros in the start were re-seeded

  Eigen::VectorXd mle = oracles::poisson_newton_mle(d.x, d.y);
  for (int j : res.active_set)
    CHECK(res.beta(j) == doctest::Approx(mle(j)).epsilon(0.05));
}

TEST_CASE("more covariates than rows still solves") {
  GlmData d = poisson_data(6, 10, 53);
  FitControls ctl;
  PenaltyConfig cfg = glm_penalty(10, 0.5, 0.5, EpsilonPolicy::Mode::Perturb);
  GlmFitResult res = fit_glm_sgl(d.x, d.y, GlmFamily::poisson_log(), cfg, ctl);
  CHECK(std::isfinite(res.objective_trace.back()));
  for (std::size_t i = 1; i < res.objective_trace.size(); ++i)
    CHECK(res.objective_trace[i] <= res.objective_trace[i - 1] + 1e-8);
}

TEST_CASE("group structure must cover the penalized cells") {
  GlmData d = poisson_data(20, 3, 59);
  FitControls ctl;
  PenaltyConfig cfg = glm_penalty(2, 1.0, 0.5, EpsilonPolicy::Mode::Drop);
  CHECK_THROWS_AS(fit_glm_sgl(d.x, d.y, GlmFamily::poisson_log(), cfg, ctl),
                  std::invalid_argument);
}
