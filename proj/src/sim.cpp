#include "countreg/sim.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

#include "countreg/rng.hpp"

namespace countreg {

namespace {

constexpr double nan_v = std::numeric_limits<double>::quiet_NaN();

double ratio_or_nan(int num, int den) {
  return den > 0 ? static_cast<double>(num) / den : nan_v;
}

std::uint64_t replicate_seed(std::uint64_t seed, int replicate) {
  return rng::mix(rng::mix(seed) ^ rng::mix(static_cast<std::uint64_t>(replicate) + 1));
}

}  // namespace

long round_half_even(double x) {
  double r = std::nearbyint(x);  // default FE_TONEAREST rounds half to even
  return static_cast<long>(r);
}

Eigen::MatrixXd gen_covariates(int n, int p, double rho, std::uint64_t seed) {
  if (std::abs(rho) >= 1.0) throw std::invalid_argument("need |rho| < 1");
  Eigen::MatrixXd x(n, p);
  const double tail = std::sqrt(1.0 - rho * rho);
  for (int i = 0; i < n; ++i) {
    auto eng = rng::stream(seed, rng::tag_covariates, static_cast<std::uint64_t>(i));
    std::normal_distribution<double> norm(0.0, 1.0);
    double prev = 0.0;
    for (int j = 0; j < p; ++j) {
      double z = norm(eng);
      double v = (j == 0) ? z : rho * prev + tail * z;
      x(i, j) = v;
      prev = v;
    }
  }
  return x;
}

TruthMask gen_truth(int p, int D, double f, double delta_p, double delta_D,
                    std::uint64_t seed) {
  const long n_rel = round_half_even(delta_p * p);
  const long n_tax = round_half_even(delta_D * D);
  if (n_rel < 0 || n_rel > p || n_tax < 0 || n_tax > D)
    throw std::invalid_argument("relevance fractions out of range");

  TruthMask t;
  t.nonzero = Eigen::MatrixXi::Zero(p, D);
  t.sign = Eigen::MatrixXi::Zero(p, D);
  t.beta = make_coef(ModelKind::DM, D, p);

  // choose taxa per relevant covariate (partial Fisher-Yates, seeded per row)
  for (long j = 0; j < n_rel; ++j) {
    auto eng = rng::stream(seed, rng::tag_truth_taxa, static_cast<std::uint64_t>(j));
    std::vector<int> pool(D);
    for (int d = 0; d < D; ++d) pool[d] = d;
    for (long k = 0; k < n_tax; ++k) {
      std::uniform_int_distribution<int> pick(static_cast<int>(k), D - 1);
      std::swap(pool[k], pool[pick(eng)]);
      t.nonzero(j, pool[k]) = 1;
    }
  }

  const long m = n_rel * n_tax;
  const double lo = 0.6 * f, hi = 0.9 * f;
  long k = 0;
  for (long j = 0; j < n_rel; ++j) {
    for (int d = 0; d < D; ++d) {
      if (!t.nonzero(j, d)) continue;
      double mag = (m > 1) ? lo + (hi - lo) * static_cast<double>(k) / (m - 1) : lo;
      auto eng = rng::stream(seed, rng::tag_truth_sign, static_cast<std::uint64_t>(j),
                             static_cast<std::uint64_t>(d));
      std::bernoulli_distribution flip(0.5);
      int s = flip(eng) ? -1 : 1;
      t.sign(j, d) = s;
      t.beta.b(j + 1, d) = s * mag;
      ++k;
    }
  }
  return t;
}

std::pair<CountDataset, TruthMask> gen_dataset(const ScenarioConfig& config,
                                               int replicate) {
  TruthMask truth = gen_truth(config.p, config.D, config.f, config.delta_p,
                              config.delta_D, config.seed);
  std::uint64_t rseed = replicate_seed(config.seed, replicate);
  Eigen::MatrixXd covs = gen_covariates(config.n, config.p, config.rho, rseed);

  Eigen::VectorXi totals(config.n);
  for (int i = 0; i < config.n; ++i) {
    auto eng = rng::stream(rseed, rng::tag_totals, static_cast<std::uint64_t>(i));
    std::poisson_distribution<int> pois(config.total_mean);
    int tot = 0;
    while (tot == 0) tot = pois(eng);
    totals(i) = tot;
  }

  Eigen::MatrixXd x_full(config.n, config.p + 1);
  x_full.col(0).setOnes();
  x_full.rightCols(config.p) = covs;
  Eigen::MatrixXi counts = sample_counts(truth.beta, x_full, totals, rseed);

  return {make_dataset(covs, counts, /*standardize=*/false), std::move(truth)};
}

SelectionMetrics score_selection(const TruthMask& truth,
                                 const CoefficientMatrix& b_hat, double threshold) {
  const int p = truth.nonzero.rows(), D = truth.nonzero.cols();
  if (b_hat.p() != p || b_hat.d_e() != D)
    throw std::invalid_argument("estimate shape does not match the truth mask");

  SelectionMetrics s;
  int dir_ok = 0;
  for (int j = 0; j < p; ++j) {
    bool row_true = false, row_est = false;
    for (int d = 0; d < D; ++d) {
      double v = b_hat.b(j + 1, d);
      bool est = std::abs(v) >= threshold;
      bool tru = truth.nonzero(j, d) != 0;
      row_true |= tru;
      row_est |= est;
      if (tru && est) {
        ++s.tp_within;
        if ((v > 0 ? 1 : -1) == truth.sign(j, d)) ++dir_ok;
      } else if (!tru && est) {
        ++s.fp_within;
      } else if (tru && !est) {
        ++s.fn_within;
      } else {
        ++s.tn_within;
      }
    }
    if (row_true && row_est) ++s.tp_group;
    else if (!row_true && row_est) ++s.fp_group;
    else if (row_true && !row_est) ++s.fn_group;
    else ++s.tn_group;
  }
  s.within_recall = ratio_or_nan(s.tp_within, s.tp_within + s.fn_within);
  s.within_precision = ratio_or_nan(s.tp_within, s.tp_within + s.fp_within);
  s.group_recall = ratio_or_nan(s.tp_group, s.tp_group + s.fn_group);
  s.group_precision = ratio_or_nan(s.tp_group, s.tp_group + s.fp_group);
  s.direction_accuracy = ratio_or_nan(dir_ok, s.tp_within);
  return s;
}

SelectionMetrics score_selection(const TruthMask& truth, const FitResult& fit,
                                 double threshold) {
  return score_selection(truth, fit.b_hat, threshold);
}

namespace {

Aggregate aggregate_of(const std::vector<ReplicateOutcome>& outcomes,
                       double SelectionMetrics::*field) {
  Aggregate a;
  double sum = 0.0;
  for (const auto& o : outcomes) {
    if (!o.ok) continue;
    double v = o.metrics.*field;
    if (std::isnan(v)) continue;
    sum += v;
    ++a.n_defined;
  }
  if (a.n_defined == 0) {
    a.mean = a.sd = nan_v;
    return a;
  }
  a.mean = sum / a.n_defined;
  if (a.n_defined < 2) {
    a.sd = nan_v;
    return a;
  }
  double ss = 0.0;
  for (const auto& o : outcomes) {
    if (!o.ok) continue;
    double v = o.metrics.*field;
    if (std::isnan(v)) continue;
    ss += (v - a.mean) * (v - a.mean);
  }
  a.sd = std::sqrt(ss / (a.n_defined - 1));
  return a;
}

}  // namespace

ScenarioReport run_scenario(const ScenarioConfig& config, const SearchSpec& search,
                            const FitControls& controls, const EpsilonPolicy& policy,
                            int threads) {
  ScenarioReport rep;
  rep.config = config;
  rep.replicates.resize(config.replicates);

  std::atomic<int> next{0};
  auto worker = [&]() {
    while (true) {
      int r = next.fetch_add(1);
      if (r >= config.replicates) break;
      ReplicateOutcome& out = rep.replicates[r];
      out.replicate = r;
      try {
        auto [data, truth] = gen_dataset(config, r);
        TuningResult tr = tune(ModelKind::DM, data, search, controls, policy);
        out.metrics = score_selection(truth, tr.best_fit,
                                      controls.zero_report_threshold);
        out.lambda = tr.best_lambda;
        out.alpha = tr.best_alpha;
        out.ebic_value = ebic(tr.best_fit.loglik_final, tr.best_fit.kappa,
                              config.n, config.p * config.D);
        out.kappa = tr.best_fit.kappa;
        out.ok = true;
      } catch (const std::exception& e) {
        out.ok = false;
        out.error = e.what();
      }
    }
  };

  int T = std::max(1, threads);
  if (T == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < T; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  for (const auto& o : rep.replicates)
    if (!o.ok) ++rep.failures;
  rep.group_precision = aggregate_of(rep.replicates, &SelectionMetrics::group_precision);
  rep.group_recall = aggregate_of(rep.replicates, &SelectionMetrics::group_recall);
  rep.within_precision =
      aggregate_of(rep.replicates, &SelectionMetrics::within_precision);
  rep.within_recall = aggregate_of(rep.replicates, &SelectionMetrics::within_recall);
  rep.direction_accuracy =
      aggregate_of(rep.replicates, &SelectionMetrics::direction_accuracy);
  return rep;
}

}  // namespace countreg
