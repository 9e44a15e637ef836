#include "countreg/models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "countreg/rng.hpp"

namespace countreg {

namespace {

constexpr double eta_clamp = 30.0;

double clamp_eta(double eta, long* events) {
  if (eta > eta_clamp) {
    if (events) ++*events;
    return eta_clamp;
  }
  if (eta < -eta_clamp) {
    if (events) ++*events;
    return -eta_clamp;
  }
  return eta;
}

Eigen::MatrixXd linear_predictors(const CoefficientMatrix& coef,
                                  const Eigen::MatrixXd& x, long* clamp_events) {
  Eigen::MatrixXd eta = x * coef.b;
  for (Eigen::Index i = 0; i < eta.rows(); ++i)
    for (Eigen::Index c = 0; c < eta.cols(); ++c)
      eta(i, c) = clamp_eta(eta(i, c), clamp_events);
  return eta;
}

// suffix sums zeta(i,d) = sum_{k >= d} y_ik, 0-based d
Eigen::MatrixXi suffix_totals(const Eigen::MatrixXi& y) {
  Eigen::MatrixXi z = y;
  for (int d = static_cast<int>(y.cols()) - 2; d >= 0; --d)
    z.col(d) += z.col(d + 1);
  return z;
}

double log_multinomial_coef(const Eigen::MatrixXi& y, int i) {
  double m = std::lgamma(static_cast<double>(y.row(i).sum()) + 1.0);
  for (Eigen::Index d = 0; d < y.cols(); ++d)
    m -= std::lgamma(static_cast<double>(y(i, d)) + 1.0);
  return m;
}

void check_shapes(const CoefficientMatrix& coef, const CountDataset& data) {
  if (coef.D != data.D())
    throw std::invalid_argument("coefficient block is for D=" +
                                std::to_string(coef.D) + " categories, data has " +
                                std::to_string(data.D()));
  if (coef.b.rows() != data.p() + 1)
    throw std::invalid_argument("coefficient rows do not match design columns");
  if (coef.d_e() != effective_columns(coef.kind, coef.D))
    throw std::invalid_argument("coefficient column count is wrong for the model");
}

}  // namespace

ModelKind parse_model_kind(const std::string& name) {
  if (name == "mn") return ModelKind::MN;
  if (name == "dm") return ModelKind::DM;
  if (name == "nm") return ModelKind::NM;
  if (name == "gdm") return ModelKind::GDM;
  throw std::invalid_argument("unknown model '" + name + "' (expected mn|dm|nm|gdm)");
}

std::string model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::MN: return "mn";
    case ModelKind::DM: return "dm";
    case ModelKind::NM: return "nm";
    case ModelKind::GDM: return "gdm";
  }
  return "?";
}

int effective_columns(ModelKind kind, int D) {
  switch (kind) {
    case ModelKind::MN: return D - 1;
    case ModelKind::DM: return D;
    case ModelKind::NM: return D + 1;
    case ModelKind::GDM: return 2 * (D - 1);
  }
  return 0;
}

std::vector<std::string> column_roles(ModelKind kind, int D) {
  std::vector<std::string> roles;
  switch (kind) {
    case ModelKind::MN:
      for (int d = 1; d < D; ++d) roles.push_back("beta[" + std::to_string(d) + "]");
      break;
    case ModelKind::DM:
      for (int d = 1; d <= D; ++d) roles.push_back("beta[" + std::to_string(d) + "]");
      break;
    case ModelKind::NM:
      roles.push_back("beta");
      for (int d = 1; d <= D; ++d) roles.push_back("alpha[" + std::to_string(d) + "]");
      break;
    case ModelKind::GDM:
      for (int d = 1; d < D; ++d) roles.push_back("alpha[" + std::to_string(d) + "]");
      for (int d = 1; d < D; ++d) roles.push_back("beta[" + std::to_string(d) + "]");
      break;
  }
  return roles;
}

CoefficientMatrix make_coef(ModelKind kind, int D, int p) {
  CoefficientMatrix c;
  c.kind = kind;
  c.D = D;
  c.b = Eigen::MatrixXd::Zero(p + 1, effective_columns(kind, D));
  return c;
}

Eigen::VectorXd flatten_cells(const CoefficientMatrix& coef) {
  const int p = coef.p(), de = coef.d_e();
  Eigen::VectorXd v(p * de);
  for (int j = 0; j < p; ++j)
    for (int d = 0; d < de; ++d) v(j * de + d) = coef.b(j + 1, d);
  return v;
}

void unflatten_cells(const Eigen::VectorXd& cells, CoefficientMatrix* coef) {
  const int p = coef->p(), de = coef->d_e();
  if (cells.size() != static_cast<Eigen::Index>(p) * de)
    throw std::invalid_argument("flattened cell vector has the wrong length");
  for (int j = 0; j < p; ++j)
    for (int d = 0; d < de; ++d) coef->b(j + 1, d) = cells(j * de + d);
}

GroupStructure model_row_groups(ModelKind kind, int p, int D) {
  return row_groups(p, effective_columns(kind, D));
}

double loglik(const CoefficientMatrix& coef, const CountDataset& data, SumMode mode) {
  check_shapes(coef, data);
  const int n = data.n(), D = data.D();
  const Eigen::MatrixXi& y = data.y.values;
  Eigen::MatrixXd eta = linear_predictors(coef, data.x.values, nullptr);
  double ll = 0.0;

  switch (coef.kind) {
    case ModelKind::MN: {
      for (int i = 0; i < n; ++i) {
        double m = 0.0;  // reference category contributes eta = 0
        for (int d = 0; d < D - 1; ++d) m = std::max(m, eta(i, d));
        double se = std::exp(-m);
        for (int d = 0; d < D - 1; ++d) se += std::exp(eta(i, d) - m);
        double lse = m + std::log(se);
        double t = 0.0;
        for (int d = 0; d < D - 1; ++d) t += y(i, d) * eta(i, d);
        ll += t - data.y.row_totals(i) * lse + log_multinomial_coef(y, i);
      }
      break;
    }
    case ModelKind::DM: {
      for (int i = 0; i < n; ++i) {
        double s = 0.0, t = 0.0;
        for (int d = 0; d < D; ++d) {
          double a = std::exp(eta(i, d));
          s += a;
          t += sum_log(a, y(i, d), mode);
        }
        ll += t - sum_log(s, data.y.row_totals(i), mode) + log_multinomial_coef(y, i);
      }
      break;
    }
    case ModelKind::NM: {
      for (int i = 0; i < n; ++i) {
        double r = std::exp(eta(i, 0));
        double big_a = 0.0, t = 0.0;
        for (int d = 0; d < D; ++d) {
          big_a += std::exp(eta(i, d + 1));
          t += y(i, d) * eta(i, d + 1) - std::lgamma(y(i, d) + 1.0);
        }
        long tot = data.y.row_totals(i);
        ll += sum_log(r, tot, mode) - (r + tot) * std::log1p(big_a) + t;
      }
      break;
    }
    case ModelKind::GDM: {
      Eigen::MatrixXi zeta = suffix_totals(y);
      for (int i = 0; i < n; ++i) {
        double t = 0.0;
        for (int d = 0; d < D - 1; ++d) {
          double a = std::exp(eta(i, d));
          double b = std::exp(eta(i, D - 1 + d));
          t += sum_log(a, y(i, d), mode) + sum_log(b, zeta(i, d + 1), mode) -
               sum_log(a + b, zeta(i, d), mode);
        }
        ll += t + log_multinomial_coef(y, i);
      }
      break;
    }
  }
  return ll;
}

ColumnWorking irprr_working(const CoefficientMatrix& coef, const CountDataset& data,
                            int d, SumMode mode) {
  check_shapes(coef, data);
  const int n = data.n(), D = data.D();
  if (d < 0 || d >= coef.d_e())
    throw std::invalid_argument("column index out of range");
  const Eigen::MatrixXi& y = data.y.values;

  ColumnWorking cw;
  cw.w.resize(n);
  cw.z.resize(n);
  Eigen::MatrixXd eta = linear_predictors(coef, data.x.values, &cw.clamp_events);

  switch (coef.kind) {
    case ModelKind::MN: {
      // tangent weights need the reference category in the normalizer:
      // u_i = 1 + sum_d exp(eta_id)
      for (int i = 0; i < n; ++i) {
        double u = 1.0;
        for (int c = 0; c < D - 1; ++c) u += std::exp(eta(i, c));
        double w = std::exp(eta(i, d)) * data.y.row_totals(i) / u;
        cw.w(i) = w;
        cw.z(i) = eta(i, d) + (y(i, d) - w) / w;
      }
      break;
    }
    case ModelKind::DM: {
      for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int c = 0; c < D; ++c) s += std::exp(eta(i, c));
        double a = std::exp(eta(i, d));
        double w = a * sum_reciprocal(s, data.y.row_totals(i), mode);
        double sv = a * sum_reciprocal(a, y(i, d), mode);
        cw.w(i) = w;
        cw.z(i) = eta(i, d) + (sv - w) / w;
      }
      break;
    }
    case ModelKind::NM: {
      for (int i = 0; i < n; ++i) {
        double r = std::exp(eta(i, 0));
        double big_a = 0.0;
        for (int c = 0; c < D; ++c) big_a += std::exp(eta(i, c + 1));
        long tot = data.y.row_totals(i);
        if (d == 0) {
          double w = r * std::log1p(big_a);
          double sv = r * sum_reciprocal(r, tot, mode);
          cw.w(i) = w;
          cw.z(i) = eta(i, 0) + (sv - w) / w;
        } else {
          double w = std::exp(eta(i, d)) * (r + tot) / (1.0 + big_a);
          cw.w(i) = w;
          cw.z(i) = eta(i, d) + (y(i, d - 1) - w) / w;
        }
      }
      break;
    }
    case ModelKind::GDM: {
      Eigen::MatrixXi zeta = suffix_totals(y);
      const bool alpha_col = d < D - 1;
      const int cat = alpha_col ? d : d - (D - 1);  // stick-breaking step
      for (int i = 0; i < n; ++i) {
        if (zeta(i, cat) == 0) {  // no counts left at this step
          cw.w(i) = 0.0;
          cw.z(i) = 0.0;
          continue;
        }
        double a = std::exp(eta(i, cat));
        double b = std::exp(eta(i, D - 1 + cat));
        if (alpha_col) {
          double w = a * sum_reciprocal(a + b, zeta(i, cat), mode);
          double sv = a * sum_reciprocal(a, y(i, cat), mode);
          cw.w(i) = w;
          cw.z(i) = eta(i, d) + (sv - w) / w;
        } else {
          double w = b * sum_reciprocal(a + b, zeta(i, cat), mode);
          double sv = b * sum_reciprocal(b, zeta(i, cat + 1), mode);
          cw.w(i) = w;
          cw.z(i) = eta(i, d) + (sv - w) / w;
        }
      }
      break;
    }
  }
  return cw;
}

namespace {

// conditional-binomial split of tot across probs (which sum to 1)
Eigen::VectorXi multinomial_split(std::mt19937_64& eng, int tot,
                                  const Eigen::VectorXd& probs) {
  const int D = static_cast<int>(probs.size());
  Eigen::VectorXi out = Eigen::VectorXi::Zero(D);
  int rem = tot;
  double mass = 1.0;
  for (int d = 0; d + 1 < D; ++d) {
    if (rem == 0) break;
    double pc = mass > 0 ? probs(d) / mass : 1.0;
    pc = std::clamp(pc, 0.0, 1.0);
    std::binomial_distribution<int> bin(rem, pc);
    int yd = bin(eng);
    out(d) = yd;
    rem -= yd;
    mass -= probs(d);
  }
  out(D - 1) = rem;
  return out;
}

double gamma_draw(std::mt19937_64& eng, double shape) {
  std::gamma_distribution<double> g(shape, 1.0);
  return g(eng);
}

}  // namespace

Eigen::MatrixXi sample_counts(const CoefficientMatrix& coef,
                              const Eigen::MatrixXd& x_with_intercept,
                              const Eigen::VectorXi& totals, std::uint64_t seed) {
  const int n = static_cast<int>(x_with_intercept.rows());
  const int D = coef.D;
  if (coef.kind != ModelKind::NM && totals.size() != n)
    throw std::invalid_argument("totals length must match rows");
  Eigen::MatrixXd eta = x_with_intercept * coef.b;
  for (Eigen::Index i = 0; i < eta.rows(); ++i)
    for (Eigen::Index c = 0; c < eta.cols(); ++c)
      eta(i, c) = clamp_eta(eta(i, c), nullptr);

  Eigen::MatrixXi out(n, D);
  for (int i = 0; i < n; ++i) {
    auto eng = rng::stream(seed, rng::tag_counts, static_cast<std::uint64_t>(i));
    switch (coef.kind) {
      case ModelKind::MN: {
        Eigen::VectorXd probs(D);
        double m = 0.0;
        for (int d = 0; d < D - 1; ++d) m = std::max(m, eta(i, d));
        double se = std::exp(-m);
        for (int d = 0; d < D - 1; ++d) se += std::exp(eta(i, d) - m);
        for (int d = 0; d < D - 1; ++d) probs(d) = std::exp(eta(i, d) - m) / se;
        probs(D - 1) = std::exp(-m) / se;
        out.row(i) = multinomial_split(eng, totals(i), probs);
        break;
      }
      case ModelKind::DM: {
        Eigen::VectorXd g(D);
        double gs = 0.0, as = 0.0;
        for (int d = 0; d < D; ++d) {
          double a = std::exp(eta(i, d));
          g(d) = gamma_draw(eng, a);
          gs += g(d);
          as += a;
        }
        Eigen::VectorXd probs =
            gs > 0 ? Eigen::VectorXd(g / gs)
                   : Eigen::VectorXd(eta.row(i).array().exp() / as);
        out.row(i) = multinomial_split(eng, totals(i), probs);
        break;
      }
      case ModelKind::GDM: {
        int rem = totals(i);
        for (int d = 0; d < D - 1; ++d) {
          double a = std::exp(eta(i, d));
          double b = std::exp(eta(i, D - 1 + d));
          double g1 = gamma_draw(eng, a), g2 = gamma_draw(eng, b);
          double pc = (g1 + g2) > 0 ? g1 / (g1 + g2) : a / (a + b);
          std::binomial_distribution<int> bin(rem, std::clamp(pc, 0.0, 1.0));
          int yd = rem > 0 ? bin(eng) : 0;
          out(i, d) = yd;
          rem -= yd;
        }
        out(i, D - 1) = rem;
        break;
      }
      case ModelKind::NM: {
        double r = std::exp(eta(i, 0));
        double big_a = 0.0;
        Eigen::VectorXd probs(D);
        for (int d = 0; d < D; ++d) {
          probs(d) = std::exp(eta(i, d + 1));
          big_a += probs(d);
        }
        probs /= big_a;
        int tot = 0;
        for (int attempt = 0; attempt < 1000 && tot == 0; ++attempt) {
          double g = gamma_draw(eng, r);
          std::poisson_distribution<int> pois(std::max(g * big_a, 1e-300));
          tot = pois(eng);
        }
        if (tot == 0) tot = 1;
        out.row(i) = multinomial_split(eng, tot, probs);
        break;
      }
    }
  }
  return out;
}

}  // namespace countreg
