#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "countreg/model_data.hpp"
#include "countreg/penalty.hpp"
#include "countreg/series.hpp"

namespace countreg {

// The four regression families over a D-category count response.
//  MN : multinomial logit, category D is the reference.
//  DM : Dirichlet-multinomial, one log-linear concentration per category.
//  NM : negative multinomial, one overdispersion column plus D category
//       columns.
//  GDM: generalized Dirichlet-multinomial, a (alpha, beta) column pair per
//       stick-breaking step d = 1..D-1.
enum class ModelKind { MN, DM, NM, GDM };

ModelKind parse_model_kind(const std::string& name);
std::string model_kind_name(ModelKind kind);

// Number of coefficient columns the family actually fits.
int effective_columns(ModelKind kind, int D);

// Human-readable role of each coefficient column, e.g. "beta[2]", "alpha[1]".
std::vector<std::string> column_roles(ModelKind kind, int D);

// (p+1) x d_e coefficient block; row 0 holds intercepts.
struct CoefficientMatrix {
  ModelKind kind = ModelKind::DM;
  int D = 0;
  Eigen::MatrixXd b;
  int p() const { return static_cast<int>(b.rows()) - 1; }
  int d_e() const { return static_cast<int>(b.cols()); }
};

CoefficientMatrix make_coef(ModelKind kind, int D, int p);

// Row-major flattening of the penalized cells (covariate rows 1..p, all
// columns); the cell order row_groups() assumes.
Eigen::VectorXd flatten_cells(const CoefficientMatrix& coef);
void unflatten_cells(const Eigen::VectorXd& cells, CoefficientMatrix* coef);

// Model log-likelihood, exact up to the data-only multinomial coefficients,
// which are included so values are comparable across models. The Direct mode
// evaluates the count series by plain loops; GammaDiff uses digamma/lgamma
// differences and is what the engine uses on deep-count data.
double loglik(const CoefficientMatrix& coef, const CountDataset& data,
              SumMode mode = SumMode::Direct);

// One column's weighted-Poisson working set for the reweighted ridge step:
// weights w and responses z such that minimizing
//   sum_i w_i (z_i - x_i' v)^2  (+ ridge)
// is the model's tangent surrogate step in column d at coef. Rows with zero
// weight (possible for GDM tail categories with no remaining counts) carry
// z = 0 and drop out of the solve.
struct ColumnWorking {
  Eigen::VectorXd w;
  Eigen::VectorXd z;
  long clamp_events = 0;
};

ColumnWorking irprr_working(const CoefficientMatrix& coef, const CountDataset& data,
                            int d, SumMode mode = SumMode::GammaDiff);

// Draw an n x D count matrix from the model at coef. MN, DM and GDM split
// the supplied row totals; NM generates its own totals (rows that come out
// all zero are redrawn so downstream validation accepts the data). Row i
// consumes an independent stream keyed by (seed, row), so results do not
// depend on evaluation order.
Eigen::MatrixXi sample_counts(const CoefficientMatrix& coef,
                              const Eigen::MatrixXd& x_with_intercept,
                              const Eigen::VectorXi& totals, std::uint64_t seed);

// Group structure matching flatten_cells: one group per covariate row.
GroupStructure model_row_groups(ModelKind kind, int p, int D);

}  // namespace countreg
