#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace countreg {

// n x (p+1) design with an explicit leading intercept column of ones.
// Column 0 is never penalized anywhere downstream.
struct DesignMatrix {
  Eigen::MatrixXd values;                     // n x (p+1)
  std::vector<std::string> covariate_names;   // size p, excludes intercept
  int n() const { return static_cast<int>(values.rows()); }
  int p() const { return static_cast<int>(values.cols()) - 1; }
};

struct CountMatrix {
  Eigen::MatrixXi values;                // n x D, non-negative
  std::vector<std::string> taxa_names;   // size D
  Eigen::VectorXi row_totals;            // y_{i+}
  int n() const { return static_cast<int>(values.rows()); }
  int D() const { return static_cast<int>(values.cols()); }
};

// Per-covariate centering/scaling record (population sd, i.e. divide by n).
struct Standardization {
  std::vector<double> mean;
  std::vector<double> sd;
};

struct CountDataset {
  DesignMatrix x;
  CountMatrix y;
  std::optional<Standardization> standardization;  // present iff standardized
  int n() const { return x.n(); }
  int p() const { return x.p(); }
  int D() const { return y.D(); }
};

// Plain numeric CSV: comma-delimited, UTF-8, first row headers, no index
// column. Ragged rows or non-numeric cells raise std::runtime_error naming
// the file and the offending 1-based data row.
struct CsvTable {
  std::vector<std::string> headers;
  std::vector<std::vector<double>> rows;
};

CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const std::vector<std::string>& headers,
               const std::vector<std::vector<double>>& rows);

// Assemble a dataset from separate covariate and count files. Rows are
// matched positionally; a row-count mismatch is an error naming both files
// and their counts. Count cells within 1e-9 of an integer are rounded,
// anything else (or negative, or an all-zero row) is an error. When
// standardize is set every covariate column is centered and scaled by its
// population sd; constant columns are rejected.
CountDataset load_dataset(const std::string& covariates_path,
                          const std::string& counts_path, bool standardize);

// Same validation/standardization path for matrices already in memory.
CountDataset make_dataset(const Eigen::MatrixXd& covariates,
                          const Eigen::MatrixXi& counts, bool standardize,
                          std::vector<std::string> covariate_names = {},
                          std::vector<std::string> taxa_names = {});

// Presence/absence indicator of the count matrix.
Eigen::MatrixXi indicator_c(const CountMatrix& y);

// Write the dataset back out (stored covariate columns, i.e. standardized
// values if standardization was applied). Reloading with standardize=false
// reproduces the stored matrices exactly: doubles go through round-trip
// formatting, counts are integers.
void write_covariates_csv(const CountDataset& ds, const std::string& path);
void write_counts_csv(const CountDataset& ds, const std::string& path);

}  // namespace countreg
