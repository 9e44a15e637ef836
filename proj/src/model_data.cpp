#include "countreg/model_data.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace countreg {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_cell(const std::string& s, const std::string& path, std::size_t row,
                  std::size_t col) {
  const char* b = s.data();
  const char* e = b + s.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  while (e > b && (*(e - 1) == ' ' || *(e - 1) == '\t')) --e;
  double v = 0.0;
  auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e || b == e)
    throw std::runtime_error(path + ": row " + std::to_string(row) + ", column " +
                             std::to_string(col) + ": cannot parse '" + s +
                             "' as a number");
  return v;
}

}  // namespace

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  t.headers = split_line(line);
  std::size_t data_row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++data_row;
    auto cells = split_line(line);
    if (cells.size() != t.headers.size())
      throw std::runtime_error(path + ": row " + std::to_string(data_row) + " has " +
                               std::to_string(cells.size()) + " fields, expected " +
                               std::to_string(t.headers.size()));
    std::vector<double> row(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c)
      row[c] = parse_cell(cells[c], path, data_row, c + 1);
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_csv(const std::string& path, const std::vector<std::string>& headers,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (std::size_t c = 0; c < headers.size(); ++c)
    out << (c ? "," : "") << headers[c];
  out << "\n";
  char buf[40];
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << ",";
      double v = row[c];
      if (v == std::floor(v) && std::abs(v) < 1e15) {
        std::snprintf(buf, sizeof buf, "%.0f", v);
      } else {
        std::snprintf(buf, sizeof buf, "%.17g", v);
      }
      out << buf;
    }
    out << "\n";
  }
}

CountDataset make_dataset(const Eigen::MatrixXd& covariates,
                          const Eigen::MatrixXi& counts, bool standardize,
                          std::vector<std::string> covariate_names,
                          std::vector<std::string> taxa_names) {
  const int n = static_cast<int>(covariates.rows());
  const int p = static_cast<int>(covariates.cols());
  const int D = static_cast<int>(counts.cols());
  if (counts.rows() != n)
    throw std::runtime_error("covariates have " + std::to_string(n) +
                             " rows but counts have " + std::to_string(counts.rows()));
  if (D < 2) throw std::runtime_error("need at least 2 count categories");
  if ((counts.array() < 0).any()) throw std::runtime_error("negative count");

  CountDataset ds;
  ds.x.values.resize(n, p + 1);
  ds.x.values.col(0).setOnes();
  ds.x.values.rightCols(p) = covariates;
  if (covariate_names.empty())
    for (int j = 1; j <= p; ++j) covariate_names.push_back("x" + std::to_string(j));
  ds.x.covariate_names = std::move(covariate_names);

  ds.y.values = counts;
  ds.y.row_totals = counts.rowwise().sum();
  for (int i = 0; i < n; ++i)
    if (ds.y.row_totals(i) == 0)
      throw std::runtime_error("count row " + std::to_string(i + 1) +
                               " has zero total");
  if (taxa_names.empty())
    for (int d = 1; d <= D; ++d) taxa_names.push_back("taxon" + std::to_string(d));
  ds.y.taxa_names = std::move(taxa_names);

  if (standardize) {
    Standardization st;
    for (int j = 1; j <= p; ++j) {
      auto col = ds.x.values.col(j);
      double mean = col.mean();
      double sd = std::sqrt((col.array() - mean).square().sum() / n);
      if (sd == 0.0)
        throw std::runtime_error("covariate column " + std::to_string(j) +
                                 " is constant; cannot standardize");
      col = (col.array() - mean) / sd;
      st.mean.push_back(mean);
      st.sd.push_back(sd);
    }
    ds.standardization = std::move(st);
  }
  return ds;
}

CountDataset load_dataset(const std::string& covariates_path,
                          const std::string& counts_path, bool standardize) {
  CsvTable xt = read_csv(covariates_path);
  CsvTable yt = read_csv(counts_path);
  if (xt.rows.size() != yt.rows.size())
    throw std::runtime_error(covariates_path + " has " +
                             std::to_string(xt.rows.size()) + " data rows but " +
                             counts_path + " has " + std::to_string(yt.rows.size()));
  const int n = static_cast<int>(xt.rows.size());
  if (n == 0) throw std::runtime_error(covariates_path + ": no data rows");
  const int p = static_cast<int>(xt.headers.size());
  const int D = static_cast<int>(yt.headers.size());

  Eigen::MatrixXd covs(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) covs(i, j) = xt.rows[i][j];

  Eigen::MatrixXi counts(n, D);
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < D; ++d) {
      double v = yt.rows[i][d];
      double r = std::round(v);
      if (r < 0 || std::abs(v - r) > 1e-9)
        throw std::runtime_error(counts_path + ": row " + std::to_string(i + 1) +
                                 ", column " + std::to_string(d + 1) +
                                 ": counts must be non-negative integers, got " +
                                 std::to_string(v));
      counts(i, d) = static_cast<int>(r);
    }
  return make_dataset(covs, counts, standardize, xt.headers, yt.headers);
}

Eigen::MatrixXi indicator_c(const CountMatrix& y) {
  return (y.values.array() > 0).cast<int>();
}

void write_covariates_csv(const CountDataset& ds, const std::string& path) {
  const int n = ds.n(), p = ds.p();
  std::vector<std::vector<double>> rows(n, std::vector<double>(p));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) rows[i][j] = ds.x.values(i, j + 1);
  write_csv(path, ds.x.covariate_names, rows);
}

void write_counts_csv(const CountDataset& ds, const std::string& path) {
  const int n = ds.n(), D = ds.D();
  std::vector<std::vector<double>> rows(n, std::vector<double>(D));
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < D; ++d) rows[i][d] = ds.y.values(i, d);
  write_csv(path, ds.y.taxa_names, rows);
}

}  // namespace countreg
